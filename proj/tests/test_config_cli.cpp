#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cxrlab/app/cli.hpp"
#include "cxrlab/app/config.hpp"
#include "cxrlab/core/error.hpp"
#include "cxrlab/core/image_io.hpp"
#include "cxrlab/data/dataset.hpp"
#include "cxrlab/eval/evaluation.hpp"
#include "cxrlab/train/training.hpp"

using namespace cxr;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int rc = 0;
  std::string out;
  std::string err;
};

CliResult runCli(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliResult r;
  r.rc = app::cli::run(std::move(args), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path freshDir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("cxrlab_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void writeFile(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

std::string firstLine(const fs::path& path) {
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  return line;
}

std::string desk32Config(const fs::path& manifest) {
  nlohmann::json j = {
      {"data", {{"manifest", manifest.string()}, {"testFraction", 0.25}}},
      {"preproc", {{"targetH", 32}, {"targetW", 32}}},
      {"pretext", {{"queueSize", 32}}},
      {"train",
       {{"epochs", 2}, {"batchSize", 8}, {"seed", 3}, {"valFraction", 0.0}}},
  };
  return j.dump(2);
}

/// Dataset, config file, and one trained baseline run, built once and shared
/// by the read-only cases below.
struct Fixture {
  fs::path root;
  fs::path manifest;
  fs::path cfgPath;
  fs::path baseDir;
  fs::path baseCkpt;
};

const Fixture& baselineFixture() {
  static const Fixture fx = [] {
    Fixture f;
    f.root = freshDir("fixture");
    auto records = data::generatePhantomDataset(48, 32, 32, 5);
    data::writeDataset(records, (f.root / "data").string());
    f.manifest = f.root / "data" / "manifest.csv";
    f.cfgPath = f.root / "cfg.json";
    writeFile(f.cfgPath, desk32Config(f.manifest));
    f.baseDir = f.root / "base";
    auto r = runCli({"--config", f.cfgPath.string(), "train", "--mode",
                     "baseline", "--out", f.baseDir.string()});
    if (r.rc != 0)
      throw std::runtime_error("fixture training failed: " + r.err);
    f.baseCkpt = f.baseDir / "baseline_final.ckpt";
    return f;
  }();
  return fx;
}

struct EnvSeedGuard {
  ~EnvSeedGuard() { unsetenv("CXRLAB_SEED"); }
};

}  // namespace

TEST_CASE("an empty config document yields the documented defaults") {
  app::ExperimentConfig def;
  auto fromEmpty = app::ExperimentConfig::fromJson(nlohmann::json::object());
  CHECK((def == fromEmpty));

  CHECK(def.model.backbone == "tiny_cnn");
  CHECK(def.preproc.targetH == 224);
  CHECK(def.pretext.method == "moco");
  CHECK(def.pretext.queueSize == 4096);
  CHECK(def.train.stage3ClassWeights ==
        std::vector<double>{0.2, 0.2, 0.3, 0.3});
  CHECK(def.interpret.layer == "features");
  CHECK(def.data.kfold == 1);
}

TEST_CASE("configs round trip through json without drift") {
  app::ExperimentConfig cfg;
  cfg.data.manifest = "somewhere/manifest.csv";
  cfg.preproc.histEq = true;
  cfg.pretext.method = "inpaint";
  cfg.pretext.tau = 0.11;
  cfg.train.classWeights = {0.1, 0.2, 0.3, 0.4};
  cfg.train.schedule = "cosine";
  cfg.interpret.maxImages = 3;

  auto back = app::ExperimentConfig::fromJson(cfg.toJson());
  CHECK((back == cfg));
  CHECK(back.toJson() == cfg.toJson());
  CHECK(back.hash() == cfg.hash());
}

TEST_CASE("config hashes are sixteen hex digits keyed on content") {
  app::ExperimentConfig a;
  std::string h = a.hash();
  CHECK(h.size() == 16);
  for (char c : h) CHECK(std::isxdigit(static_cast<unsigned char>(c)));

  app::ExperimentConfig b;
  CHECK(a.hash() == b.hash());
  b.train.lr = 5e-4;
  CHECK(a.hash() != b.hash());
  b.train.lr = a.train.lr;
  b.train.seed = 77;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("config parsing rejects unknown keys, wrong types, and bad values") {
  using app::ExperimentConfig;

  CHECK_THROWS_WITH_AS(
      ExperimentConfig::fromJson({{"data", {{"manfest", "x"}}}}),
      doctest::Contains("unknown config key 'data.manfest'"), ConfigError);
  CHECK_THROWS_WITH_AS(ExperimentConfig::fromJson({{"extra", {{"a", 1}}}}),
                       doctest::Contains("unknown config key 'config.extra'"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::fromJson({{"train", {{"epochs", "ten"}}}}),
      doctest::Contains("'train.epochs' has the wrong type"), ConfigError);
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::fromJson({{"train", {{"schedule", "sawtooth"}}}}),
      doctest::Contains("'train.schedule' has unsupported value 'sawtooth'"),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::fromJson({{"model", {{"backbone", "vgg"}}}}),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::fromJson({{"pretext", {{"method", "diffusion"}}}}),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::fromJson({{"pretext", {{"maskMode", "corners"}}}}),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::fromJson({{"interpret", {{"targetClass", "covid"}}}}),
      ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::fromJson({{"data", {{"kfold", 0}}}}),
                  ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::fromJson({{"data", {{"testFraction", 1.5}}}}),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::fromJson(
          {{"train", {{"classWeights", {0.5, 0.5}}}}}),
      ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::fromJson(nlohmann::json::array()),
                  ConfigError);
}

TEST_CASE("config loading distinguishes missing files from broken json") {
  fs::path dir = freshDir("cfgload");
  CHECK_THROWS_AS(app::ExperimentConfig::load((dir / "absent.json").string()),
                  IoError);

  writeFile(dir / "broken.json", "{\"train\": ");
  CHECK_THROWS_AS(app::ExperimentConfig::load((dir / "broken.json").string()),
                  ParseError);

  app::ExperimentConfig cfg;
  cfg.train.epochs = 7;
  writeFile(dir / "ok.json", cfg.toJson().dump(2));
  auto loaded = app::ExperimentConfig::load((dir / "ok.json").string());
  CHECK((loaded == cfg));
}

TEST_CASE("the resolved config maps onto a runnable training setup") {
  app::ExperimentConfig cfg;
  cfg.pretext.variant = "cxr_modified";
  cfg.pretext.maskMode = "center";
  cfg.train.epochs = 5;
  cfg.train.schedule = "cosine";
  cfg.train.stage3Dice = 0.7;

  auto tc = cfg.trainConfig(train::Recipe::multitask);
  CHECK((tc.recipe == train::Recipe::multitask));
  CHECK((tc.backbone == nn::BackboneName::tinyCnn));
  CHECK((tc.schedule == train::Schedule::cosine));
  CHECK((tc.mocoVariant == data::MocoVariant::cxrModified));
  CHECK((tc.maskMode == train::MaskMode::center));
  CHECK(tc.epochs == 5);
  CHECK(tc.stage3Dice == 0.7);
  CHECK(tc.configHash == cfg.hash());
}

TEST_CASE("help requests and malformed command lines exit cleanly") {
  auto help = runCli({"--help"});
  CHECK(help.rc == 0);
  CHECK(help.out.find("synth") != std::string::npos);
  CHECK(help.out.find("interpret") != std::string::npos);

  CHECK(runCli({}).rc == 2);
  CHECK(runCli({"synth", "--bogus-flag", "1", "--out", "x"}).rc == 2);
  CHECK(runCli({"pretrain", "--method", "frobnicate", "--out", "x"}).rc == 2);
  CHECK(runCli({"--config", "/no/such/config.json", "synth", "--out", "x"})
            .rc == 2);
}

TEST_CASE("synth writes a reproducible dataset with balanced classes") {
  fs::path dir = freshDir("synth");
  auto r = runCli({"synth", "--n", "8", "--size", "64", "--seed", "1", "--out",
                   (dir / "a").string()});
  CHECK(r.rc == 0);
  CHECK(r.out.find("8 images") != std::string::npos);

  auto records = data::loadManifest((dir / "a" / "manifest.csv").string());
  REQUIRE(records.size() == 8);
  int counts[data::kNumClasses] = {};
  for (const auto& rec : records) ++counts[static_cast<int>(rec.label)];
  for (int c = 0; c < data::kNumClasses; ++c) CHECK(counts[c] == 2);

  // same seed, second directory: every file byte-identical
  CHECK(runCli({"synth", "--n", "8", "--size", "64", "--seed", "1", "--out",
                (dir / "b").string()})
            .rc == 0);
  for (const auto& rec : records) {
    fs::path rel = fs::path("images") / (rec.id + ".png");
    CHECK(slurp(dir / "a" / rel) == slurp(dir / "b" / rel));
  }

  // every phantom carries the config hash in a png text chunk
  std::string tag = readPngConfigTag((dir / "a" / "images" /
                                      (records[0].id + ".png"))
                                         .string());
  CHECK(tag == app::ExperimentConfig{}.hash());

  CHECK(runCli({"synth", "--n", "3", "--out", (dir / "c").string()}).rc == 2);
  writeFile(dir / "blocker", "");
  CHECK(runCli({"synth", "--n", "8", "--out",
                (dir / "blocker" / "sub").string()})
            .rc == 2);
}

TEST_CASE("pretraining logs the quantities each method is judged by") {
  const Fixture& fx = baselineFixture();
  fs::path dir = freshDir("pretrain");

  auto inp = runCli({"--config", fx.cfgPath.string(), "pretrain", "--method",
                     "inpaint", "--mask-mode", "center", "--out",
                     (dir / "inp").string()});
  CHECK(inp.rc == 0);
  CHECK(fs::exists(dir / "inp" / "inpaint_final.ckpt"));
  {
    std::ifstream log(dir / "inp" / "train_log.jsonl");
    std::string line;
    std::getline(log, line);  // hash header
    CHECK(nlohmann::json::parse(line).contains("config_hash"));
    int epochs = 0;
    while (std::getline(log, line)) {
      auto j = nlohmann::json::parse(line);
      CHECK(j.contains("maskedMse"));
      ++epochs;
    }
    CHECK(epochs == 2);
  }

  auto moco = runCli({"--config", fx.cfgPath.string(), "pretrain", "--method",
                      "moco", "--variant", "cxr_modified", "--out",
                      (dir / "moco").string()});
  CHECK(moco.rc == 0);
  {
    std::ifstream log(dir / "moco" / "train_log.jsonl");
    std::string line;
    std::getline(log, line);
    while (std::getline(log, line)) {
      auto j = nlohmann::json::parse(line);
      CHECK(j.at("tau").get<double>() == doctest::Approx(0.07));
    }
  }

  CHECK(runCli({"--config", fx.cfgPath.string(), "pretrain", "--variant",
                "vEleven", "--out", (dir / "bad").string()})
            .rc == 2);
}

TEST_CASE("training emits a scored report plus stamped confusion table") {
  const Fixture& fx = baselineFixture();

  REQUIRE(fs::exists(fx.baseCkpt));
  auto report = nlohmann::json::parse(slurp(fx.baseDir / "report.json"));
  double f1 = report.at("f1_macro").get<double>();
  CHECK(f1 >= 0.0);
  CHECK(f1 <= 1.0);
  CHECK(report.at("config_hash").is_string());

  std::string hash = report["config_hash"].get<std::string>();
  CHECK(firstLine(fx.baseDir / "confusion.csv") == "# config_hash=" + hash);
  CHECK(firstLine(fx.baseDir / "train_log.jsonl") ==
        nlohmann::json{{"config_hash", hash}}.dump());

  // re-running under --verify with the same config accepts everything
  auto ver = runCli({"--config", fx.cfgPath.string(), "--verify", "train",
                     "--mode", "baseline", "--out", fx.baseDir.string()});
  CHECK(ver.rc == 0);
  CHECK(ver.out.find("0 mismatched") != std::string::npos);

  // and rejects the same artifacts under a different config
  app::ExperimentConfig other = app::ExperimentConfig::load(
      fx.cfgPath.string());
  other.train.lr = 9e-4;
  fs::path otherCfg = fx.root / "other.json";
  writeFile(otherCfg, other.toJson().dump(2));
  auto bad = runCli({"--config", otherCfg.string(), "--verify", "train",
                     "--mode", "baseline", "--out", fx.baseDir.string()});
  CHECK(bad.rc == 3);
  CHECK(bad.err.find("carries config hash") != std::string::npos);
}

TEST_CASE("multitask without its first stage still trains end to end") {
  const Fixture& fx = baselineFixture();
  fs::path dir = freshDir("mt");
  auto r = runCli({"--config", fx.cfgPath.string(), "train", "--mode",
                   "multitask", "--skip-stage1", "--out", dir.string()});
  CHECK(r.rc == 0);
  CHECK(fs::exists(dir / "stage3_final.ckpt"));
  CHECK_FALSE(fs::exists(dir / "stage1_final.ckpt"));
  auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report.at("f1_macro").get<double>() >= 0.0);
}

TEST_CASE("cross validation leaves one report per fold and a mean summary") {
  const Fixture& fx = baselineFixture();
  fs::path dir = freshDir("kfold");
  auto r = runCli({"--config", fx.cfgPath.string(), "train", "--kfold", "3",
                   "--out", dir.string()});
  REQUIRE(r.rc == 0);

  std::vector<double> f1s;
  for (int i = 0; i < 3; ++i) {
    fs::path rep = dir / ("fold_" + std::to_string(i)) / "report.json";
    REQUIRE(fs::exists(rep));
    f1s.push_back(
        nlohmann::json::parse(slurp(rep)).at("f1_macro").get<double>());
  }

  auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  std::string formatted = summary.at("f1").get<std::string>();
  CHECK(formatted.find(" ± ") != std::string::npos);

  double mean = (f1s[0] + f1s[1] + f1s[2]) / 3.0;
  double var = 0.0;
  for (double v : f1s) var += (v - mean) * (v - mean);
  double sd = std::sqrt(var / 3.0);
  CHECK(formatted == eval::formatMeanStd(mean, sd, 4));
}

TEST_CASE("weight transfer flags incompatible checkpoints with both shapes") {
  const Fixture& fx = baselineFixture();
  fs::path dir = freshDir("transfer");

  auto inp = runCli({"--config", fx.cfgPath.string(), "pretrain", "--method",
                     "inpaint", "--out", (dir / "inp").string()});
  REQUIRE(inp.rc == 0);
  fs::path inpCkpt = dir / "inp" / "inpaint_final.ckpt";

  // encoder transfer into a matching classifier works
  auto ft = runCli({"--config", fx.cfgPath.string(), "train", "--init-from",
                    inpCkpt.string(), "--out", (dir / "ft").string()});
  CHECK(ft.rc == 0);
  CHECK(fs::exists(dir / "ft" / "finetune_final.ckpt"));

  // a different input resolution is refused, naming both sizes
  app::ExperimentConfig big =
      app::ExperimentConfig::load(fx.cfgPath.string());
  big.preproc.targetH = big.preproc.targetW = 64;
  fs::path bigCfg = dir / "big.json";
  writeFile(bigCfg, big.toJson().dump(2));
  auto bad = runCli({"--config", bigCfg.string(), "train", "--init-from",
                     inpCkpt.string(), "--out", (dir / "ftbad").string()});
  CHECK(bad.rc == 3);
  CHECK(bad.err.find("32x32") != std::string::npos);
  CHECK(bad.err.find("64x64") != std::string::npos);

  // an encoder-only checkpoint cannot be evaluated as a classifier
  auto ev = runCli({"--config", fx.cfgPath.string(), "eval", "--checkpoint",
                    inpCkpt.string(), "--out", (dir / "ev").string()});
  CHECK(ev.rc == 3);
  CHECK(runCli({"--config", fx.cfgPath.string(), "eval", "--checkpoint",
                (dir / "nope.ckpt").string(), "--out",
                (dir / "ev2").string()})
            .rc == 3);
}

TEST_CASE("evaluating the same checkpoint twice is byte identical") {
  const Fixture& fx = baselineFixture();
  fs::path dir = freshDir("evaltwice");
  auto a = runCli({"--config", fx.cfgPath.string(), "eval", "--checkpoint",
                   fx.baseCkpt.string(), "--out", (dir / "a").string()});
  auto b = runCli({"--config", fx.cfgPath.string(), "eval", "--checkpoint",
                   fx.baseCkpt.string(), "--out", (dir / "b").string()});
  REQUIRE(a.rc == 0);
  REQUIRE(b.rc == 0);
  CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
  CHECK(slurp(dir / "a" / "confusion.csv") ==
        slurp(dir / "b" / "confusion.csv"));
  CHECK(a.out == b.out);
}

TEST_CASE("pairwise ablations cover all four class pairings") {
  const Fixture& fx = baselineFixture();
  fs::path dir = freshDir("ablate");
  auto r = runCli({"--config", fx.cfgPath.string(), "ablate", "--pairs", "all",
                   "--out", dir.string()});
  REQUIRE(r.rc == 0);

  std::ifstream csv(dir / "ablation.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line.rfind("# config_hash=", 0) == 0);
  std::getline(csv, line);
  CHECK(line == "pair,f1_positive,f1_macro,accuracy,skipped");
  std::vector<std::string> rows;
  while (std::getline(csv, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rfind("typical_vs_indeterminate,", 0) == 0);
  CHECK(rows[1].rfind("atypical_vs_indeterminate,", 0) == 0);
  CHECK(rows[2].rfind("typical_vs_atypical,", 0) == 0);
  CHECK(rows[3].rfind("positive_vs_negative,", 0) == 0);

  auto json = nlohmann::json::parse(slurp(dir / "ablation.json"));
  CHECK(json.at("pairs").size() == 4);

  auto one = runCli({"--config", fx.cfgPath.string(), "ablate", "--pairs",
                     "positive_vs_negative", "--out",
                     (dir / "one").string()});
  CHECK(one.rc == 0);
  CHECK(one.out.find("positive_vs_negative") != std::string::npos);
  CHECK(one.out.find("typical_vs_atypical") == std::string::npos);

  CHECK(runCli({"--config", fx.cfgPath.string(), "ablate", "--pairs",
                "cats_vs_dogs", "--out", (dir / "bad").string()})
            .rc == 2);
}

TEST_CASE("interpret writes stamped artifacts for each analysis target") {
  const Fixture& fx = baselineFixture();
  fs::path dir = freshDir("interpret");

  auto g = runCli({"--config", fx.cfgPath.string(), "interpret", "gradcam",
                   "--checkpoint", fx.baseCkpt.string(), "--class", "typical",
                   "--out", (dir / "g").string()});
  REQUIRE(g.rc == 0);
  auto records = data::loadManifest(fx.manifest.string());
  auto split = data::makeSplit(records, 0.25, 3);
  int pngs = 0;
  for (const auto& entry : fs::directory_iterator(dir / "g"))
    if (entry.path().extension() == ".png") {
      CHECK(readPngConfigTag(entry.path().string()).size() == 16);
      ++pngs;
    }
  CHECK(pngs == static_cast<int>(split.testIds.size()));

  auto b = runCli({"--config", fx.cfgPath.string(), "interpret", "boxstats",
                   "--out", (dir / "b").string()});
  CHECK(b.rc == 0);  // no checkpoint needed for box statistics
  CHECK(firstLine(dir / "b" / "box_dims.csv").rfind("# config_hash=", 0) == 0);
  CHECK(fs::exists(dir / "b" / "box_dim_hist.csv"));

  auto e = runCli({"--config", fx.cfgPath.string(), "interpret", "embeddings",
                   "--checkpoint", fx.baseCkpt.string(), "--out",
                   (dir / "e").string()});
  CHECK(e.rc == 0);
  CHECK(firstLine(dir / "e" / "embeddings.csv").rfind("# config_hash=", 0) ==
        0);
  CHECK(fs::exists(dir / "e" / "embedding_scatter.csv"));

  auto f = runCli({"--config", fx.cfgPath.string(), "interpret", "features",
                   "--checkpoint", fx.baseCkpt.string(), "--out",
                   (dir / "f").string()});
  CHECK(f.rc == 0);
  bool sawJson = false;
  for (const auto& entry : fs::directory_iterator(dir / "f"))
    if (entry.path().extension() == ".json") {
      sawJson = true;
      CHECK(nlohmann::json::parse(slurp(entry.path()))
                .contains("config_hash"));
    }
  CHECK(sawJson);

  CHECK(runCli({"--config", fx.cfgPath.string(), "interpret", "gradcam",
                "--out", (dir / "nock").string()})
            .rc == 3);
  CHECK(runCli({"--config", fx.cfgPath.string(), "interpret", "dreams",
                "--out", (dir / "bad").string()})
            .rc == 2);
}

TEST_CASE("the environment seed override feeds the hash and rejects garbage") {
  EnvSeedGuard guard;
  fs::path dir = freshDir("envseed");

  setenv("CXRLAB_SEED", "123", 1);
  auto r = runCli({"synth", "--n", "4", "--out", (dir / "a").string()});
  REQUIRE(r.rc == 0);

  app::ExperimentConfig expect;
  expect.train.seed = 123;
  std::string tag = readPngConfigTag(
      (dir / "a" / "images" / "phantom_00000.png").string());
  CHECK(tag == expect.hash());
  CHECK(tag != app::ExperimentConfig{}.hash());

  setenv("CXRLAB_SEED", "12abc", 1);
  auto bad = runCli({"synth", "--n", "4", "--out", (dir / "b").string()});
  CHECK(bad.rc == 2);
  CHECK(bad.err.find("CXRLAB_SEED") != std::string::npos);
}
