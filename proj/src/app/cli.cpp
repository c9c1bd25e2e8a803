#include "cxrlab/app/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cxrlab/app/config.hpp"
#include "cxrlab/core/error.hpp"
#include "cxrlab/core/image_io.hpp"
#include "cxrlab/core/rng.hpp"
#include "cxrlab/data/dataset.hpp"
#include "cxrlab/eval/evaluation.hpp"
#include "cxrlab/eval/interpret.hpp"
#include "cxrlab/nn/adam.hpp"
#include "cxrlab/nn/checkpoint.hpp"
#include "cxrlab/nn/graph.hpp"
#include "cxrlab/nn/losses.hpp"
#include "cxrlab/nn/models.hpp"
#include "cxrlab/train/training.hpp"

namespace cxr::app::cli {
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kArtifact = 3;
constexpr int kDiverged = 4;

struct Invocation {
  std::string configPath;
  bool verify = false;
  std::string outDir;
  // synth
  int n = 32;
  int size = 64;
  std::uint64_t seed = 0;
  // pretrain
  std::string method;
  std::string variant;
  std::string maskMode;
  int epochsOverride = 0;
  // train
  std::string mode = "baseline";
  std::string initFrom;
  bool skipStage1 = false;
  int kfold = 0;
  // eval / ablate / interpret
  std::string checkpoint;
  std::string pairs = "all";
  std::string target = "all";
  std::string targetClass;
  std::string layer;
};

void ensureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create output directory " + dir + ": " +
                  ec.message());
  fs::path probe = fs::path(dir) / ".write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw IoError("output directory is not writable: " + dir);
  }
  fs::remove(probe, ec);
}

std::ofstream openOut(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

void writeJsonArtifact(const fs::path& path, nlohmann::json j,
                       const std::string& hash) {
  j["config_hash"] = hash;
  openOut(path) << j.dump(2) << '\n';
}

void writeTextArtifact(const fs::path& path, const std::string& hash,
                       const std::string& body) {
  openOut(path) << "# config_hash=" << hash << '\n' << body;
}

/// Re-writes a CSV produced by a library writer with the hash comment first.
void stampCsv(const fs::path& path, const std::string& hash) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read back " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  in.close();
  writeTextArtifact(path, hash, buf.str());
}

void stampJsonFile(const fs::path& path, const std::string& hash) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read back " + path.string());
  nlohmann::json j = nlohmann::json::parse(in);
  in.close();
  writeJsonArtifact(path, std::move(j), hash);
}

std::vector<data::ImageRecord> loadRecords(const ExperimentConfig& cfg) {
  if (cfg.data.manifest.empty())
    throw ConfigError("data.manifest must point to a dataset manifest CSV");
  return data::loadManifest(cfg.data.manifest);
}

std::string requireCheckpoint(const ExperimentConfig& cfg) {
  const std::string& path = cfg.eval.checkpoint;
  if (path.empty())
    throw CheckpointError(
        "no checkpoint given (use --checkpoint or eval.checkpoint)");
  if (!fs::exists(path)) throw CheckpointError("checkpoint not found: " + path);
  return path;
}

std::vector<data::ImageRecord> subsetByIds(
    const std::vector<data::ImageRecord>& records,
    const std::vector<std::string>& ids) {
  std::vector<data::ImageRecord> subset;
  subset.reserve(ids.size());
  for (const auto* rec : data::selectRecords(records, ids))
    subset.push_back(*rec);
  return subset;
}

// ---------------------------------------------------------------------------
// --verify: every artifact type records the config hash somewhere readable;
// recompute the hash from the resolved config and compare.

std::string storedHash(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".json") {
    std::ifstream in(path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_object() && j.contains("config_hash") &&
        j["config_hash"].is_string())
      return j["config_hash"].get<std::string>();
  } else if (ext == ".csv" || ext == ".jsonl") {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    const std::string prefix = "# config_hash=";
    if (first.rfind(prefix, 0) == 0) return first.substr(prefix.size());
    nlohmann::json j = nlohmann::json::parse(first, nullptr, false);
    if (j.is_object() && j.contains("config_hash") &&
        j["config_hash"].is_string())
      return j["config_hash"].get<std::string>();
  } else if (ext == ".png") {
    return readPngConfigTag(path.string());
  } else if (ext == ".ckpt") {
    nlohmann::json meta = nn::readCheckpointMeta(path.string());
    if (meta.contains("config_hash") && meta["config_hash"].is_string())
      return meta["config_hash"].get<std::string>();
  }
  return {};
}

int verifyArtifacts(const std::string& outDir, const std::string& hash,
                    std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(outDir)) {
    err << "verify: no such directory: " << outDir << '\n';
    return kArtifact;
  }
  int checked = 0, bad = 0;
  for (const auto& entry : fs::recursive_directory_iterator(outDir)) {
    if (!entry.is_regular_file()) continue;
    std::string found;
    try {
      found = storedHash(entry.path());
    } catch (const std::exception& e) {
      err << "verify: cannot inspect " << entry.path().string() << ": "
          << e.what() << '\n';
      ++bad;
      continue;
    }
    if (found.empty()) continue;
    ++checked;
    if (found != hash) {
      err << "verify: " << entry.path().string() << " carries config hash "
          << found << ", expected " << hash << '\n';
      ++bad;
    }
  }
  out << "verify: " << checked << " artifacts checked, " << bad
      << " mismatched\n";
  if (checked == 0) {
    err << "verify: no hashed artifacts under " << outDir << '\n';
    return kArtifact;
  }
  return bad ? kArtifact : kOk;
}

// ---------------------------------------------------------------------------
// Subcommand bodies. All receive the resolved config (flags and environment
// already folded in) and its hash.

int cmdSynth(const Invocation& inv, const std::string& hash,
             std::ostream& out) {
  (void)hash;  // phantom PNGs pick the tag up from the process-wide stamp
  ensureDir(inv.outDir);
  auto records =
      data::generatePhantomDataset(inv.n, inv.size, inv.size, inv.seed);
  data::writeDataset(records, inv.outDir);

  long counts[data::kNumClasses] = {};
  for (const auto& rec : records) ++counts[static_cast<int>(rec.label)];
  for (int c = 0; c < data::kNumClasses; ++c)
    out << data::toString(static_cast<data::ClassLabel>(c)) << ' ' << counts[c]
        << '\n';
  out << "wrote " << records.size() << " images and manifest.csv to "
      << inv.outDir << '\n';
  return kOk;
}

int cmdPretrain(const ExperimentConfig& cfg, const Invocation& inv,
                const std::string& hash, std::ostream& out) {
  ensureDir(inv.outDir);
  auto records = loadRecords(cfg);
  auto recipe = cfg.pretext.method == "moco" ? train::Recipe::mocoPretrain
                                             : train::Recipe::inpaintPretrain;
  train::TrainConfig tc = cfg.trainConfig(recipe);

  std::ofstream log(fs::path(inv.outDir) / "train_log.jsonl");
  log << nlohmann::json{{"config_hash", hash}}.dump() << '\n';
  auto fit = train::runRecipe(tc, records, inv.outDir, &log);

  const auto& last = fit.log.back();
  out << "pretrained " << cfg.pretext.method << " for " << fit.log.size()
      << " epochs, final loss " << last.values.at("loss") << '\n';
  out << "checkpoint " << fit.finalCheckpoint().path << '\n';
  return kOk;
}

eval::BinaryTrainFn makeBinaryTrainer(const ExperimentConfig& cfg) {
  return [cfg](const std::vector<eval::BinarySample>& trainSamples,
               const std::vector<eval::BinarySample>& testSamples) {
    const auto& pp = cfg.preproc;
    auto prep = [&](const std::vector<eval::BinarySample>& samples) {
      std::pair<std::vector<Tensor>, std::vector<int>> prepped;
      for (const auto& s : samples) {
        prepped.first.push_back(data::preprocess(s.record->pixels, pp));
        prepped.second.push_back(s.label);
      }
      return prepped;
    };
    auto [trImgs, trLabels] = prep(trainSamples);
    auto [teImgs, teLabels] = prep(testSamples);

    nn::ParamStore store;
    Rng init = Rng::stream(cfg.train.seed, 1);
    nn::BackboneConfig bcfg;
    bcfg.name = nn::backboneFromString(cfg.model.backbone);
    nn::Backbone backbone(bcfg, store, init, "backbone");
    nn::Classifier head(backbone.featureDim(), 2, store, init, "head",
                        cfg.model.headDropout);
    nn::Adam opt(store.trainable(), cfg.train.lr);
    const std::vector<double> uniform{1.0, 1.0};

    const int n = static_cast<int>(trImgs.size());
    const int batch = cfg.train.batchSize;
    auto stack = [&](const std::vector<Tensor>& imgs,
                     const std::vector<int>& order, int s, int e) {
      Tensor b({e - s, 1, pp.targetH, pp.targetW});
      for (int i = s; i < e; ++i) {
        const Tensor& img = imgs[static_cast<std::size_t>(order[i])];
        std::copy(img.data(), img.data() + img.size(),
                  b.data() + static_cast<std::size_t>(i - s) * img.size());
      }
      return b;
    };

    for (int e = 0; e < cfg.train.epochs; ++e) {
      Rng shuf = Rng::stream(cfg.train.seed, 9000 + e);
      Rng drop = Rng::stream(cfg.train.seed, 9500 + e);
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      for (int i = n - 1; i > 0; --i)
        std::swap(order[i],
                  order[static_cast<std::size_t>(shuf.uniformInt(0, i))]);
      for (int s = 0; s < n; s += batch) {
        const int bEnd = std::min(n, s + batch);
        std::vector<int> labels(static_cast<std::size_t>(bEnd - s));
        for (int i = s; i < bEnd; ++i)
          labels[i - s] = trLabels[static_cast<std::size_t>(order[i])];
        nn::Tape t;
        auto feat = backbone.forward(t, t.value(stack(trImgs, order, s, bEnd)),
                                     true);
        auto logits = head.forward(t, feat.pooled, true, drop);
        auto loss = nn::weightedCrossEntropy(t, logits, labels, uniform);
        if (!std::isfinite(loss->value.at(0)))
          throw DivergenceError("non-finite loss in pairwise ablation");
        t.backward(loss);
        opt.step();
      }
    }

    std::vector<int> preds;
    std::vector<int> ident(teImgs.size());
    std::iota(ident.begin(), ident.end(), 0);
    Rng dummy(0);
    for (int s = 0; s < static_cast<int>(teImgs.size()); s += batch) {
      const int bEnd = std::min<int>(static_cast<int>(teImgs.size()), s + batch);
      nn::Tape t;
      auto feat =
          backbone.forward(t, t.value(stack(teImgs, ident, s, bEnd)), false);
      auto logits = head.forward(t, feat.pooled, false, dummy);
      for (int i = 0; i < bEnd - s; ++i)
        preds.push_back(logits->value.at(i, 0) >= logits->value.at(i, 1) ? 0
                                                                         : 1);
    }
    return preds;
  };
}

int cmdTrain(ExperimentConfig& cfg, const Invocation& inv,
             const std::string& hash, std::ostream& out) {
  ensureDir(inv.outDir);
  auto records = loadRecords(cfg);
  train::Recipe recipe =
      inv.mode == "multitask"
          ? train::Recipe::multitask
          : (cfg.train.initCheckpoint.empty() ? train::Recipe::baseline
                                              : train::Recipe::finetune);
  train::TrainConfig tc = cfg.trainConfig(recipe);

  if (cfg.data.kfold > 1) {
    auto folds = data::makeKFolds(records, cfg.data.kfold, cfg.train.seed);
    std::vector<eval::MetricsReport> reports;
    for (const auto& fold : folds) {
      fs::path foldDir =
          fs::path(inv.outDir) / ("fold_" + std::to_string(fold.foldIndex));
      ensureDir(foldDir.string());
      std::ofstream log(foldDir / "train_log.jsonl");
      log << nlohmann::json{{"config_hash", hash}}.dump() << '\n';
      auto trainSubset = subsetByIds(records, fold.trainIds);
      auto fit = train::runRecipe(tc, trainSubset, foldDir.string(), &log);
      auto report = train::evaluateCheckpoint(
          tc, fit.finalCheckpoint().path,
          data::selectRecords(records, fold.testIds));
      writeJsonArtifact(foldDir / "report.json", eval::toJson(report), hash);
      writeTextArtifact(foldDir / "confusion.csv", hash,
                        eval::confusionCsv(report.confusion));
      out << "fold " << fold.foldIndex << ": f1Macro " << report.f1Macro
          << ", accuracy " << report.accuracy << '\n';
      reports.push_back(std::move(report));
    }
    auto summary = eval::kfoldSummary(reports);
    nlohmann::json sj = eval::toJson(summary);
    sj["f1"] = summary.formattedF1();
    sj["accuracy"] = summary.formattedAcc();
    writeJsonArtifact(fs::path(inv.outDir) / "summary.json", sj, hash);
    out << "k-fold f1 " << summary.formattedF1() << ", accuracy "
        << summary.formattedAcc() << '\n';
    return kOk;
  }

  auto split = data::makeSplit(records, cfg.data.testFraction, cfg.train.seed);
  std::ofstream log(fs::path(inv.outDir) / "train_log.jsonl");
  log << nlohmann::json{{"config_hash", hash}}.dump() << '\n';
  auto trainSubset = subsetByIds(records, split.trainIds);
  auto fit = train::runRecipe(tc, trainSubset, inv.outDir, &log);
  auto report =
      train::evaluateCheckpoint(tc, fit.finalCheckpoint().path,
                                data::selectRecords(records, split.testIds));
  writeJsonArtifact(fs::path(inv.outDir) / "report.json", eval::toJson(report),
                    hash);
  writeTextArtifact(fs::path(inv.outDir) / "confusion.csv", hash,
                    eval::confusionCsv(report.confusion));
  out << "checkpoint " << fit.finalCheckpoint().path << '\n';
  out << "test f1Macro " << report.f1Macro << ", accuracy " << report.accuracy
      << '\n';
  return kOk;
}

int cmdEval(const ExperimentConfig& cfg, const Invocation& inv,
            const std::string& hash, std::ostream& out) {
  ensureDir(inv.outDir);
  std::string ckpt = requireCheckpoint(cfg);
  auto records = loadRecords(cfg);
  auto split = data::makeSplit(records, cfg.data.testFraction, cfg.train.seed);
  train::TrainConfig tc = cfg.trainConfig(train::Recipe::baseline);
  auto report = train::evaluateCheckpoint(
      tc, ckpt, data::selectRecords(records, split.testIds));
  writeJsonArtifact(fs::path(inv.outDir) / "report.json", eval::toJson(report),
                    hash);
  writeTextArtifact(fs::path(inv.outDir) / "confusion.csv", hash,
                    eval::confusionCsv(report.confusion));
  out << "f1Macro " << report.f1Macro << ", accuracy " << report.accuracy
      << '\n';
  return kOk;
}

int cmdAblate(const ExperimentConfig& cfg, const Invocation& inv,
              const std::string& hash, std::ostream& out) {
  ensureDir(inv.outDir);
  std::vector<eval::PairKind> pairs;
  if (inv.pairs == "all") {
    pairs = eval::allPairKinds();
  } else {
    bool known = false;
    for (eval::PairKind kind : eval::allPairKinds())
      if (eval::toString(kind) == inv.pairs) {
        pairs.push_back(kind);
        known = true;
      }
    if (!known)
      throw ConfigError("unknown pair '" + inv.pairs +
                        "' (use one of the four pair names or 'all')");
  }

  auto records = loadRecords(cfg);
  auto split = data::makeSplit(records, cfg.data.testFraction, cfg.train.seed);
  auto reports =
      eval::pairwiseAblation(records, split, pairs, makeBinaryTrainer(cfg));

  std::ostringstream csv;
  csv << "pair,f1_positive,f1_macro,accuracy,skipped\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : reports) {
    csv << eval::toString(r.kind) << ',' << r.f1Positive << ',' << r.f1Macro
        << ',' << r.accuracy << ',' << (r.skipped ? 1 : 0) << '\n';
    rows.push_back(eval::toJson(r));
    out << eval::toString(r.kind) << ": f1 " << r.f1Positive
        << (r.skipped ? " (skipped)" : "") << '\n';
  }
  writeTextArtifact(fs::path(inv.outDir) / "ablation.csv", hash, csv.str());
  writeJsonArtifact(fs::path(inv.outDir) / "ablation.json",
                    nlohmann::json{{"pairs", std::move(rows)}}, hash);
  return kOk;
}

int cmdInterpret(const ExperimentConfig& cfg, const Invocation& inv,
                 const std::string& hash, std::ostream& out) {
  ensureDir(inv.outDir);
  const std::string& target = inv.target;
  const bool wantGradcam = target == "gradcam" || target == "all";
  const bool wantFeatures = target == "features" || target == "all";
  const bool wantEmbeddings = target == "embeddings" || target == "all";
  const bool wantBoxStats = target == "boxstats" || target == "all";

  auto records = loadRecords(cfg);
  fs::path outDir(inv.outDir);

  if (wantBoxStats) {
    auto stats = interp::boxDimStats(records);
    interp::writeBoxDimCsv(stats, (outDir / "box_dims.csv").string());
    interp::writeBoxDimHistogramCsv(stats, cfg.interpret.boxBinWidth,
                                    (outDir / "box_dim_hist.csv").string());
    stampCsv(outDir / "box_dims.csv", hash);
    stampCsv(outDir / "box_dim_hist.csv", hash);
    out << "box stats over " << records.size() << " records\n";
  }

  if (!(wantGradcam || wantFeatures || wantEmbeddings)) return kOk;

  std::string ckpt = requireCheckpoint(cfg);
  train::TrainConfig tc = cfg.trainConfig(train::Recipe::baseline);
  auto model = interp::loadAnalysisModel(tc, ckpt, wantGradcam);
  auto split = data::makeSplit(records, cfg.data.testFraction, cfg.train.seed);
  auto testRecs = data::selectRecords(records, split.testIds);

  if (wantGradcam) {
    auto cls = data::labelFromString(cfg.interpret.targetClass);
    int written = 0;
    for (const auto* rec : testRecs) {
      if (written >= cfg.interpret.maxImages) break;
      Tensor img = data::preprocess(rec->pixels, cfg.preproc);
      auto hm = interp::gradCam(*model.backbone, *model.head, img, cls,
                                cfg.interpret.layer);
      interp::writeHeatmapPng(
          hm, (outDir / ("gradcam_" + rec->id + ".png")).string());
      ++written;
    }
    out << "gradcam: " << written << " heatmaps for class "
        << cfg.interpret.targetClass << '\n';
  }

  if (wantFeatures) {
    int written = 0;
    for (const auto* rec : testRecs) {
      if (written >= std::min(4, cfg.interpret.maxImages)) break;
      Tensor img = data::preprocess(rec->pixels, cfg.preproc);
      auto dump = interp::featureMaps(*model.backbone, img,
                                      cfg.interpret.layer);
      std::string stem = (outDir / ("features_" + rec->id)).string();
      interp::writeFeatureMapDump(dump, stem);
      stampJsonFile(stem + ".json", hash);
      ++written;
    }
    out << "features: " << written << " map grids from layer "
        << cfg.interpret.layer << '\n';
  }

  if (wantEmbeddings) {
    auto dump = interp::exportEmbeddings(*model.backbone, testRecs,
                                         cfg.preproc, ckpt);
    interp::writeEmbeddingsCsv(dump, (outDir / "embeddings.csv").string());
    auto xy = interp::pcaReduce2d(dump.features);
    interp::writeReducedCsv(dump, xy,
                            (outDir / "embedding_scatter.csv").string());
    stampCsv(outDir / "embeddings.csv", hash);
    stampCsv(outDir / "embedding_scatter.csv", hash);
    out << "embeddings: " << dump.features.shape(0) << " rows\n";
  }
  return kOk;
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"four-class chest X-ray training and analysis workbench"};
  app.name("cxrlab");
  app.require_subcommand(1);

  Invocation inv;
  app.add_option("--config", inv.configPath, "experiment config JSON");
  app.add_flag("--verify", inv.verify,
               "check artifacts in --out against this config's hash instead "
               "of running");

  auto addOut = [&](CLI::App* sub) {
    sub->fallthrough();
    sub->add_option("--out", inv.outDir, "output directory")->required();
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a phantom dataset");
  synth->add_option("--n", inv.n, "number of images");
  synth->add_option("--size", inv.size, "square image size in pixels");
  synth->add_option("--seed", inv.seed, "generator seed");
  addOut(synth);

  CLI::App* pretrain =
      app.add_subcommand("pretrain", "self-supervised pre-training");
  pretrain->add_option("--method", inv.method, "moco or inpaint")
      ->check(CLI::IsMember({"moco", "inpaint"}));
  pretrain->add_option("--variant", inv.variant,
                       "contrastive augmentation recipe");
  pretrain->add_option("--mask-mode", inv.maskMode,
                       "inpainting mask placement");
  pretrain->add_option("--epochs", inv.epochsOverride, "override train.epochs");
  addOut(pretrain);

  CLI::App* tr = app.add_subcommand("train", "train and evaluate a classifier");
  tr->add_option("--mode", inv.mode, "baseline or multitask")
      ->check(CLI::IsMember({"baseline", "multitask"}));
  tr->add_option("--init-from", inv.initFrom, "checkpoint to start from");
  tr->add_flag("--skip-stage1", inv.skipStage1,
               "multitask: skip the classification-only stage");
  tr->add_option("--kfold", inv.kfold, "number of cross-validation folds");
  addOut(tr);

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", inv.checkpoint, "checkpoint to evaluate");
  addOut(ev);

  CLI::App* ab =
      app.add_subcommand("ablate", "pairwise binary class ablations");
  ab->add_option("--pairs", inv.pairs, "pair name or 'all'");
  addOut(ab);

  CLI::App* in = app.add_subcommand("interpret", "model inspection artifacts");
  in->add_option("target", inv.target,
                 "gradcam | features | embeddings | boxstats | all")
      ->check(
          CLI::IsMember({"gradcam", "features", "embeddings", "boxstats",
                         "all"}));
  in->add_option("--checkpoint", inv.checkpoint, "checkpoint to inspect");
  in->add_option("--class", inv.targetClass, "heatmap target class");
  in->add_option("--layer", inv.layer, "layer to visualize");
  addOut(in);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    ExperimentConfig cfg = inv.configPath.empty()
                               ? ExperimentConfig{}
                               : ExperimentConfig::load(inv.configPath);

    if (const char* env = std::getenv("CXRLAB_SEED")) {
      char* end = nullptr;
      unsigned long long v = std::strtoull(env, &end, 10);
      if (*env == '\0' || end == nullptr || *end != '\0')
        throw ConfigError("CXRLAB_SEED must be an unsigned integer, got '" +
                          std::string(env) + "'");
      cfg.train.seed = v;
    }

    // Fold command-line overrides into the config before hashing, so the
    // stamped hash always describes the resolved run.
    if (app.got_subcommand(pretrain)) {
      if (!inv.method.empty()) cfg.pretext.method = inv.method;
      if (!inv.variant.empty()) {
        (void)data::mocoVariantFromString(inv.variant);
        cfg.pretext.variant = inv.variant;
      }
      if (!inv.maskMode.empty()) {
        (void)train::maskModeFromString(inv.maskMode);
        cfg.pretext.maskMode = inv.maskMode;
      }
      if (inv.epochsOverride > 0) cfg.train.epochs = inv.epochsOverride;
    }
    if (app.got_subcommand(tr)) {
      if (!inv.initFrom.empty()) cfg.train.initCheckpoint = inv.initFrom;
      if (inv.skipStage1) cfg.train.skipStage1 = true;
      if (inv.kfold > 0) cfg.data.kfold = inv.kfold;
    }
    if (app.got_subcommand(ev) || app.got_subcommand(in)) {
      if (!inv.checkpoint.empty()) cfg.eval.checkpoint = inv.checkpoint;
    }
    if (app.got_subcommand(in)) {
      if (!inv.targetClass.empty()) {
        (void)data::labelFromString(inv.targetClass);
        cfg.interpret.targetClass = inv.targetClass;
      }
      if (!inv.layer.empty()) cfg.interpret.layer = inv.layer;
    }

    const std::string hash = cfg.hash();
    setPngConfigTag(hash);

    if (inv.verify) return verifyArtifacts(inv.outDir, hash, out, err);

    if (app.got_subcommand(synth)) return cmdSynth(inv, hash, out);
    if (app.got_subcommand(pretrain)) return cmdPretrain(cfg, inv, hash, out);
    if (app.got_subcommand(tr)) return cmdTrain(cfg, inv, hash, out);
    if (app.got_subcommand(ev)) return cmdEval(cfg, inv, hash, out);
    if (app.got_subcommand(ab)) return cmdAblate(cfg, inv, hash, out);
    if (app.got_subcommand(in)) return cmdInterpret(cfg, inv, hash, out);
    err << "error: no subcommand\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kArtifact;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << '\n';
    return kDiverged;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cxr::app::cli
