#include "cxrlab/app/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "cxrlab/core/error.hpp"
#include "cxrlab/nn/models.hpp"

namespace cxr::app {
namespace {

/// Pulls known keys out of one JSON object and complains, with full paths,
/// about anything left over or ill-typed.
class SectionReader {
 public:
  SectionReader(const nlohmann::json& obj, std::string path)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object())
      throw ConfigError("config section '" + path_ + "' must be an object");
  }

  template <typename T>
  void field(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      it->get_to(out);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + path_ + "." + key +
                        "' has the wrong type");
    }
  }

  const nlohmann::json* sub(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void done() const {
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key))
        throw ConfigError("unknown config key '" + path_ + "." + key + "'");
  }

 private:
  const nlohmann::json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void checkEnumField(const std::string& path, const std::string& value,
                    void (*probe)(const std::string&)) {
  try {
    probe(value);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + path + "' has unsupported value '" +
                      value + "'");
  }
}

void requireWeights(const std::string& path, const std::vector<double>& w,
                    bool allowEmpty) {
  if (w.empty() && allowEmpty) return;
  if (w.size() != static_cast<std::size_t>(data::kNumClasses))
    throw ConfigError("config key '" + path + "' needs " +
                      std::to_string(data::kNumClasses) + " entries");
}

}  // namespace

ExperimentConfig ExperimentConfig::fromJson(const nlohmann::json& j) {
  ExperimentConfig cfg;
  SectionReader root(j, "config");

  if (const auto* sec = root.sub("data")) {
    SectionReader r(*sec, "data");
    r.field("manifest", cfg.data.manifest);
    r.field("testFraction", cfg.data.testFraction);
    r.field("kfold", cfg.data.kfold);
    r.done();
  }
  if (const auto* sec = root.sub("preproc")) {
    SectionReader r(*sec, "preproc");
    r.field("winsorPercentile", cfg.preproc.winsorPercentile);
    r.field("winsorUpperOnly", cfg.preproc.winsorUpperOnly);
    r.field("histEq", cfg.preproc.histEq);
    r.field("histEqPlainCdf", cfg.preproc.histEqPlainCdf);
    r.field("targetH", cfg.preproc.targetH);
    r.field("targetW", cfg.preproc.targetW);
    r.field("normalize01", cfg.preproc.normalize01);
    r.done();
  }
  if (const auto* sec = root.sub("augment")) {
    SectionReader r(*sec, "augment");
    r.field("rotationDeg", cfg.augment.rotationDeg);
    r.field("hflipProb", cfg.augment.hflipProb);
    r.field("scaleLo", cfg.augment.scaleLo);
    r.field("scaleHi", cfg.augment.scaleHi);
    r.field("shearLo", cfg.augment.shearLo);
    r.field("shearHi", cfg.augment.shearHi);
    r.field("translateFrac", cfg.augment.translateFrac);
    r.done();
  }
  if (const auto* sec = root.sub("pretext")) {
    SectionReader r(*sec, "pretext");
    r.field("method", cfg.pretext.method);
    r.field("variant", cfg.pretext.variant);
    r.field("maskMode", cfg.pretext.maskMode);
    r.field("queueSize", cfg.pretext.queueSize);
    r.field("momentum", cfg.pretext.momentum);
    r.field("tau", cfg.pretext.tau);
    r.field("projDim", cfg.pretext.projDim);
    r.field("projMlp", cfg.pretext.projMlp);
    r.field("inpaintFill", cfg.pretext.inpaintFill);
    r.field("reconDumpEvery", cfg.pretext.reconDumpEvery);
    r.done();
  }
  if (const auto* sec = root.sub("model")) {
    SectionReader r(*sec, "model");
    r.field("backbone", cfg.model.backbone);
    r.field("headDropout", cfg.model.headDropout);
    r.done();
  }
  if (const auto* sec = root.sub("train")) {
    SectionReader r(*sec, "train");
    r.field("epochs", cfg.train.epochs);
    r.field("batchSize", cfg.train.batchSize);
    r.field("lr", cfg.train.lr);
    r.field("schedule", cfg.train.schedule);
    r.field("lrMin", cfg.train.lrMin);
    r.field("seed", cfg.train.seed);
    r.field("valFraction", cfg.train.valFraction);
    r.field("classWeights", cfg.train.classWeights);
    r.field("stage1Epochs", cfg.train.stage1Epochs);
    r.field("stage2Epochs", cfg.train.stage2Epochs);
    r.field("stage3Epochs", cfg.train.stage3Epochs);
    r.field("skipStage1", cfg.train.skipStage1);
    r.field("stage2Ce", cfg.train.stage2Ce);
    r.field("stage2Dice", cfg.train.stage2Dice);
    r.field("stage3Ce", cfg.train.stage3Ce);
    r.field("stage3Dice", cfg.train.stage3Dice);
    r.field("stage3ClassWeights", cfg.train.stage3ClassWeights);
    r.field("initCheckpoint", cfg.train.initCheckpoint);
    r.done();
  }
  if (const auto* sec = root.sub("eval")) {
    SectionReader r(*sec, "eval");
    r.field("checkpoint", cfg.eval.checkpoint);
    r.done();
  }
  if (const auto* sec = root.sub("interpret")) {
    SectionReader r(*sec, "interpret");
    r.field("layer", cfg.interpret.layer);
    r.field("targetClass", cfg.interpret.targetClass);
    r.field("boxBinWidth", cfg.interpret.boxBinWidth);
    r.field("maxImages", cfg.interpret.maxImages);
    r.done();
  }
  root.done();

  checkEnumField("model.backbone", cfg.model.backbone,
                 [](const std::string& s) { (void)nn::backboneFromString(s); });
  checkEnumField("train.schedule", cfg.train.schedule,
                 [](const std::string& s) { (void)train::scheduleFromString(s); });
  checkEnumField("pretext.variant", cfg.pretext.variant,
                 [](const std::string& s) { (void)data::mocoVariantFromString(s); });
  checkEnumField("pretext.maskMode", cfg.pretext.maskMode,
                 [](const std::string& s) { (void)train::maskModeFromString(s); });
  checkEnumField("interpret.targetClass", cfg.interpret.targetClass,
                 [](const std::string& s) { (void)data::labelFromString(s); });
  if (cfg.pretext.method != "moco" && cfg.pretext.method != "inpaint")
    throw ConfigError("config key 'pretext.method' has unsupported value '" +
                      cfg.pretext.method + "'");
  if (cfg.data.kfold < 1)
    throw ConfigError("config key 'data.kfold' must be at least 1");
  if (!(cfg.data.testFraction > 0.0) || cfg.data.testFraction >= 1.0)
    throw ConfigError("config key 'data.testFraction' must lie in (0, 1)");
  requireWeights("train.classWeights", cfg.train.classWeights, true);
  requireWeights("train.stage3ClassWeights", cfg.train.stage3ClassWeights,
                 false);
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config file " + path + " is not valid JSON: " + e.what());
  }
  return fromJson(j);
}

nlohmann::json ExperimentConfig::toJson() const {
  return nlohmann::json{
      {"data",
       {{"manifest", data.manifest},
        {"testFraction", data.testFraction},
        {"kfold", data.kfold}}},
      {"preproc",
       {{"winsorPercentile", preproc.winsorPercentile},
        {"winsorUpperOnly", preproc.winsorUpperOnly},
        {"histEq", preproc.histEq},
        {"histEqPlainCdf", preproc.histEqPlainCdf},
        {"targetH", preproc.targetH},
        {"targetW", preproc.targetW},
        {"normalize01", preproc.normalize01}}},
      {"augment",
       {{"rotationDeg", augment.rotationDeg},
        {"hflipProb", augment.hflipProb},
        {"scaleLo", augment.scaleLo},
        {"scaleHi", augment.scaleHi},
        {"shearLo", augment.shearLo},
        {"shearHi", augment.shearHi},
        {"translateFrac", augment.translateFrac}}},
      {"pretext",
       {{"method", pretext.method},
        {"variant", pretext.variant},
        {"maskMode", pretext.maskMode},
        {"queueSize", pretext.queueSize},
        {"momentum", pretext.momentum},
        {"tau", pretext.tau},
        {"projDim", pretext.projDim},
        {"projMlp", pretext.projMlp},
        {"inpaintFill", pretext.inpaintFill},
        {"reconDumpEvery", pretext.reconDumpEvery}}},
      {"model",
       {{"backbone", model.backbone}, {"headDropout", model.headDropout}}},
      {"train",
       {{"epochs", train.epochs},
        {"batchSize", train.batchSize},
        {"lr", train.lr},
        {"schedule", train.schedule},
        {"lrMin", train.lrMin},
        {"seed", train.seed},
        {"valFraction", train.valFraction},
        {"classWeights", train.classWeights},
        {"stage1Epochs", train.stage1Epochs},
        {"stage2Epochs", train.stage2Epochs},
        {"stage3Epochs", train.stage3Epochs},
        {"skipStage1", train.skipStage1},
        {"stage2Ce", train.stage2Ce},
        {"stage2Dice", train.stage2Dice},
        {"stage3Ce", train.stage3Ce},
        {"stage3Dice", train.stage3Dice},
        {"stage3ClassWeights", train.stage3ClassWeights},
        {"initCheckpoint", train.initCheckpoint}}},
      {"eval", {{"checkpoint", eval.checkpoint}}},
      {"interpret",
       {{"layer", interpret.layer},
        {"targetClass", interpret.targetClass},
        {"boxBinWidth", interpret.boxBinWidth},
        {"maxImages", interpret.maxImages}}}};
}

std::string fnv1aHex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string ExperimentConfig::hash() const { return fnv1aHex(toJson().dump()); }

train::TrainConfig ExperimentConfig::trainConfig(train::Recipe recipe) const {
  train::TrainConfig tc;
  tc.recipe = recipe;
  tc.backbone = nn::backboneFromString(model.backbone);
  tc.headDropout = model.headDropout;
  tc.preproc = preproc;
  tc.augment = augment;
  tc.epochs = train.epochs;
  tc.batchSize = train.batchSize;
  tc.lr = train.lr;
  tc.schedule = train::scheduleFromString(train.schedule);
  tc.lrMin = train.lrMin;
  tc.seed = train.seed;
  tc.valFraction = train.valFraction;
  tc.classWeights = train.classWeights;
  tc.stage1Epochs = train.stage1Epochs;
  tc.stage2Epochs = train.stage2Epochs;
  tc.stage3Epochs = train.stage3Epochs;
  tc.skipStage1 = train.skipStage1;
  tc.stage2Ce = train.stage2Ce;
  tc.stage2Dice = train.stage2Dice;
  tc.stage3Ce = train.stage3Ce;
  tc.stage3Dice = train.stage3Dice;
  tc.stage3ClassWeights = train.stage3ClassWeights;
  tc.initCheckpoint = train.initCheckpoint;
  tc.mocoVariant = data::mocoVariantFromString(pretext.variant);
  tc.queueSize = pretext.queueSize;
  tc.momentum = pretext.momentum;
  tc.tau = pretext.tau;
  tc.projDim = pretext.projDim;
  tc.projMlp = pretext.projMlp;
  tc.maskMode = train::maskModeFromString(pretext.maskMode);
  tc.inpaintFill = pretext.inpaintFill;
  tc.reconDumpEvery = pretext.reconDumpEvery;
  tc.configHash = hash();
  return tc;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.toJson() == b.toJson();
}

}  // namespace cxr::app
