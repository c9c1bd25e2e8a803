#include "cxrlab/train/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>

#include "cxrlab/core/error.hpp"
#include "cxrlab/core/image_io.hpp"
#include "cxrlab/core/rng.hpp"
#include "cxrlab/data/pretext.hpp"
#include "cxrlab/nn/adam.hpp"
#include "cxrlab/nn/checkpoint.hpp"
#include "cxrlab/nn/losses.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace cxr::train {

Recipe recipeFromString(const std::string& s) {
  if (s == "baseline") return Recipe::baseline;
  if (s == "multitask") return Recipe::multitask;
  if (s == "moco_pretrain") return Recipe::mocoPretrain;
  if (s == "inpaint_pretrain") return Recipe::inpaintPretrain;
  if (s == "finetune") return Recipe::finetune;
  throw ConfigError("unknown recipe: " + s);
}

std::string toString(Recipe r) {
  switch (r) {
    case Recipe::baseline: return "baseline";
    case Recipe::multitask: return "multitask";
    case Recipe::mocoPretrain: return "moco_pretrain";
    case Recipe::inpaintPretrain: return "inpaint_pretrain";
    case Recipe::finetune: return "finetune";
  }
  throw ConfigError("unknown recipe value");
}

Schedule scheduleFromString(const std::string& s) {
  if (s == "constant") return Schedule::constant;
  if (s == "cosine") return Schedule::cosine;
  throw ConfigError("unknown schedule: " + s);
}

std::string toString(Schedule s) {
  return s == Schedule::constant ? "constant" : "cosine";
}

MaskMode maskModeFromString(const std::string& s) {
  if (s == "center") return MaskMode::center;
  if (s == "targeted_cxr") return MaskMode::targetedCxr;
  throw ConfigError("unknown mask mode: " + s);
}

std::string toString(MaskMode m) {
  return m == MaskMode::center ? "center" : "targeted_cxr";
}

double cosineAnnealLr(int epoch, int total, double lrMax, double lrMin) {
  if (total < 1) throw ValidationError("cosine schedule needs total >= 1");
  if (epoch < 0 || epoch > total)
    throw ValidationError("cosine schedule epoch out of [0, total]");
  const double c =
      0.5 * (1.0 + std::cos(std::numbers::pi * double(epoch) / double(total)));
  return lrMin + (lrMax - lrMin) * c;
}

double defaultTau(data::MocoVariant v) {
  return v == data::MocoVariant::cxrModified ? 0.07 : 0.2;
}

namespace {

void checkClassWeights(const std::vector<double>& w, const std::string& what) {
  if (w.empty()) return;
  if (static_cast<int>(w.size()) != data::kNumClasses)
    throw ValidationError(what + " needs one entry per class");
  for (double v : w)
    if (!(v > 0.0)) throw ValidationError(what + " entries must be positive");
}

int resolveEpochs(int stageEpochs, int fallback) {
  return stageEpochs < 0 ? fallback : stageEpochs;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be at least 1");
  if (batchSize < 1) throw ValidationError("batch size must be at least 1");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (lrMin < 0.0 || lrMin > lr)
    throw ValidationError("lrMin must lie in [0, lr]");
  if (valFraction < 0.0 || valFraction >= 1.0)
    throw ValidationError("valFraction must lie in [0, 1)");
  if (headDropout < 0.0 || headDropout >= 1.0)
    throw ValidationError("head dropout must lie in [0, 1)");
  preproc.validate();
  augment.validate();
  checkClassWeights(classWeights, "classWeights");
  if (recipe == Recipe::multitask) {
    checkClassWeights(stage3ClassWeights, "stage3ClassWeights");
    if (stage2Ce < 0.0 || stage2Dice < 0.0 || stage2Ce + stage2Dice <= 0.0)
      throw ValidationError("stage 2 loss weights must be non-negative with a positive sum");
    if (stage3Ce < 0.0 || stage3Dice < 0.0 || stage3Ce + stage3Dice <= 0.0)
      throw ValidationError("stage 3 loss weights must be non-negative with a positive sum");
    if (!skipStage1 && resolveEpochs(stage1Epochs, epochs) < 1)
      throw ValidationError("stage 1 needs at least 1 epoch (or skipStage1)");
    if (resolveEpochs(stage2Epochs, epochs) < 1 ||
        resolveEpochs(stage3Epochs, epochs) < 1)
      throw ValidationError("stages 2 and 3 need at least 1 epoch");
  }
  if (recipe == Recipe::mocoPretrain) {
    if (queueSize < 1) throw ValidationError("queue size must be at least 1");
    if (batchSize > queueSize)
      throw ValidationError("batch size exceeds the negatives queue size");
    if (momentum < 0.0 || momentum > 1.0)
      throw ValidationError("momentum must lie in [0, 1]");
    if (tau >= 0.0 && !(tau > 0.0))
      throw ValidationError("temperature must be positive");
    if (projDim < 1) throw ValidationError("projection dim must be at least 1");
  }
  if (recipe == Recipe::inpaintPretrain && reconDumpEvery < 0)
    throw ValidationError("reconDumpEvery must be non-negative");
  if (recipe == Recipe::finetune && initCheckpoint.empty())
    throw ValidationError("finetune needs an initial checkpoint");
}

const CheckpointRef& FitResult::finalCheckpoint() const {
  if (checkpoints.empty())
    throw ValidationError("training produced no checkpoints");
  return checkpoints.back();
}

namespace {

using data::ImageRecord;
using nlohmann::json;

// Seed-stream layout. Epoch-indexed streams shift by kStageStride per stage
// so no stream is reused across the stages of one run.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kQueueStream = 7;
constexpr std::uint64_t kShuffleBase = 1000;
constexpr std::uint64_t kAugBase = 20000;
constexpr std::uint64_t kDropBase = 40000;
constexpr std::uint64_t kViewBase = 60000;
constexpr std::uint64_t kMaskBase = 80000;
constexpr std::uint64_t kStageStride = 100000;

void shuffleIdx(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniformInt(0, i));
    std::swap(idx[i], idx[j]);
  }
}

struct Prepared {
  std::vector<Tensor> images;      // preprocessed, [targetH, targetW]
  std::vector<int> labels;
  std::vector<Tensor> segTargets;  // box-union masks, same resolution
  double mean = 0.0;               // over all preprocessed pixels
};

Prepared prepare(const std::vector<const ImageRecord*>& recs,
                 const data::PreprocConfig& pp, bool withMasks) {
  Prepared out;
  out.images.reserve(recs.size());
  out.labels.reserve(recs.size());
  double sum = 0.0;
  std::size_t n = 0;
  for (const ImageRecord* r : recs) {
    Tensor img = data::preprocess(r->pixels, pp);
    sum += std::accumulate(img.data(), img.data() + img.size(), 0.0);
    n += img.size();
    out.images.push_back(std::move(img));
    out.labels.push_back(static_cast<int>(r->label));
    if (withMasks)
      out.segTargets.push_back(data::boxesToMask(*r, pp.targetH, pp.targetW));
  }
  out.mean = n ? sum / static_cast<double>(n) : 0.0;
  return out;
}

Tensor stackBatch(const std::vector<Tensor>& xs) {
  const int b = static_cast<int>(xs.size());
  const int h = xs.front().shape(0), w = xs.front().shape(1);
  Tensor out({b, 1, h, w});
  for (int i = 0; i < b; ++i)
    std::copy(xs[i].data(), xs[i].data() + xs[i].size(),
              out.data() + static_cast<std::size_t>(i) * h * w);
  return out;
}

std::vector<int> argmaxRows(const Tensor& logits) {
  const int n = logits.shape(0), c = logits.shape(1);
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

struct Net {
  nn::ParamStore store;
  std::optional<nn::Backbone> backbone;
  std::optional<nn::Classifier> head;
  std::optional<nn::SegDecoder> decoder;
  std::optional<nn::ProjectionHead> proj;
};

// Construction order fixes both the parameter file layout and the init
// stream consumption: backbone draws first, then the classifier head, then
// any decoder, so classifier-only runs and decoder-bearing runs share the
// same backbone and head initialization for one seed.
void buildNet(Net& net, const TrainConfig& cfg, bool withHead, bool withDecoder,
              bool withProj) {
  Rng init = Rng::stream(cfg.seed, kInitStream);
  nn::BackboneConfig bcfg;
  bcfg.name = cfg.backbone;
  bcfg.inChannels = 1;
  net.backbone.emplace(bcfg, net.store, init, "backbone");
  if (withHead)
    net.head.emplace(net.backbone->featureDim(), data::kNumClasses, net.store,
                     init, "head", cfg.headDropout);
  if (withDecoder) net.decoder.emplace(*net.backbone, net.store, init, "decoder", 1);
  if (withProj)
    net.proj.emplace(net.backbone->featureDim(), cfg.projDim, cfg.projMlp,
                     net.store, init, "proj");
}

std::vector<int> predictEval(const Net& net, const std::vector<Tensor>& images,
                             int batchSize) {
  std::vector<int> preds;
  preds.reserve(images.size());
  Rng dummy(0);
  const int n = static_cast<int>(images.size());
  for (int s = 0; s < n; s += batchSize) {
    const int e = std::min(n, s + batchSize);
    std::vector<Tensor> xs(images.begin() + s, images.begin() + e);
    nn::Tape t;
    auto x = t.value(stackBatch(xs));
    auto out = net.backbone->forward(t, x, false);
    auto logits = net.head->forward(t, out.pooled, false, dummy);
    for (int p : argmaxRows(logits->value)) preds.push_back(p);
  }
  return preds;
}

void requireFinite(double v, const std::string& stage, int epoch, int step) {
  if (!std::isfinite(v))
    throw DivergenceError("non-finite loss at stage " + stage + " epoch " +
                          std::to_string(epoch) + " step " +
                          std::to_string(step));
}

double epochLr(const TrainConfig& cfg, int epoch, int total) {
  return cfg.schedule == Schedule::cosine
             ? cosineAnnealLr(epoch, total, cfg.lr, cfg.lrMin)
             : cfg.lr;
}

void emitEpoch(std::vector<EpochLog>& log, std::ostream* jsonl,
               const std::string& stage, int epoch, double lr,
               std::map<std::string, double> values) {
  EpochLog el;
  el.epoch = epoch;
  el.lr = lr;
  el.stage = stage;
  el.values = std::move(values);
  if (jsonl) {
    json j{{"stage", el.stage}, {"epoch", el.epoch}, {"lr", el.lr}};
    for (const auto& [k, v] : el.values) j[k] = v;
    (*jsonl) << j.dump() << "\n";
  }
  log.push_back(std::move(el));
}

json baseMeta(const TrainConfig& cfg, const std::string& stage, int epoch) {
  return json{{"recipe", toString(cfg.recipe)},
              {"stage", stage},
              {"epoch", epoch},
              {"backbone", toString(cfg.backbone)},
              {"input_h", cfg.preproc.targetH},
              {"input_w", cfg.preproc.targetW},
              {"seed", cfg.seed},
              {"config_hash", cfg.configHash}};
}

CheckpointRef saveStage(const TrainConfig& cfg, const nn::ParamStore& store,
                        const std::string& outDir, const std::string& stage,
                        int epoch, json extraMeta = json::object()) {
  json meta = baseMeta(cfg, stage, epoch);
  meta.update(extraMeta);
  CheckpointRef ref;
  ref.path = (fs::path(outDir) / (stage + "_final.ckpt")).string();
  ref.stage = stage;
  ref.epoch = epoch;
  ref.configHash = cfg.configHash;
  nn::saveCheckpoint(ref.path, store, meta);
  return ref;
}

// Carves a stratified validation subset out of `records`. Returns pointers
// into the caller's vector; val stays empty when the fraction is zero or the
// dataset is too small to split.
void splitTrainVal(const std::vector<ImageRecord>& records, double valFraction,
                   std::uint64_t seed,
                   std::vector<const ImageRecord*>& train,
                   std::vector<const ImageRecord*>& val) {
  if (valFraction > 0.0 && records.size() >= 2) {
    data::DatasetSplit split = data::makeSplit(records, valFraction, seed);
    if (!split.testIds.empty()) {
      train = data::selectRecords(records, split.trainIds);
      val = data::selectRecords(records, split.testIds);
      return;
    }
  }
  for (const ImageRecord& r : records) train.push_back(&r);
}

void checkInitMeta(const json& meta, const TrainConfig& cfg,
                   const std::string& path) {
  if (meta.contains("backbone") &&
      meta["backbone"].get<std::string>() != nn::toString(cfg.backbone))
    throw CheckpointError("checkpoint " + path + " was trained with backbone " +
                          meta["backbone"].get<std::string>() +
                          ", config expects " + nn::toString(cfg.backbone));
  if (meta.contains("input_h") &&
      (meta["input_h"].get<int>() != cfg.preproc.targetH ||
       meta["input_w"].get<int>() != cfg.preproc.targetW))
    throw CheckpointError(
        "checkpoint " + path + " was trained at " +
        std::to_string(meta["input_h"].get<int>()) + "x" +
        std::to_string(meta["input_w"].get<int>()) + ", config expects " +
        std::to_string(cfg.preproc.targetH) + "x" +
        std::to_string(cfg.preproc.targetW));
}

void transferInit(Net& net, const TrainConfig& cfg, const std::string& path,
                  const std::string& who) {
  checkInitMeta(nn::readCheckpointMeta(path), cfg, path);
  nn::TransferReport rep = nn::transferWeights(path, net.store);
  if (rep.loaded.empty())
    throw CheckpointError("checkpoint " + path +
                          " shares no weights with the model");
  std::cerr << "[" << who << "] loaded " << rep.loaded.size()
            << " tensors from " << path << " (" << rep.missingInFile.size()
            << " fresh in model, " << rep.unusedInFile.size()
            << " unused in file)\n";
}

struct ClsStageOpts {
  std::string stage;
  int stageIdx = 0;  // stream offset multiplier
  int epochs = 0;
  std::string initCkpt;  // transferred into the fresh model when set
};

// Shared supervised loop behind the baseline, fine-tuning, and the first
// multitask stage. Trains backbone + classifier with weighted cross entropy.
FitResult runClsTraining(const TrainConfig& cfg,
                         const std::vector<ImageRecord>& records,
                         const std::string& outDir, std::ostream* jsonl,
                         const StepObserver& observer,
                         const ClsStageOpts& opts) {
  cfg.validate();
  if (records.empty()) throw ValidationError("no training records");
  fs::create_directories(outDir);

  std::vector<const ImageRecord*> trainRecs, valRecs;
  splitTrainVal(records, cfg.valFraction, cfg.seed, trainRecs, valRecs);
  Prepared tr = prepare(trainRecs, cfg.preproc, false);
  Prepared va = prepare(valRecs, cfg.preproc, false);

  Net net;
  buildNet(net, cfg, true, false, false);
  if (!opts.initCkpt.empty()) transferInit(net, cfg, opts.initCkpt, opts.stage);

  nn::Adam opt(net.store.trainable(), cfg.lr);
  std::vector<double> weights = cfg.classWeights.empty()
                                    ? std::vector<double>(data::kNumClasses, 1.0)
                                    : cfg.classWeights;
  const std::uint64_t off = kStageStride * opts.stageIdx;
  const int n = static_cast<int>(tr.images.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  FitResult res;
  for (int e = 0; e < opts.epochs; ++e) {
    const double lr = epochLr(cfg, e, opts.epochs);
    opt.setLr(lr);
    Rng shuf = Rng::stream(cfg.seed, off + kShuffleBase + e);
    Rng aug = Rng::stream(cfg.seed, off + kAugBase + e);
    Rng drop = Rng::stream(cfg.seed, off + kDropBase + e);
    shuffleIdx(order, shuf);

    double lossSum = 0.0;
    int correct = 0, step = 0;
    for (int s = 0; s < n; s += cfg.batchSize, ++step) {
      const int bEnd = std::min(n, s + cfg.batchSize);
      std::vector<Tensor> xs;
      std::vector<int> labels;
      for (int i = s; i < bEnd; ++i) {
        const int idx = order[i];
        xs.push_back(data::applyAugment(tr.images[idx], nullptr, cfg.augment, aug).first);
        labels.push_back(tr.labels[idx]);
      }
      nn::Tape t;
      auto x = t.value(stackBatch(xs));
      auto out = net.backbone->forward(t, x, true);
      auto logits = net.head->forward(t, out.pooled, true, drop);
      auto loss = nn::weightedCrossEntropy(t, logits, labels, weights);
      const double lv = loss->value.at(0);
      requireFinite(lv, opts.stage, e, step);
      t.backward(loss);
      opt.step();

      lossSum += lv * (bEnd - s);
      const auto preds = argmaxRows(logits->value);
      for (std::size_t i = 0; i < preds.size(); ++i)
        correct += preds[i] == labels[i];
      if (observer)
        observer(StepInfo{opts.stage, e, step, lr, lv, {}});
    }

    std::map<std::string, double> vals{{"loss", lossSum / n},
                                       {"train_acc", double(correct) / n}};
    if (!va.images.empty()) {
      auto report = eval::metrics(predictEval(net, va.images, cfg.batchSize),
                                  va.labels, data::kNumClasses);
      vals["val_f1"] = report.f1Macro;
      vals["val_acc"] = report.accuracy;
    }
    emitEpoch(res.log, jsonl, opts.stage, e + 1, lr, std::move(vals));
  }

  res.optimizerParams = opt.paramNames();
  res.checkpoints.push_back(
      saveStage(cfg, net.store, outDir, opts.stage, opts.epochs));
  if (!va.images.empty()) {
    res.hasVal = true;
    res.valReport = eval::metrics(predictEval(net, va.images, cfg.batchSize),
                                  va.labels, data::kNumClasses);
  }
  if (jsonl) jsonl->flush();
  return res;
}

}  // namespace

FitResult trainBaseline(const TrainConfig& cfg,
                        const std::vector<ImageRecord>& records,
                        const std::string& outDir, std::ostream* jsonl,
                        const StepObserver& observer) {
  if (cfg.recipe != Recipe::baseline)
    throw ValidationError("config recipe is not baseline");
  ClsStageOpts opts;
  opts.stage = "baseline";
  opts.stageIdx = 0;
  opts.epochs = cfg.epochs;
  return runClsTraining(cfg, records, outDir, jsonl, observer, opts);
}

FitResult finetune(const TrainConfig& cfg,
                   const std::vector<ImageRecord>& records,
                   const std::string& outDir, std::ostream* jsonl,
                   const StepObserver& observer) {
  if (cfg.recipe != Recipe::finetune)
    throw ValidationError("config recipe is not finetune");
  ClsStageOpts opts;
  opts.stage = "finetune";
  opts.stageIdx = 0;
  opts.epochs = cfg.epochs;
  opts.initCkpt = cfg.initCheckpoint;
  return runClsTraining(cfg, records, outDir, jsonl, observer, opts);
}

FitResult trainMultitask(const TrainConfig& cfg,
                         const std::vector<ImageRecord>& records,
                         const std::string& outDir, std::ostream* jsonl,
                         const StepObserver& observer) {
  if (cfg.recipe != Recipe::multitask)
    throw ValidationError("config recipe is not multitask");
  cfg.validate();
  if (records.empty()) throw ValidationError("no training records");
  fs::create_directories(outDir);

  FitResult res;
  std::string stage1Path = cfg.initCheckpoint;  // used directly when stage 1 is skipped
  if (!cfg.skipStage1) {
    ClsStageOpts opts;
    opts.stage = "stage1";
    opts.stageIdx = 1;
    opts.epochs = resolveEpochs(cfg.stage1Epochs, cfg.epochs);
    opts.initCkpt = cfg.initCheckpoint;
    FitResult s1 = runClsTraining(cfg, records, outDir, jsonl, observer, opts);
    stage1Path = s1.finalCheckpoint().path;
    res.log = std::move(s1.log);
    res.checkpoints = std::move(s1.checkpoints);
  }

  std::vector<const ImageRecord*> trainRecs, valRecs;
  splitTrainVal(records, cfg.valFraction, cfg.seed, trainRecs, valRecs);
  Prepared tr = prepare(trainRecs, cfg.preproc, true);
  Prepared va = prepare(valRecs, cfg.preproc, false);

  Net net;
  buildNet(net, cfg, true, true, false);
  if (!stage1Path.empty()) transferInit(net, cfg, stage1Path, "stage2");

  const int n = static_cast<int>(tr.images.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> uniform(data::kNumClasses, 1.0);
  std::vector<std::string> lastOptParams;

  struct StagePlan {
    std::string name;
    int idx;
    int epochs;
    double wCe, wDice;
    const std::vector<double>* weights;
  };
  std::vector<double> s3w = cfg.stage3ClassWeights.empty()
                                ? uniform
                                : cfg.stage3ClassWeights;
  const StagePlan plans[2] = {
      {"stage2", 2, resolveEpochs(cfg.stage2Epochs, cfg.epochs), cfg.stage2Ce,
       cfg.stage2Dice, &uniform},
      {"stage3", 3, resolveEpochs(cfg.stage3Epochs, cfg.epochs), cfg.stage3Ce,
       cfg.stage3Dice, &s3w},
  };

  for (const StagePlan& plan : plans) {
    nn::Adam opt(net.store.trainable(), cfg.lr);
    const std::uint64_t off = kStageStride * plan.idx;
    for (int e = 0; e < plan.epochs; ++e) {
      const double lr = epochLr(cfg, e, plan.epochs);
      opt.setLr(lr);
      Rng shuf = Rng::stream(cfg.seed, off + kShuffleBase + e);
      Rng aug = Rng::stream(cfg.seed, off + kAugBase + e);
      Rng drop = Rng::stream(cfg.seed, off + kDropBase + e);
      shuffleIdx(order, shuf);

      double lossSum = 0.0, ceSum = 0.0, diceSum = 0.0;
      int correct = 0, step = 0;
      for (int s = 0; s < n; s += cfg.batchSize, ++step) {
        const int bEnd = std::min(n, s + cfg.batchSize);
        std::vector<Tensor> xs, ms;
        std::vector<int> labels;
        for (int i = s; i < bEnd; ++i) {
          const int idx = order[i];
          auto [img, mask] = data::applyAugment(
              tr.images[idx], &tr.segTargets[idx], cfg.augment, aug);
          xs.push_back(std::move(img));
          ms.push_back(std::move(mask));
          labels.push_back(tr.labels[idx]);
        }
        nn::Tape t;
        auto x = t.value(stackBatch(xs));
        auto enc = net.backbone->forward(t, x, true);
        auto logits = net.head->forward(t, enc.pooled, true, drop);
        auto seg = net.decoder->forward(t, enc, cfg.preproc.targetH,
                                        cfg.preproc.targetW);
        auto loss = nn::diceWeightedCrossEntropy(
            t, logits, labels, *plan.weights, seg, stackBatch(ms), plan.wCe,
            plan.wDice);
        const double lv = loss.total->value.at(0);
        const double ce = loss.crossEntropy->value.at(0);
        const double di = loss.dice->value.at(0);
        requireFinite(lv, plan.name, e, step);
        t.backward(loss.total);
        opt.step();

        lossSum += lv * (bEnd - s);
        ceSum += ce * (bEnd - s);
        diceSum += di * (bEnd - s);
        const auto preds = argmaxRows(logits->value);
        for (std::size_t i = 0; i < preds.size(); ++i)
          correct += preds[i] == labels[i];
        if (observer)
          observer(StepInfo{plan.name, e, step, lr, lv,
                            {{"ce", ce}, {"dice", di}}});
      }

      std::map<std::string, double> vals{{"loss", lossSum / n},
                                         {"ce", ceSum / n},
                                         {"dice", diceSum / n},
                                         {"train_acc", double(correct) / n}};
      if (!va.images.empty()) {
        auto report = eval::metrics(predictEval(net, va.images, cfg.batchSize),
                                    va.labels, data::kNumClasses);
        vals["val_f1"] = report.f1Macro;
        vals["val_acc"] = report.accuracy;
      }
      emitEpoch(res.log, jsonl, plan.name, e + 1, lr, std::move(vals));
    }
    lastOptParams = opt.paramNames();
    res.checkpoints.push_back(
        saveStage(cfg, net.store, outDir, plan.name, plan.epochs));
  }

  res.optimizerParams = std::move(lastOptParams);
  if (!va.images.empty()) {
    res.hasVal = true;
    res.valReport = eval::metrics(predictEval(net, va.images, cfg.batchSize),
                                  va.labels, data::kNumClasses);
  }
  if (jsonl) jsonl->flush();
  return res;
}

FitResult trainMoco(const TrainConfig& cfg,
                    const std::vector<ImageRecord>& records,
                    const std::string& outDir, std::ostream* jsonl,
                    const StepObserver& observer) {
  if (cfg.recipe != Recipe::mocoPretrain)
    throw ValidationError("config recipe is not moco_pretrain");
  cfg.validate();
  if (records.empty()) throw ValidationError("no training records");
  fs::create_directories(outDir);

  std::vector<const ImageRecord*> all;
  for (const ImageRecord& r : records) all.push_back(&r);
  Prepared tr = prepare(all, cfg.preproc, false);

  Net netQ, netK;
  buildNet(netQ, cfg, false, false, true);
  buildNet(netK, cfg, false, false, true);
  nn::copyParams(netQ.store, netK.store);

  const double tau = cfg.tau < 0.0 ? defaultTau(cfg.mocoVariant) : cfg.tau;
  Rng queueRng = Rng::stream(cfg.seed, kQueueStream);
  nn::MomentumQueue queue(cfg.queueSize, cfg.projDim, queueRng);
  nn::Adam opt(netQ.store.trainable(), cfg.lr);

  const int n = static_cast<int>(tr.images.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  FitResult res;
  for (int e = 0; e < cfg.epochs; ++e) {
    const double lr = epochLr(cfg, e, cfg.epochs);
    opt.setLr(lr);
    Rng shuf = Rng::stream(cfg.seed, kShuffleBase + e);
    Rng viewBase = Rng::stream(cfg.seed, kViewBase + e);
    shuffleIdx(order, shuf);

    double lossSum = 0.0;
    int step = 0;
    for (int s = 0; s < n; s += cfg.batchSize, ++step) {
      const int bEnd = std::min(n, s + cfg.batchSize);
      std::vector<Tensor> qs, ks;
      for (int i = s; i < bEnd; ++i) {
        const int idx = order[i];
        Rng rq = viewBase.fork(2 * static_cast<std::uint64_t>(idx));
        Rng rk = viewBase.fork(2 * static_cast<std::uint64_t>(idx) + 1);
        auto [vq, vk] = data::mocoPair(tr.images[idx], cfg.mocoVariant, rq, rk);
        qs.push_back(std::move(vq));
        ks.push_back(std::move(vk));
      }

      // Key branch runs on its own tape in eval mode: no gradient flows into
      // the key encoder and its batch-norm statistics are never mutated by a
      // forward pass (they track the query via the momentum blend instead).
      Tensor keys;
      {
        nn::Tape tk;
        auto xk = tk.value(stackBatch(ks));
        auto encK = netK.backbone->forward(tk, xk, false);
        keys = netK.proj->forward(tk, encK.pooled)->value.clone();
      }

      nn::Tape t;
      auto xq = t.value(stackBatch(qs));
      auto encQ = netQ.backbone->forward(t, xq, true);
      auto zq = netQ.proj->forward(t, encQ.pooled);
      auto loss = nn::infoNce(t, zq, t.value(keys), queue.data(), tau);
      const double lv = loss->value.at(0);
      requireFinite(lv, "moco", e, step);
      t.backward(loss);
      opt.step();
      nn::momentumUpdate(netQ.store, netK.store, cfg.momentum);
      queue.enqueue(keys);

      lossSum += lv * (bEnd - s);
      if (observer)
        observer(StepInfo{"moco", e, step, lr, lv,
                          {{"queue_filled", double(queue.filled())}}});
    }
    emitEpoch(res.log, jsonl, "moco", e + 1, lr,
              {{"loss", lossSum / n}, {"tau", tau}});
  }

  res.optimizerParams = opt.paramNames();
  json extra{{"variant", toString(cfg.mocoVariant)},
             {"tau", tau},
             {"queue_size", cfg.queueSize},
             {"momentum", cfg.momentum},
             {"proj_dim", cfg.projDim},
             {"proj_mlp", cfg.projMlp}};
  res.checkpoints.push_back(
      saveStage(cfg, netQ.store, outDir, "moco", cfg.epochs, extra));
  // The key encoder is an artifact of interest in its own right (it is the
  // slowly-moving average of the query) and saving it lets tests pin down
  // the momentum semantics from files alone.
  saveStage(cfg, netK.store, outDir, "moco_key", cfg.epochs, extra);
  if (jsonl) jsonl->flush();
  return res;
}

FitResult trainInpaint(const TrainConfig& cfg,
                       const std::vector<ImageRecord>& records,
                       const std::string& outDir, std::ostream* jsonl,
                       const StepObserver& observer) {
  if (cfg.recipe != Recipe::inpaintPretrain)
    throw ValidationError("config recipe is not inpaint_pretrain");
  cfg.validate();
  if (records.empty()) throw ValidationError("no training records");
  fs::create_directories(outDir);

  std::vector<const ImageRecord*> all;
  for (const ImageRecord& r : records) all.push_back(&r);
  Prepared tr = prepare(all, cfg.preproc, false);
  const double fill = cfg.inpaintFill < 0.0 ? tr.mean : cfg.inpaintFill;
  const int h = cfg.preproc.targetH, w = cfg.preproc.targetW;

  Net net;
  buildNet(net, cfg, false, true, false);
  nn::Adam opt(net.store.trainable(), cfg.lr);

  const int n = static_cast<int>(tr.images.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  FitResult res;
  for (int e = 0; e < cfg.epochs; ++e) {
    const double lr = epochLr(cfg, e, cfg.epochs);
    opt.setLr(lr);
    Rng shuf = Rng::stream(cfg.seed, kShuffleBase + e);
    Rng maskBase = Rng::stream(cfg.seed, kMaskBase + e);
    shuffleIdx(order, shuf);

    double lossSum = 0.0;
    int step = 0;
    Tensor dumpIn, dumpRecon, dumpTarget;
    for (int s = 0; s < n; s += cfg.batchSize, ++step) {
      const int bEnd = std::min(n, s + cfg.batchSize);
      std::vector<Tensor> xs, targets, lossMasks;
      double maskPx = 0.0;
      for (int i = s; i < bEnd; ++i) {
        const int idx = order[i];
        std::vector<data::MaskSpec> masks;
        if (cfg.maskMode == MaskMode::center) {
          masks.push_back(data::centerMask(h, w));
        } else {
          Rng mr = maskBase.fork(static_cast<std::uint64_t>(idx));
          auto [lm, rm] = data::targetedLungMasks(h, w, mr);
          masks = {lm, rm};
        }
        data::InpaintSample sample =
            data::makeInpaintSample(tr.images[idx], masks, fill);
        maskPx += std::accumulate(sample.lossMask.data(),
                                  sample.lossMask.data() + sample.lossMask.size(),
                                  0.0);
        xs.push_back(std::move(sample.input));
        targets.push_back(std::move(sample.target));
        lossMasks.push_back(std::move(sample.lossMask));
      }

      nn::Tape t;
      auto x = t.value(stackBatch(xs));
      auto enc = net.backbone->forward(t, x, true);
      auto recon = net.decoder->forward(t, enc, h, w);
      auto loss =
          nn::maskedMse(t, recon, stackBatch(targets), stackBatch(lossMasks));
      const double lv = loss->value.at(0);
      requireFinite(lv, "inpaint", e, step);
      t.backward(loss);
      opt.step();

      lossSum += lv * (bEnd - s);
      if (observer)
        observer(StepInfo{"inpaint", e, step, lr, lv,
                          {{"mask_px", maskPx / (bEnd - s)}}});
      if (step == 0 && cfg.reconDumpEvery > 0 &&
          (e + 1) % cfg.reconDumpEvery == 0) {
        dumpIn = stackBatch(xs);
        dumpRecon = recon->value.clone();
        dumpTarget = stackBatch(targets);
      }
    }

    if (!dumpIn.empty()) {
      const int b = std::min(4, dumpIn.shape(0));
      Tensor grid({b * h, 3 * w});
      for (int i = 0; i < b; ++i)
        for (int y = 0; y < h; ++y)
          for (int xcol = 0; xcol < w; ++xcol) {
            grid.at(i * h + y, xcol) = 255.0 * dumpIn.at(i, 0, y, xcol);
            grid.at(i * h + y, w + xcol) = 255.0 * dumpRecon.at(i, 0, y, xcol);
            grid.at(i * h + y, 2 * w + xcol) =
                255.0 * dumpTarget.at(i, 0, y, xcol);
          }
      writeGrayPng8(
          (fs::path(outDir) / ("recon_epoch_" + std::to_string(e + 1) + ".png"))
              .string(),
          grid);
    }
    emitEpoch(res.log, jsonl, "inpaint", e + 1, lr,
              {{"loss", lossSum / n}, {"maskedMse", lossSum / n}});
  }

  res.optimizerParams = opt.paramNames();
  json extra{{"mask_mode", toString(cfg.maskMode)}, {"fill", fill}};
  res.checkpoints.push_back(
      saveStage(cfg, net.store, outDir, "inpaint", cfg.epochs, extra));
  if (jsonl) jsonl->flush();
  return res;
}

FitResult runRecipe(const TrainConfig& cfg,
                    const std::vector<ImageRecord>& records,
                    const std::string& outDir, std::ostream* jsonl,
                    const StepObserver& observer) {
  switch (cfg.recipe) {
    case Recipe::baseline:
      return trainBaseline(cfg, records, outDir, jsonl, observer);
    case Recipe::multitask:
      return trainMultitask(cfg, records, outDir, jsonl, observer);
    case Recipe::mocoPretrain:
      return trainMoco(cfg, records, outDir, jsonl, observer);
    case Recipe::inpaintPretrain:
      return trainInpaint(cfg, records, outDir, jsonl, observer);
    case Recipe::finetune:
      return finetune(cfg, records, outDir, jsonl, observer);
  }
  throw ConfigError("unknown recipe value");
}

std::vector<int> predictLabels(
    const TrainConfig& cfg, const std::string& checkpointPath,
    const std::vector<const ImageRecord*>& records) {
  Net net;
  buildNet(net, cfg, true, false, false);
  json meta = nn::loadCheckpoint(checkpointPath, net.store);
  checkInitMeta(meta, cfg, checkpointPath);

  std::vector<Tensor> images;
  images.reserve(records.size());
  for (const ImageRecord* r : records)
    images.push_back(data::preprocess(r->pixels, cfg.preproc));
  return predictEval(net, images, cfg.batchSize);
}

eval::MetricsReport evaluateCheckpoint(
    const TrainConfig& cfg, const std::string& checkpointPath,
    const std::vector<const ImageRecord*>& records) {
  std::vector<int> preds = predictLabels(cfg, checkpointPath, records);
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const ImageRecord* r : records)
    labels.push_back(static_cast<int>(r->label));
  return eval::metrics(preds, labels, data::kNumClasses);
}

}  // namespace cxr::train
