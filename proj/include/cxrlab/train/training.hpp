#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cxrlab/data/dataset.hpp"
#include "cxrlab/data/transforms.hpp"
#include "cxrlab/eval/evaluation.hpp"
#include "cxrlab/nn/models.hpp"

namespace cxr::train {

enum class Recipe { baseline, multitask, mocoPretrain, inpaintPretrain, finetune };
enum class Schedule { constant, cosine };
enum class MaskMode { center, targetedCxr };

Recipe recipeFromString(const std::string& s);
std::string toString(Recipe r);
Schedule scheduleFromString(const std::string& s);
std::string toString(Schedule s);
MaskMode maskModeFromString(const std::string& s);
std::string toString(MaskMode m);

/// lr(e) = lrMin + (lrMax - lrMin) * (1 + cos(pi * e / total)) / 2.
double cosineAnnealLr(int epoch, int total, double lrMax, double lrMin);

/// Temperature defaults per contrastive variant: 0.07 for the modified
/// recipe, 0.2 otherwise.
double defaultTau(data::MocoVariant v);

struct TrainConfig {
  Recipe recipe = Recipe::baseline;
  nn::BackboneName backbone = nn::BackboneName::tinyCnn;
  int epochs = 10;
  int batchSize = 8;
  double lr = 1e-3;
  Schedule schedule = Schedule::constant;
  double lrMin = 0.0;
  std::uint64_t seed = 0;
  double valFraction = 0.1;  // stratified per-epoch validation carve-out
  double headDropout = 0.2;
  data::PreprocConfig preproc;  // targetH/targetW set the model input size
  data::AugPolicy augment;      // applied to labeled training batches
  std::vector<double> classWeights;  // empty = uniform

  // multitask staging; negative epoch counts fall back to `epochs`
  int stage1Epochs = -1;
  int stage2Epochs = -1;
  int stage3Epochs = -1;
  bool skipStage1 = false;
  double stage2Ce = 0.5;
  double stage2Dice = 0.5;
  double stage3Ce = 0.4;
  double stage3Dice = 0.6;
  std::vector<double> stage3ClassWeights = {0.2, 0.2, 0.3, 0.3};

  // momentum contrast
  data::MocoVariant mocoVariant = data::MocoVariant::cxr;
  int queueSize = 4096;
  double momentum = 0.999;
  double tau = -1.0;  // negative selects the variant default
  int projDim = 128;
  bool projMlp = false;

  // inpainting
  MaskMode maskMode = MaskMode::targetedCxr;
  double inpaintFill = -1.0;  // negative selects the dataset mean
  int reconDumpEvery = 0;     // dump a recon grid every n epochs; 0 = never

  // fine-tuning
  std::string initCheckpoint;

  std::string configHash;  // recorded in checkpoint metadata

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  std::string stage;
  std::map<std::string, double> values;
};

struct CheckpointRef {
  std::string path;
  std::string stage;
  int epoch = 0;
  std::string configHash;
};

struct StepInfo {
  std::string stage;
  int epoch = 0;
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::map<std::string, double> parts;  // loss components, metrics
};
using StepObserver = std::function<void(const StepInfo&)>;

struct FitResult {
  std::vector<EpochLog> log;
  std::vector<CheckpointRef> checkpoints;  // final checkpoint last
  std::vector<std::string> optimizerParams;
  bool hasVal = false;
  eval::MetricsReport valReport;

  const CheckpointRef& finalCheckpoint() const;
};

/// Supervised 4-way classification with weighted cross-entropy.
FitResult trainBaseline(const TrainConfig& cfg,
                        const std::vector<data::ImageRecord>& records,
                        const std::string& outDir,
                        std::ostream* jsonlLog = nullptr,
                        const StepObserver& observer = {});

/// Three-stage recipe: classification pre-train, equal-weight seg+cls,
/// then Dice-weighted fine-tuning with class weights. Emits one checkpoint
/// per stage; stage 1 can be skipped.
FitResult trainMultitask(const TrainConfig& cfg,
                         const std::vector<data::ImageRecord>& records,
                         const std::string& outDir,
                         std::ostream* jsonlLog = nullptr,
                         const StepObserver& observer = {});

/// Contrastive pre-training with a momentum key encoder and negatives
/// queue. Labels are ignored.
FitResult trainMoco(const TrainConfig& cfg,
                    const std::vector<data::ImageRecord>& records,
                    const std::string& outDir,
                    std::ostream* jsonlLog = nullptr,
                    const StepObserver& observer = {});

/// Reconstruction pre-training over masked regions. Labels are ignored.
FitResult trainInpaint(const TrainConfig& cfg,
                       const std::vector<data::ImageRecord>& records,
                       const std::string& outDir,
                       std::ostream* jsonlLog = nullptr,
                       const StepObserver& observer = {});

/// Loads encoder weights from cfg.initCheckpoint, attaches a fresh head,
/// and trains 4-way classification.
FitResult finetune(const TrainConfig& cfg,
                   const std::vector<data::ImageRecord>& records,
                   const std::string& outDir,
                   std::ostream* jsonlLog = nullptr,
                   const StepObserver& observer = {});

/// Dispatches on cfg.recipe.
FitResult runRecipe(const TrainConfig& cfg,
                    const std::vector<data::ImageRecord>& records,
                    const std::string& outDir,
                    std::ostream* jsonlLog = nullptr,
                    const StepObserver& observer = {});

/// Eval-mode class predictions from a classification checkpoint. The
/// checkpoint's architecture metadata must match the config.
std::vector<int> predictLabels(const TrainConfig& cfg,
                               const std::string& checkpointPath,
                               const std::vector<const data::ImageRecord*>& records);

eval::MetricsReport evaluateCheckpoint(
    const TrainConfig& cfg, const std::string& checkpointPath,
    const std::vector<const data::ImageRecord*>& records);

}  // namespace cxr::train
