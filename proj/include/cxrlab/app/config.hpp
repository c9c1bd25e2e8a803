#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cxrlab/data/transforms.hpp"
#include "cxrlab/train/training.hpp"

namespace cxr::app {

/// Experiment file, one JSON object with one sub-object per section. Every
/// key has a default, unknown keys are rejected with their full path, and
/// enum-valued strings are validated at load time. The resolved config's
/// content hash is stamped into every artifact a run produces.
struct ExperimentConfig {
  struct Data {
    std::string manifest;       // dataset CSV; synth fills it in when empty
    double testFraction = 0.2;  // holdout share for single-split runs
    int kfold = 1;              // >1 switches train to k-fold protocol
  } data;

  data::PreprocConfig preproc;
  data::AugPolicy augment;

  struct Pretext {
    std::string method = "moco";  // moco | inpaint
    std::string variant = "cxr";  // moco augmentation recipe
    std::string maskMode = "targeted_cxr";
    int queueSize = 4096;
    double momentum = 0.999;
    double tau = -1.0;  // negative -> variant default
    int projDim = 128;
    bool projMlp = false;
    double inpaintFill = -1.0;  // negative -> dataset mean
    int reconDumpEvery = 0;
  } pretext;

  struct Model {
    std::string backbone = "tiny_cnn";
    double headDropout = 0.2;
  } model;

  struct Train {
    int epochs = 10;
    int batchSize = 8;
    double lr = 1e-3;
    std::string schedule = "constant";
    double lrMin = 0.0;
    std::uint64_t seed = 0;
    double valFraction = 0.1;
    std::vector<double> classWeights;  // empty = uniform
    int stage1Epochs = -1;             // -1 -> epochs
    int stage2Epochs = -1;
    int stage3Epochs = -1;
    bool skipStage1 = false;
    double stage2Ce = 0.5;
    double stage2Dice = 0.5;
    double stage3Ce = 0.4;
    double stage3Dice = 0.6;
    std::vector<double> stage3ClassWeights{0.2, 0.2, 0.3, 0.3};
    std::string initCheckpoint;
  } train;

  struct Eval {
    std::string checkpoint;
  } eval;

  struct Interpret {
    std::string layer = "features";
    std::string targetClass = "typical";
    double boxBinWidth = 10.0;
    int maxImages = 16;
  } interpret;

  /// Strict parse; unknown or ill-typed keys raise ConfigError naming the
  /// offending path. Missing keys keep their defaults.
  static ExperimentConfig fromJson(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);

  nlohmann::json toJson() const;

  /// FNV-1a over the canonical serialization, as 16 hex digits.
  std::string hash() const;

  /// Materializes the training-facing view for one recipe, with the config
  /// hash stamped in.
  train::TrainConfig trainConfig(train::Recipe recipe) const;
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

std::string fnv1aHex(const std::string& bytes);

}  // namespace cxr::app
