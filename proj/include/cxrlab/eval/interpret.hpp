#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cxrlab/core/tensor.hpp"
#include "cxrlab/data/dataset.hpp"
#include "cxrlab/data/transforms.hpp"
#include "cxrlab/nn/models.hpp"
#include "cxrlab/train/training.hpp"

namespace cxr::interp {

/// Spatial taps that can be analyzed: "stage0".."stageN-1" plus "features"
/// (the last conv map, which is also the default).
std::vector<std::string> availableLayers(const nn::Backbone& backbone);

struct Heatmap {
  Tensor values;  // [H, W] in [0, 1]
  std::string sourceLayer;
  data::ClassLabel targetClass = data::ClassLabel::negative;
};

/// Class-discriminative heatmap: channel weights are the spatial means of
/// the target logit's gradient at the layer, the weighted activation sum is
/// rectified, upsampled bilinearly to the input size, and normalized by its
/// maximum. A map with no positive contributions comes back all zeros.
Heatmap gradCam(const nn::Backbone& backbone, const nn::Classifier& head,
                const Tensor& image, data::ClassLabel targetClass,
                const std::string& layerName = "features");

void writeHeatmapPng(const Heatmap& hm, const std::string& path);

/// Mean heatmap value inside vs outside the record's box-union mask,
/// rescaled to the heatmap resolution. Records without boxes are an error.
struct BoxLocalization {
  double insideMean = 0.0;
  double outsideMean = 0.0;
};
BoxLocalization boxLocalization(const Heatmap& hm,
                                const data::ImageRecord& record);

struct FeatureMapDump {
  Tensor maps;  // [C, h, w] raw activations
  Tensor grid;  // tiled overview, each map min-max scaled to 0..255
  int tileRows = 0;
  int tileCols = 0;
  std::string layer;
};

/// Eval-mode activations of one layer for one image, as a raw stack plus a
/// near-square tile grid (row major, unused cells black).
FeatureMapDump featureMaps(const nn::Backbone& backbone, const Tensor& image,
                           const std::string& layerName = "features");

/// Writes `stem.png` (grid), `stem.bin` (raw doubles, channel major), and
/// `stem.json` (shape and layer metadata).
void writeFeatureMapDump(const FeatureMapDump& dump, const std::string& stem);

struct EmbeddingDump {
  Tensor features;  // [N, featureDim], input record order
  std::vector<int> labels;
  std::vector<std::string> ids;
  std::string layer;
  std::string checkpointRef;
};

/// Pooled encoder features per record, eval mode.
EmbeddingDump exportEmbeddings(const nn::Backbone& backbone,
                               const std::vector<const data::ImageRecord*>& records,
                               const data::PreprocConfig& preproc,
                               const std::string& checkpointRef = "");

/// CSV with header `id,label,f0..f{d-1}`.
void writeEmbeddingsCsv(const EmbeddingDump& dump, const std::string& path);

/// Any [N, d] -> [N, 2] projection plugs in here; the built-in reducer is a
/// two-component PCA with deterministic sign conventions.
using Reducer2d = std::function<Tensor(const Tensor&)>;
Tensor pcaReduce2d(const Tensor& features);

/// CSV with header `id,label,x,y` for scatter plots.
void writeReducedCsv(const EmbeddingDump& dump, const Tensor& xy,
                     const std::string& path);

struct BoxDimStats {
  // dim = sqrt(w' * h') with box sides rescaled per axis to 224x224
  std::vector<std::vector<double>> dims;  // per class, record order
  std::vector<double> means;              // 0 for classes without boxes
  std::vector<long> counts;
};

BoxDimStats boxDimStats(const std::vector<data::ImageRecord>& records);

/// One `class,dim` row per box (raw plot data).
void writeBoxDimCsv(const BoxDimStats& stats, const std::string& path);

/// Binned counts per class: `class,bin_lo,bin_hi,count`, plus a trailing
/// `class,mean,count` summary block separated by a comment line.
void writeBoxDimHistogramCsv(const BoxDimStats& stats, double binWidth,
                             const std::string& path);

/// Rebuilds an encoder (optionally with the classification head) and fills
/// it from a checkpoint. Pretraining checkpoints load encoder-only models;
/// loading with the head requires a classification checkpoint.
struct AnalysisModel {
  nn::ParamStore store;
  std::optional<nn::Backbone> backbone;
  std::optional<nn::Classifier> head;
};

AnalysisModel loadAnalysisModel(const train::TrainConfig& cfg,
                                const std::string& checkpointPath,
                                bool withHead);

}  // namespace cxr::interp
