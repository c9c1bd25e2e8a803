#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cxrlab/data/dataset.hpp"

namespace cxr::eval {

struct ConfusionMatrix {
  std::vector<std::vector<long>> counts;  // rows = true class, cols = predicted
  std::vector<std::string> classNames;

  int numClasses() const { return static_cast<int>(counts.size()); }
  long total() const;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

struct MetricsReport {
  double f1Macro = 0.0;
  double accuracy = 0.0;  // percent
  std::vector<ClassMetrics> perClass;
  ConfusionMatrix confusion;
};

/// Tallies counts[t][p]. Class names default to the four-class label set
/// when numClasses is 4, otherwise "class0..".
ConfusionMatrix confusion(const std::vector<int>& preds,
                          const std::vector<int>& labels, int numClasses = 4,
                          std::vector<std::string> classNames = {});

/// Precision/recall/F1 per class with the 0/0 -> 0 convention. The macro
/// average divides by the fixed class count, so classes without support or
/// predictions pull the score down rather than being dropped.
MetricsReport metricsFromConfusion(const ConfusionMatrix& cm);

MetricsReport metrics(const std::vector<int>& preds,
                      const std::vector<int>& labels, int numClasses = 4);

struct KFoldSummary {
  double meanF1 = 0.0, stdF1 = 0.0;   // population std
  double meanAcc = 0.0, stdAcc = 0.0;
  std::vector<MetricsReport> perFold;

  std::string formattedF1() const;   // "0.4621 ± 0.0099"
  std::string formattedAcc() const;  // "62.47 ± 0.99"
};

KFoldSummary kfoldSummary(const std::vector<MetricsReport>& reports);

/// "m ± s" with the given decimal places.
std::string formatMeanStd(double mean, double sd, int decimals);

nlohmann::json toJson(const ClassMetrics& m);
nlohmann::json toJson(const MetricsReport& r);
nlohmann::json toJson(const KFoldSummary& s);

/// Counts as CSV, one header row and one row per true class.
std::string confusionCsv(const ConfusionMatrix& cm);

/// Row-normalized rates for plotting; all-zero rows stay zero.
std::string confusionRowNormalizedCsv(const ConfusionMatrix& cm);

// ---------------------------------------------------------------------------
// Pairwise binary ablations

enum class PairKind {
  typicalIndeterminate,
  atypicalIndeterminate,
  typicalAtypical,
  positiveNegative,  // any pneumonia appearance vs negative
};

std::string toString(PairKind kind);
std::vector<PairKind> allPairKinds();

struct BinarySample {
  const data::ImageRecord* record = nullptr;
  int label = 0;  // 1 = the pair's positive class
};

/// Keeps only records belonging to the pair and maps them to binary labels.
/// For positiveNegative every non-negative class maps to 1.
std::vector<BinarySample> binaryRelabel(
    const std::vector<data::ImageRecord>& records, PairKind kind);

struct BinaryReport {
  PairKind kind = PairKind::positiveNegative;
  double f1Positive = 0.0;  // primary score
  double f1Macro = 0.0;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  bool skipped = false;  // a side of the pair was empty
};

/// Trains and evaluates one binary task per pair via the supplied callback,
/// reusing the given train/test id split. Pairs with an empty side are
/// reported as skipped with a warning instead of failing the run.
using BinaryTrainFn = std::function<std::vector<int>(
    const std::vector<BinarySample>& train,
    const std::vector<BinarySample>& test)>;

std::vector<BinaryReport> pairwiseAblation(
    const std::vector<data::ImageRecord>& records,
    const data::DatasetSplit& split, const std::vector<PairKind>& pairs,
    const BinaryTrainFn& trainAndPredict);

nlohmann::json toJson(const BinaryReport& r);

}  // namespace cxr::eval
