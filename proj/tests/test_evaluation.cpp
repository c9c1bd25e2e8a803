#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cxrlab/core/error.hpp"
#include "cxrlab/core/rng.hpp"
#include "cxrlab/eval/evaluation.hpp"

using namespace cxr;
using namespace cxr::eval;

namespace {

std::vector<int> randomClasses(int n, int numClasses, Rng& rng) {
  std::vector<int> v(n);
  for (int& x : v) x = static_cast<int>(rng.uniformInt(0, numClasses - 1));
  return v;
}

// per-class scores computed from scratch without the confusion matrix
struct BruteScores {
  double precision, recall, f1;
};

BruteScores bruteClass(const std::vector<int>& preds,
                       const std::vector<int>& labels, int c) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == c && labels[i] == c) ++tp;
    if (preds[i] == c && labels[i] != c) ++fp;
    if (preds[i] != c && labels[i] == c) ++fn;
  }
  BruteScores s{};
  s.precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
  s.recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
  s.f1 = s.precision + s.recall == 0.0
             ? 0.0
             : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

}  // namespace

TEST_CASE("confusion matrix counts per-pair occurrences") {
  const std::vector<int> labels = {0, 0, 1, 2, 3, 3, 1, 2};
  const std::vector<int> preds = {0, 1, 1, 2, 3, 0, 1, 3};
  const ConfusionMatrix cm = confusion(preds, labels);
  CHECK(cm.total() == 8);
  CHECK(cm.counts[0][0] == 1);
  CHECK(cm.counts[0][1] == 1);
  CHECK(cm.counts[1][1] == 2);
  CHECK(cm.counts[2][2] == 1);
  CHECK(cm.counts[2][3] == 1);
  CHECK(cm.counts[3][3] == 1);
  CHECK(cm.counts[3][0] == 1);
  CHECK(cm.classNames[0] == "negative");
  CHECK(cm.classNames[3] == "atypical");
}

TEST_CASE("confusion matrix validates its inputs") {
  CHECK_THROWS_AS(confusion({0, 1}, {0}), ValidationError);
  CHECK_THROWS_AS(confusion({}, {}), ValidationError);
  CHECK_THROWS_AS(confusion({4}, {0}), ValidationError);
  CHECK_THROWS_AS(confusion({0}, {-1}), ValidationError);
}

TEST_CASE("perfect predictions give a diagonal matrix and perfect scores") {
  Rng rng(1);
  const std::vector<int> labels = randomClasses(40, 4, rng);
  const MetricsReport r = metrics(labels, labels);
  CHECK(r.f1Macro == doctest::Approx(1.0));
  CHECK(r.accuracy == doctest::Approx(100.0));
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p)
      if (t != p) CHECK(r.confusion.counts[t][p] == 0);
}

TEST_CASE("all-one-class predictions hit the 1/3 macro-F1 worked example") {
  std::vector<int> labels(20, 0);
  std::fill(labels.begin() + 10, labels.end(), 1);
  const std::vector<int> preds(20, 0);
  const MetricsReport r = metrics(preds, labels, 2);
  CHECK(r.accuracy == doctest::Approx(50.0));
  CHECK(r.f1Macro == doctest::Approx(1.0 / 3.0));
  CHECK(r.perClass[0].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(r.perClass[1].f1 == 0.0);
}

TEST_CASE("metrics agree with the brute-force formulas on 100 random vectors") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = static_cast<int>(rng.uniformInt(1, 60));
    const int k = static_cast<int>(rng.uniformInt(2, 4));
    const auto labels = randomClasses(n, k, rng);
    const auto preds = randomClasses(n, k, rng);
    const MetricsReport r = metrics(preds, labels, k);

    long correct = 0;
    double f1Sum = 0.0;
    for (int c = 0; c < k; ++c) {
      const BruteScores s = bruteClass(preds, labels, c);
      CHECK(r.perClass[c].precision == doctest::Approx(s.precision));
      CHECK(r.perClass[c].recall == doctest::Approx(s.recall));
      CHECK(r.perClass[c].f1 == doctest::Approx(s.f1));
      f1Sum += s.f1;
    }
    for (int i = 0; i < n; ++i)
      if (preds[i] == labels[i]) ++correct;
    CHECK(r.f1Macro == doctest::Approx(f1Sum / k));
    CHECK(r.accuracy == doctest::Approx(100.0 * correct / n));
  }
}

TEST_CASE("metrics are permutation-invariant over sample order") {
  Rng rng(7);
  auto labels = randomClasses(50, 4, rng);
  auto preds = randomClasses(50, 4, rng);
  const MetricsReport before = metrics(preds, labels);

  for (int i = 49; i > 0; --i) {
    const int j = static_cast<int>(rng.uniformInt(0, i));
    std::swap(labels[i], labels[j]);
    std::swap(preds[i], preds[j]);
  }
  const MetricsReport after = metrics(preds, labels);
  CHECK(before.f1Macro == after.f1Macro);
  CHECK(before.accuracy == after.accuracy);
}

TEST_CASE("recomputing from the confusion matrix changes nothing") {
  Rng rng(8);
  const auto labels = randomClasses(64, 4, rng);
  const auto preds = randomClasses(64, 4, rng);
  const MetricsReport direct = metrics(preds, labels);
  const MetricsReport indirect = metricsFromConfusion(direct.confusion);
  CHECK(direct.f1Macro == indirect.f1Macro);
  CHECK(direct.accuracy == indirect.accuracy);
  for (int c = 0; c < 4; ++c)
    CHECK(direct.perClass[c].f1 == indirect.perClass[c].f1);
}

TEST_CASE("k-fold summary reproduces the two-point example and an oracle") {
  MetricsReport a;
  a.f1Macro = 0.4;
  a.accuracy = 60.0;
  MetricsReport b;
  b.f1Macro = 0.5;
  b.accuracy = 70.0;
  const KFoldSummary two = kfoldSummary({a, b});
  CHECK(two.meanF1 == doctest::Approx(0.45));
  CHECK(two.stdF1 == doctest::Approx(0.05));
  CHECK(two.meanAcc == doctest::Approx(65.0));
  CHECK(two.stdAcc == doctest::Approx(5.0));

  const KFoldSummary same = kfoldSummary({a, a, a});
  CHECK(same.stdF1 <= 1e-12);  // identical folds, up to summation roundoff
  CHECK(same.stdAcc <= 1e-12);

  Rng rng(12);
  std::vector<MetricsReport> reports(5);
  for (auto& r : reports) {
    r.f1Macro = rng.uniform01();
    r.accuracy = rng.uniform(0, 100);
  }
  const KFoldSummary s = kfoldSummary(reports);
  double mean = 0.0;
  for (const auto& r : reports) mean += r.f1Macro;
  mean /= 5.0;
  double var = 0.0;
  for (const auto& r : reports)
    var += (r.f1Macro - mean) * (r.f1Macro - mean);
  CHECK(s.meanF1 == doctest::Approx(mean).epsilon(1e-12));
  CHECK(s.stdF1 == doctest::Approx(std::sqrt(var / 5.0)).epsilon(1e-12));

  CHECK_THROWS_AS(kfoldSummary({a}), ValidationError);
}

TEST_CASE("mean-std strings follow the table convention") {
  CHECK(formatMeanStd(0.4621, 0.0099, 4) == "0.4621 ± 0.0099");
  CHECK(formatMeanStd(62.47, 0.99, 2) == "62.47 ± 0.99");
  MetricsReport a;
  a.f1Macro = 0.46214;
  a.accuracy = 62.471;
  const KFoldSummary s = kfoldSummary({a, a});
  CHECK(s.formattedF1() == "0.4621 ± 0.0000");
  CHECK(s.formattedAcc() == "62.47 ± 0.00");
}

TEST_CASE("binary relabeling mirrors the pair definitions") {
  const auto records = data::generatePhantomDataset(8, 32, 32, 2);

  const auto posNeg = binaryRelabel(records, PairKind::positiveNegative);
  CHECK(posNeg.size() == 8);
  for (const auto& s : posNeg)
    CHECK(s.label ==
          ((s.record->label == data::ClassLabel::negative) ? 0 : 1));

  const auto typAtyp = binaryRelabel(records, PairKind::typicalAtypical);
  CHECK(typAtyp.size() == 4);  // 2 typical + 2 atypical of the 8
  for (const auto& s : typAtyp) {
    CHECK((s.record->label == data::ClassLabel::typical ||
           s.record->label == data::ClassLabel::atypical));
    CHECK(s.label ==
          ((s.record->label == data::ClassLabel::typical) ? 1 : 0));
  }
}

TEST_CASE("pairwise ablation reuses the split and skips empty pairs") {
  const auto records = data::generatePhantomDataset(40, 32, 32, 6);
  const auto split = data::makeSplit(records, 0.2, 1);

  int calls = 0;
  auto alwaysPositive = [&](const std::vector<BinarySample>& train,
                            const std::vector<BinarySample>& test) {
    ++calls;
    CHECK(!train.empty());
    return std::vector<int>(test.size(), 1);
  };
  const auto reports =
      pairwiseAblation(records, split, allPairKinds(), alwaysPositive);
  REQUIRE(reports.size() == 4);
  CHECK(calls == 4);
  for (const auto& r : reports) {
    CHECK_FALSE(r.skipped);
    CHECK(r.accuracy > 0.0);
    CHECK(r.f1Positive > 0.0);  // positive side always predicted
  }
  // constant-positive predictor: recall 1, so F1 = 2P/(P+1)
  const auto& pn = reports[3];
  CHECK((pn.kind == PairKind::positiveNegative));

  // drop every atypical record: pairs touching it must be skipped
  std::vector<data::ImageRecord> noAtypical;
  for (const auto& r : records)
    if (r.label != data::ClassLabel::atypical) noAtypical.push_back(r);
  const auto split2 = data::makeSplit(noAtypical, 0.2, 1);
  const auto reports2 =
      pairwiseAblation(noAtypical, split2, allPairKinds(), alwaysPositive);
  CHECK(reports2[0].skipped == false);  // typical vs indeterminate
  CHECK(reports2[1].skipped == true);   // atypical vs indeterminate
  CHECK(reports2[2].skipped == true);   // typical vs atypical
  CHECK(reports2[3].skipped == false);
}

TEST_CASE("report serialization carries the headline numbers") {
  Rng rng(3);
  const auto labels = randomClasses(30, 4, rng);
  const auto preds = randomClasses(30, 4, rng);
  const MetricsReport r = metrics(preds, labels);
  const nlohmann::json j = toJson(r);
  CHECK(j.at("f1_macro").get<double>() == doctest::Approx(r.f1Macro));
  CHECK(j.at("per_class").size() == 4);

  const std::string csv = confusionCsv(r.confusion);
  CHECK(csv.find("negative") != std::string::npos);
  const std::string norm = confusionRowNormalizedCsv(r.confusion);
  CHECK(norm.find("true\\pred") != std::string::npos);
}
