#include "cxrlab/eval/evaluation.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

#include "cxrlab/core/error.hpp"

namespace cxr::eval {

long ConfusionMatrix::total() const {
  long t = 0;
  for (const auto& row : counts)
    for (long c : row) t += c;
  return t;
}

ConfusionMatrix confusion(const std::vector<int>& preds,
                          const std::vector<int>& labels, int numClasses,
                          std::vector<std::string> classNames) {
  if (preds.size() != labels.size())
    throw ValidationError("prediction and label counts differ");
  if (preds.empty()) throw ValidationError("nothing to evaluate");
  if (numClasses < 2) throw ValidationError("need at least two classes");

  ConfusionMatrix cm;
  cm.counts.assign(numClasses, std::vector<long>(numClasses, 0));
  if (!classNames.empty()) {
    if (static_cast<int>(classNames.size()) != numClasses)
      throw ValidationError("class name count does not match class count");
    cm.classNames = std::move(classNames);
  } else if (numClasses == data::kNumClasses) {
    for (int c = 0; c < numClasses; ++c)
      cm.classNames.push_back(
          data::toString(static_cast<data::ClassLabel>(c)));
  } else {
    for (int c = 0; c < numClasses; ++c)
      cm.classNames.push_back("class" + std::to_string(c));
  }

  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= numClasses || preds[i] < 0 ||
        preds[i] >= numClasses)
      throw ValidationError("class index out of range at sample " +
                            std::to_string(i));
    ++cm.counts[labels[i]][preds[i]];
  }
  return cm;
}

MetricsReport metricsFromConfusion(const ConfusionMatrix& cm) {
  const int n = cm.numClasses();
  MetricsReport r;
  r.confusion = cm;

  long trace = 0;
  double f1Sum = 0.0;
  for (int c = 0; c < n; ++c) {
    long tp = cm.counts[c][c];
    long predicted = 0, support = 0;
    for (int o = 0; o < n; ++o) {
      predicted += cm.counts[o][c];
      support += cm.counts[c][o];
    }
    trace += tp;

    ClassMetrics m;
    m.support = support;
    m.precision = predicted == 0 ? 0.0
                                 : static_cast<double>(tp) /
                                       static_cast<double>(predicted);
    m.recall = support == 0
                   ? 0.0
                   : static_cast<double>(tp) / static_cast<double>(support);
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    f1Sum += m.f1;
    r.perClass.push_back(m);
  }

  r.f1Macro = f1Sum / n;
  r.accuracy = 100.0 * static_cast<double>(trace) /
               static_cast<double>(cm.total());
  return r;
}

MetricsReport metrics(const std::vector<int>& preds,
                      const std::vector<int>& labels, int numClasses) {
  return metricsFromConfusion(confusion(preds, labels, numClasses));
}

std::string formatMeanStd(double mean, double sd, int decimals) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << mean << " ± " << sd;
  return os.str();
}

std::string KFoldSummary::formattedF1() const {
  return formatMeanStd(meanF1, stdF1, 4);
}

std::string KFoldSummary::formattedAcc() const {
  return formatMeanStd(meanAcc, stdAcc, 2);
}

KFoldSummary kfoldSummary(const std::vector<MetricsReport>& reports) {
  if (reports.size() < 2)
    throw ValidationError("k-fold summary needs at least two folds");
  KFoldSummary s;
  s.perFold = reports;
  const auto n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    s.meanF1 += r.f1Macro;
    s.meanAcc += r.accuracy;
  }
  s.meanF1 /= n;
  s.meanAcc /= n;
  for (const auto& r : reports) {
    s.stdF1 += (r.f1Macro - s.meanF1) * (r.f1Macro - s.meanF1);
    s.stdAcc += (r.accuracy - s.meanAcc) * (r.accuracy - s.meanAcc);
  }
  s.stdF1 = std::sqrt(s.stdF1 / n);  // population convention
  s.stdAcc = std::sqrt(s.stdAcc / n);
  return s;
}

nlohmann::json toJson(const ClassMetrics& m) {
  return {{"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"support", m.support}};
}

nlohmann::json toJson(const MetricsReport& r) {
  nlohmann::json perClass = nlohmann::json::array();
  for (std::size_t c = 0; c < r.perClass.size(); ++c) {
    auto j = toJson(r.perClass[c]);
    j["class"] = r.confusion.classNames[c];
    perClass.push_back(j);
  }
  return {{"f1_macro", r.f1Macro},
          {"accuracy", r.accuracy},
          {"per_class", perClass},
          {"confusion", r.confusion.counts}};
}

nlohmann::json toJson(const KFoldSummary& s) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& r : s.perFold) folds.push_back(toJson(r));
  return {{"mean_f1", s.meanF1},       {"std_f1", s.stdF1},
          {"mean_accuracy", s.meanAcc}, {"std_accuracy", s.stdAcc},
          {"f1_formatted", s.formattedF1()},
          {"accuracy_formatted", s.formattedAcc()},
          {"folds", folds}};
}

std::string confusionCsv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "true\\pred";
  for (const auto& name : cm.classNames) os << "," << name;
  os << "\n";
  for (int t = 0; t < cm.numClasses(); ++t) {
    os << cm.classNames[t];
    for (int p = 0; p < cm.numClasses(); ++p) os << "," << cm.counts[t][p];
    os << "\n";
  }
  return os.str();
}

std::string confusionRowNormalizedCsv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "true\\pred";
  for (const auto& name : cm.classNames) os << "," << name;
  os << "\n";
  for (int t = 0; t < cm.numClasses(); ++t) {
    long rowSum = 0;
    for (int p = 0; p < cm.numClasses(); ++p) rowSum += cm.counts[t][p];
    os << cm.classNames[t];
    for (int p = 0; p < cm.numClasses(); ++p) {
      const double rate =
          rowSum == 0 ? 0.0
                      : static_cast<double>(cm.counts[t][p]) /
                            static_cast<double>(rowSum);
      os << "," << rate;
    }
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------

std::string toString(PairKind kind) {
  switch (kind) {
    case PairKind::typicalIndeterminate: return "typical_vs_indeterminate";
    case PairKind::atypicalIndeterminate: return "atypical_vs_indeterminate";
    case PairKind::typicalAtypical: return "typical_vs_atypical";
    case PairKind::positiveNegative: return "positive_vs_negative";
  }
  return "positive_vs_negative";
}

std::vector<PairKind> allPairKinds() {
  return {PairKind::typicalIndeterminate, PairKind::atypicalIndeterminate,
          PairKind::typicalAtypical, PairKind::positiveNegative};
}

namespace {

// positive class first, negative class second; positiveNegative handled
// separately since it pools three classes
struct PairClasses {
  data::ClassLabel positive;
  data::ClassLabel negative;
};

PairClasses pairClasses(PairKind kind) {
  using data::ClassLabel;
  switch (kind) {
    case PairKind::typicalIndeterminate:
      return {ClassLabel::typical, ClassLabel::indeterminate};
    case PairKind::atypicalIndeterminate:
      return {ClassLabel::atypical, ClassLabel::indeterminate};
    case PairKind::typicalAtypical:
      return {ClassLabel::typical, ClassLabel::atypical};
    case PairKind::positiveNegative:
      return {ClassLabel::typical, ClassLabel::negative};
  }
  return {data::ClassLabel::typical, data::ClassLabel::negative};
}

}  // namespace

std::vector<BinarySample> binaryRelabel(
    const std::vector<data::ImageRecord>& records, PairKind kind) {
  std::vector<BinarySample> out;
  for (const auto& r : records) {
    if (kind == PairKind::positiveNegative) {
      out.push_back(
          {&r, r.label == data::ClassLabel::negative ? 0 : 1});
      continue;
    }
    const PairClasses pc = pairClasses(kind);
    if (r.label == pc.positive)
      out.push_back({&r, 1});
    else if (r.label == pc.negative)
      out.push_back({&r, 0});
  }
  return out;
}

std::vector<BinaryReport> pairwiseAblation(
    const std::vector<data::ImageRecord>& records,
    const data::DatasetSplit& split, const std::vector<PairKind>& pairs,
    const BinaryTrainFn& trainAndPredict) {
  auto subset = [&](const std::vector<std::string>& ids) {
    std::vector<data::ImageRecord> out;
    for (const auto& id : ids) {
      const auto* r = data::findRecord(records, id);
      if (!r) throw ValidationError("split references unknown id: " + id);
      out.push_back(*r);
    }
    return out;
  };
  const std::vector<data::ImageRecord> trainRecords = subset(split.trainIds);
  const std::vector<data::ImageRecord> testRecords = subset(split.testIds);

  std::vector<BinaryReport> reports;
  for (PairKind kind : pairs) {
    BinaryReport report;
    report.kind = kind;

    const auto train = binaryRelabel(trainRecords, kind);
    const auto test = binaryRelabel(testRecords, kind);
    auto countSide = [](const std::vector<BinarySample>& v, int label) {
      long n = 0;
      for (const auto& s : v)
        if (s.label == label) ++n;
      return n;
    };
    if (countSide(train, 0) == 0 || countSide(train, 1) == 0 ||
        countSide(test, 0) == 0 || countSide(test, 1) == 0) {
      std::cerr << "[ablate] skipping " << toString(kind)
                << ": one side of the pair has no records\n";
      report.skipped = true;
      reports.push_back(report);
      continue;
    }

    const std::vector<int> preds = trainAndPredict(train, test);
    if (preds.size() != test.size())
      throw ValidationError("ablation callback returned wrong count");
    std::vector<int> labels;
    for (const auto& s : test) labels.push_back(s.label);

    const MetricsReport m = metricsFromConfusion(
        confusion(preds, labels, 2, {"negative", "positive"}));
    report.f1Positive = m.perClass[1].f1;
    report.f1Macro = m.f1Macro;
    report.accuracy = m.accuracy;
    report.confusion = m.confusion;
    reports.push_back(report);
  }
  return reports;
}

nlohmann::json toJson(const BinaryReport& r) {
  nlohmann::json j{{"pair", toString(r.kind)}, {"skipped", r.skipped}};
  if (!r.skipped) {
    j["f1_positive"] = r.f1Positive;
    j["f1_macro"] = r.f1Macro;
    j["accuracy"] = r.accuracy;
    j["confusion"] = r.confusion.counts;
  }
  return j;
}

}  // namespace cxr::eval
