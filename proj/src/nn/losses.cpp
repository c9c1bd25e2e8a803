#include "cxrlab/nn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "cxrlab/core/error.hpp"

namespace cxr::nn {

namespace {

Tensor scalar(double v) {
  Tensor t({1});
  t[0] = v;
  return t;
}

double stableSigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

NodePtr weightedCrossEntropy(Tape& t, NodePtr logits,
                             const std::vector<int>& labels,
                             const std::vector<double>& classWeights) {
  if (logits->value.dim() != 2)
    throw ValidationError("cross entropy expects logits of shape [N, C]");
  const int N = logits->value.shape(0), C = logits->value.shape(1);
  if (static_cast<int>(labels.size()) != N)
    throw ValidationError("label count does not match batch size");
  if (static_cast<int>(classWeights.size()) != C)
    throw ValidationError("class weight count does not match class count");
  for (double w : classWeights)
    if (w < 0.0) throw ValidationError("class weights must be non-negative");
  for (int label : labels)
    if (label < 0 || label >= C)
      throw ValidationError("label out of range: " + std::to_string(label));

  // softmax per row, stored for the backward pass
  auto probs = std::make_shared<Tensor>(Tensor({N, C}));
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    const double* z = logits->value.data() + static_cast<std::size_t>(n) * C;
    const double zmax = *std::max_element(z, z + C);
    double denom = 0.0;
    for (int c = 0; c < C; ++c) denom += std::exp(z[c] - zmax);
    const double logDenom = std::log(denom);
    for (int c = 0; c < C; ++c)
      probs->at(n, c) = std::exp(z[c] - zmax) / denom;
    const int y = labels[n];
    loss += classWeights[y] * (-(z[y] - zmax - logDenom));
  }
  loss /= N;

  return t.custom(
      scalar(loss), {logits},
      [logits, probs, labels, classWeights, N, C](Node& self) {
        if (!logits->needsGrad) return;
        const double up = self.grad[0];
        Tensor& gi = logits->ensureGrad();
        for (int n = 0; n < N; ++n) {
          const int y = labels[n];
          const double w = classWeights[y] * up / N;
          for (int c = 0; c < C; ++c)
            gi.at(n, c) += w * (probs->at(n, c) - (c == y ? 1.0 : 0.0));
        }
      });
}

NodePtr diceLoss(Tape& t, NodePtr segLogits, const Tensor& target,
                 double eps) {
  if (!segLogits->value.sameShape(target))
    throw ValidationError("dice loss: prediction and target shapes differ");
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target[i] < 0.0 || target[i] > 1.0)
      throw ValidationError("dice loss target must lie in [0, 1]");

  const std::size_t size = segLogits->value.size();
  auto probs = std::make_shared<Tensor>(segLogits->value.shape());
  double inter = 0.0, sumG = 0.0, sumS = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double s = stableSigmoid(segLogits->value[i]);
    (*probs)[i] = s;
    inter += target[i] * s;
    sumG += target[i];
    sumS += s;
  }
  const double denom = sumG + sumS + eps;
  const double loss = 1.0 - (2.0 * inter + eps) / denom;

  auto targetCopy = std::make_shared<Tensor>(target.clone());
  return t.custom(
      scalar(loss), {segLogits},
      [segLogits, probs, targetCopy, inter, eps, denom, size](Node& self) {
        if (!segLogits->needsGrad) return;
        const double up = self.grad[0];
        Tensor& gi = segLogits->ensureGrad();
        const double num = 2.0 * inter + eps;
        for (std::size_t i = 0; i < size; ++i) {
          const double s = (*probs)[i];
          const double g = (*targetCopy)[i];
          // d/ds of -(2I+eps)/(G+S+eps) via quotient rule
          const double dLds = -(2.0 * g * denom - num) / (denom * denom);
          gi[i] += up * dLds * s * (1.0 - s);
        }
      });
}

CompoundLoss diceWeightedCrossEntropy(Tape& t, NodePtr logits,
                                      const std::vector<int>& labels,
                                      const std::vector<double>& classWeights,
                                      NodePtr segLogits, const Tensor& target,
                                      double wCe, double wDice) {
  if (wCe < 0.0 || wDice < 0.0)
    throw ValidationError("loss weights must be non-negative");
  CompoundLoss out;
  out.crossEntropy = weightedCrossEntropy(t, logits, labels, classWeights);
  out.dice = diceLoss(t, segLogits, target);
  out.total = t.add(t.scale(out.crossEntropy, wCe), t.scale(out.dice, wDice));
  return out;
}

NodePtr infoNce(Tape& t, NodePtr q, NodePtr kPos, const Tensor& queue,
                double tau) {
  if (tau <= 0.0)
    throw ValidationError("temperature must be positive");
  if (q->value.dim() != 2 || kPos->value.dim() != 2)
    throw ValidationError("contrastive inputs must be [N, d]");
  if (!q->value.sameShape(kPos->value))
    throw ValidationError("query and key batches must match");
  const int N = q->value.shape(0), D = q->value.shape(1);
  const int K = queue.size() == 0 ? 0 : queue.shape(0);
  if (K > 0 && queue.shape(1) != D)
    throw ValidationError("queue dimension does not match embeddings");

  // probs over K+1 logits per sample, positive at index 0
  auto probs = std::make_shared<Tensor>(Tensor({N, K + 1}));
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    const double* qn = q->value.data() + static_cast<std::size_t>(n) * D;
    std::vector<double> logits(K + 1);
    double dot = 0.0;
    for (int i = 0; i < D; ++i) dot += qn[i] * kPos->value.at(n, i);
    logits[0] = dot / tau;
    for (int k = 0; k < K; ++k) {
      double d = 0.0;
      const double* row = queue.data() + static_cast<std::size_t>(k) * D;
      for (int i = 0; i < D; ++i) d += qn[i] * row[i];
      logits[k + 1] = d / tau;
    }
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - zmax);
    for (int j = 0; j <= K; ++j)
      probs->at(n, j) = std::exp(logits[j] - zmax) / denom;
    loss += -(logits[0] - zmax - std::log(denom));
  }
  loss /= N;

  auto queueCopy = std::make_shared<Tensor>(queue.clone());
  return t.custom(
      scalar(loss), {q, kPos},
      [q, kPos, probs, queueCopy, tau, N, D, K](Node& self) {
        const double up = self.grad[0];
        for (int n = 0; n < N; ++n) {
          const double* qn = q->value.data() + static_cast<std::size_t>(n) * D;
          // dL/dlogit_j = (p_j - [j == 0]) / N
          if (q->needsGrad) {
            Tensor& gq = q->ensureGrad();
            double* gqn = gq.data() + static_cast<std::size_t>(n) * D;
            const double c0 = up * (probs->at(n, 0) - 1.0) / (N * tau);
            for (int i = 0; i < D; ++i) gqn[i] += c0 * kPos->value.at(n, i);
            for (int k = 0; k < K; ++k) {
              const double ck = up * probs->at(n, k + 1) / (N * tau);
              const double* row =
                  queueCopy->data() + static_cast<std::size_t>(k) * D;
              for (int i = 0; i < D; ++i) gqn[i] += ck * row[i];
            }
          }
          if (kPos->needsGrad) {
            Tensor& gk = kPos->ensureGrad();
            const double c0 = up * (probs->at(n, 0) - 1.0) / (N * tau);
            for (int i = 0; i < D; ++i) gk.at(n, i) += c0 * qn[i];
          }
        }
      });
}

NodePtr maskedMse(Tape& t, NodePtr recon, const Tensor& target,
                  const Tensor& mask) {
  if (!recon->value.sameShape(target) || !recon->value.sameShape(mask))
    throw ValidationError("masked mse: shapes differ");
  double count = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0.0 && mask[i] != 1.0)
      throw ValidationError("mask must be binary");
    count += mask[i];
  }
  if (count == 0.0)
    throw ValidationError("masked mse: mask selects no pixels");

  const std::size_t size = recon->value.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    if (mask[i] == 0.0) continue;
    const double d = recon->value[i] - target[i];
    loss += d * d;
  }
  loss /= count;

  auto targetCopy = std::make_shared<Tensor>(target.clone());
  auto maskCopy = std::make_shared<Tensor>(mask.clone());
  return t.custom(
      scalar(loss), {recon},
      [recon, targetCopy, maskCopy, count, size](Node& self) {
        if (!recon->needsGrad) return;
        const double up = self.grad[0];
        Tensor& gi = recon->ensureGrad();
        for (std::size_t i = 0; i < size; ++i) {
          if ((*maskCopy)[i] == 0.0) continue;
          gi[i] += up * 2.0 * (recon->value[i] - (*targetCopy)[i]) / count;
        }
      });
}

}  // namespace cxr::nn
