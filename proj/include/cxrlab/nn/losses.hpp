#pragma once

#include <vector>

#include "cxrlab/core/tensor.hpp"
#include "cxrlab/nn/graph.hpp"

namespace cxr::nn {

/// Class-weighted cross entropy over logits [N, C]: the per-sample term is
/// w_label * (-log softmax_label), averaged over the batch. Returns a scalar
/// node of shape [1].
NodePtr weightedCrossEntropy(Tape& t, NodePtr logits,
                             const std::vector<int>& labels,
                             const std::vector<double>& classWeights);

/// Soft Dice loss over sigmoid(segLogits) against a binary target map,
/// using sums pooled over the whole batch:
///   1 - (2 * sum(g*s) + eps) / (sum(g) + sum(s) + eps)
NodePtr diceLoss(Tape& t, NodePtr segLogits, const Tensor& target,
                 double eps = 1e-6);

struct CompoundLoss {
  NodePtr total;
  NodePtr crossEntropy;
  NodePtr dice;
};

/// Weighted sum of the two task losses:
///   wCe * weightedCrossEntropy + wDice * diceLoss
CompoundLoss diceWeightedCrossEntropy(Tape& t, NodePtr logits,
                                      const std::vector<int>& labels,
                                      const std::vector<double>& classWeights,
                                      NodePtr segLogits, const Tensor& target,
                                      double wCe, double wDice);

/// Contrastive loss for query/positive-key rows [N, d] against a fixed
/// queue of K negatives [K, d]. Each sample becomes a (K+1)-way softmax
/// classification with the positive at index zero:
///   -log( exp(q.k+ / tau) / sum_i exp(q.k_i / tau) )
/// Gradients reach q and kPos; the queue is treated as constant.
NodePtr infoNce(Tape& t, NodePtr q, NodePtr kPos, const Tensor& queue,
                double tau);

/// Mean squared error restricted to mask == 1 positions, normalized by the
/// number of masked pixels. An all-zero mask is an error.
NodePtr maskedMse(Tape& t, NodePtr recon, const Tensor& target,
                  const Tensor& mask);

}  // namespace cxr::nn
