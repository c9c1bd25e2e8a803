#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cxrlab/core/rng.hpp"
#include "cxrlab/core/tensor.hpp"
#include "cxrlab/nn/param.hpp"

namespace cxr::nn {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first contribution
  bool needsGrad = false;
  std::vector<NodePtr> inputs;
  std::function<void()> backFn;  // reads this->grad, accumulates into inputs
  Param* param = nullptr;

  Tensor& ensureGrad() {
    if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
    return grad;
  }
};

// Reverse-mode tape. One tape per training step: ops append nodes in
// execution order and backward() walks them in reverse, which is a valid
// topological order by construction. Gradients of parameter leaves are
// accumulated into Param::grad.
class Tape {
 public:
  // Leaves.
  NodePtr value(Tensor v);                     // constant, no gradient
  NodePtr input(Tensor v, bool needsGrad);     // differentiable leaf
  NodePtr param(Param& p);                     // shares p.value storage

  // Custom node; `back` receives the created node so it can read its grad
  // and may capture input NodePtrs to push gradients into.
  NodePtr custom(Tensor value, std::vector<NodePtr> inputs,
                 std::function<void(Node&)> back, bool forceGrad = false);

  // Ops. Shapes are NCHW for 4-D tensors.
  NodePtr conv2d(NodePtr x, NodePtr w, NodePtr b, int stride, int pad,
                 int groups = 1);
  NodePtr relu(NodePtr x);
  NodePtr sigmoid(NodePtr x);
  NodePtr maxPool2(NodePtr x);                 // 2x2 window, stride 2
  NodePtr avgPool2(NodePtr x);
  NodePtr globalAvgPool(NodePtr x);            // [N,C,H,W] -> [N,C]
  NodePtr linear(NodePtr x, NodePtr w, NodePtr b);  // x[N,D], w[F,D], b[F]
  NodePtr add(NodePtr a, NodePtr b);
  NodePtr mul(NodePtr a, NodePtr b);
  NodePtr scale(NodePtr x, double k);
  NodePtr concatChannels(const std::vector<NodePtr>& xs);
  NodePtr upsampleNearest2(NodePtr x);
  NodePtr dropout(NodePtr x, double p, Rng& rng, bool training);
  NodePtr batchNorm(NodePtr x, Param& gamma, Param& beta, Param& runMean,
                    Param& runVar, bool training, double momentum = 0.1,
                    double eps = 1e-5);
  NodePtr scaleChannels(NodePtr x, NodePtr s);  // x[N,C,H,W] * s[N,C]
  NodePtr padSpatial(NodePtr x, int top, int bottom, int left, int right);
  NodePtr cropSpatial(NodePtr x, int top, int left, int h, int w);
  NodePtr l2NormalizeRows(NodePtr x, double eps = 1e-12);

  // Seeds root with ones (or `seed`) and runs the reverse sweep.
  void backward(NodePtr root);
  void backward(NodePtr root, const Tensor& seed);

  std::size_t nodeCount() const { return order_.size(); }

 private:
  std::vector<NodePtr> order_;
};

}  // namespace cxr::nn
