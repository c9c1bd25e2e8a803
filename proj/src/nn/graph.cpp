#include "cxrlab/nn/graph.hpp"

#include <cassert>
#include <cmath>

#include "cxrlab/kernels/kernels.hpp"

namespace cxr::nn {

namespace {

void accumulate(Tensor& dst, const Tensor& src) {
  assert(dst.size() == src.size());
  kernels::axpy(1.0, src.data(), dst.data(), dst.size());
}

double stableSigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

NodePtr Tape::value(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  order_.push_back(n);
  return n;
}

NodePtr Tape::input(Tensor v, bool needsGrad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->needsGrad = needsGrad;
  order_.push_back(n);
  return n;
}

NodePtr Tape::param(Param& p) {
  auto n = std::make_shared<Node>();
  n->value = p.value;  // shared storage, zero copy
  n->needsGrad = p.trainable;
  n->param = &p;
  Node* self = n.get();
  Param* pp = &p;
  n->backFn = [self, pp]() { accumulate(pp->grad, self->grad); };
  order_.push_back(n);
  return n;
}

NodePtr Tape::custom(Tensor value, std::vector<NodePtr> inputs,
                     std::function<void(Node&)> back, bool forceGrad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs) n->needsGrad = n->needsGrad || in->needsGrad;
  n->needsGrad = n->needsGrad || forceGrad;
  if (n->needsGrad) {
    Node* self = n.get();
    n->backFn = [self, back = std::move(back)]() { back(*self); };
  }
  order_.push_back(n);
  return n;
}

NodePtr Tape::conv2d(NodePtr x, NodePtr w, NodePtr b, int stride, int pad,
                     int groups) {
  assert(x->value.dim() == 4 && w->value.dim() == 4);
  kernels::Conv2dDims d;
  d.n = x->value.shape(0);
  d.inC = x->value.shape(1);
  d.inH = x->value.shape(2);
  d.inW = x->value.shape(3);
  d.outC = w->value.shape(0);
  d.kH = w->value.shape(2);
  d.kW = w->value.shape(3);
  d.stride = stride;
  d.pad = pad;
  d.groups = groups;
  assert(w->value.shape(1) == d.inC / groups);

  Tensor out({d.n, d.outC, d.outH(), d.outW()});
  kernels::conv2dForward(x->value.data(), w->value.data(),
                         b ? b->value.data() : nullptr, out.data(), d);

  std::vector<NodePtr> inputs{x, w};
  if (b) inputs.push_back(b);
  auto n = std::make_shared<Node>();
  n->value = std::move(out);
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs) n->needsGrad = n->needsGrad || in->needsGrad;
  Node* self = n.get();
  if (n->needsGrad) {
    n->backFn = [self, x, w, b, d]() {
      const double* go = self->grad.data();
      if (x->needsGrad)
        kernels::conv2dBackwardInput(go, w->value.data(),
                                     x->ensureGrad().data(), d);
      if (w->needsGrad || (b && b->needsGrad))
        kernels::conv2dBackwardParams(
            go, x->value.data(), w->ensureGrad().data(),
            b ? b->ensureGrad().data() : nullptr, d);
    };
  }
  order_.push_back(n);
  return n;
}

NodePtr Tape::relu(NodePtr x) {
  Tensor out(x->value.shape());
  kernels::reluForward(x->value.data(), out.data(), out.size());
  auto n = std::make_shared<Node>();
  n->value = std::move(out);
  n->inputs = {x};
  n->needsGrad = x->needsGrad;
  Node* self = n.get();
  if (n->needsGrad) {
    n->backFn = [self, x]() {
      kernels::reluBackward(self->grad.data(), x->value.data(),
                            x->ensureGrad().data(), x->value.size());
    };
  }
  order_.push_back(n);
  return n;
}

NodePtr Tape::sigmoid(NodePtr x) {
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = stableSigmoid(x->value[i]);
  auto n = std::make_shared<Node>();
  n->value = std::move(out);
  n->inputs = {x};
  n->needsGrad = x->needsGrad;
  Node* self = n.get();
  if (n->needsGrad) {
    n->backFn = [self, x]() {
      Tensor& gi = x->ensureGrad();
      for (std::size_t i = 0; i < gi.size(); ++i) {
        const double s = self->value[i];
        gi[i] += self->grad[i] * s * (1.0 - s);
      }
    };
  }
  order_.push_back(n);
  return n;
}

namespace {

NodePtr poolNode(std::vector<NodePtr>* order, NodePtr x, bool isMax) {
  assert(x->value.dim() == 4);
  kernels::Pool2dDims d;
  d.n = x->value.shape(0);
  d.c = x->value.shape(1);
  d.inH = x->value.shape(2);
  d.inW = x->value.shape(3);
  d.k = 2;
  d.stride = 2;
  Tensor out({d.n, d.c, d.outH(), d.outW()});

  auto n = std::make_shared<Node>();
  auto argmax = std::make_shared<std::vector<int>>();
  if (isMax) {
    argmax->resize(out.size());
    kernels::maxPool2dForward(x->value.data(), out.data(), argmax->data(), d);
  } else {
    kernels::avgPool2dForward(x->value.data(), out.data(), d);
  }
  n->value = std::move(out);
  n->inputs = {x};
  n->needsGrad = x->needsGrad;
  Node* self = n.get();
  if (n->needsGrad) {
    n->backFn = [self, x, d, argmax, isMax]() {
      if (isMax)
        kernels::maxPool2dBackward(self->grad.data(), argmax->data(),
                                   x->ensureGrad().data(), d);
      else
        kernels::avgPool2dBackward(self->grad.data(), x->ensureGrad().data(),
                                   d);
    };
  }
  order->push_back(n);
  return n;
}

}  // namespace

NodePtr Tape::maxPool2(NodePtr x) { return poolNode(&order_, x, true); }
NodePtr Tape::avgPool2(NodePtr x) { return poolNode(&order_, x, false); }

NodePtr Tape::globalAvgPool(NodePtr x) {
  assert(x->value.dim() == 4);
  const int N = x->value.shape(0), C = x->value.shape(1);
  const int HW = x->value.shape(2) * x->value.shape(3);
  Tensor out({N, C});
  const double inv = 1.0 / HW;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* p = x->value.data() + (static_cast<std::size_t>(n) * C + c) * HW;
      double s = 0.0;
      for (int i = 0; i < HW; ++i) s += p[i];
      out.at(n, c) = s * inv;
    }

  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = {x};
  node->needsGrad = x->needsGrad;
  Node* self = node.get();
  if (node->needsGrad) {
    node->backFn = [self, x, N, C, HW, inv]() {
      Tensor& gi = x->ensureGrad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const double g = self->grad.at(n, c) * inv;
          double* p = gi.data() + (static_cast<std::size_t>(n) * C + c) * HW;
          for (int i = 0; i < HW; ++i) p[i] += g;
        }
    };
  }
  order_.push_back(node);
  return node;
}

NodePtr Tape::linear(NodePtr x, NodePtr w, NodePtr b) {
  assert(x->value.dim() == 2 && w->value.dim() == 2);
  const int N = x->value.shape(0), D = x->value.shape(1);
  const int F = w->value.shape(0);
  assert(w->value.shape(1) == D);
  Tensor out({N, F});
  kernels::matmul(x->value.data(), w->value.data(), out.data(), N, F, D, false,
                  true, false);
  if (b) {
    assert(b->value.dim() == 1 && b->value.shape(0) == F);
    for (int n = 0; n < N; ++n)
      for (int f = 0; f < F; ++f) out.at(n, f) += b->value.at(f);
  }

  std::vector<NodePtr> inputs{x, w};
  if (b) inputs.push_back(b);
  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = std::move(inputs);
  for (const auto& in : node->inputs)
    node->needsGrad = node->needsGrad || in->needsGrad;
  Node* self = node.get();
  if (node->needsGrad) {
    node->backFn = [self, x, w, b, N, D, F]() {
      const double* go = self->grad.data();
      if (x->needsGrad)
        kernels::matmul(go, w->value.data(), x->ensureGrad().data(), N, D, F,
                        false, false, true);
      if (w->needsGrad)
        kernels::matmul(go, x->value.data(), w->ensureGrad().data(), F, D, N,
                        true, false, true);
      if (b && b->needsGrad) {
        Tensor& gb = b->ensureGrad();
        for (int f = 0; f < F; ++f) {
          double s = 0.0;
          for (int n = 0; n < N; ++n)
            s += go[static_cast<std::size_t>(n) * F + f];
          gb[f] += s;
        }
      }
    };
  }
  order_.push_back(node);
  return node;
}

NodePtr Tape::add(NodePtr a, NodePtr b) {
  assert(a->value.sameShape(b->value));
  Tensor out = a->value.clone();
  accumulate(out, b->value);
  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = {a, b};
  node->needsGrad = a->needsGrad || b->needsGrad;
  Node* self = node.get();
  if (node->needsGrad) {
    node->backFn = [self, a, b]() {
      if (a->needsGrad) accumulate(a->ensureGrad(), self->grad);
      if (b->needsGrad) accumulate(b->ensureGrad(), self->grad);
    };
  }
  order_.push_back(node);
  return node;
}

NodePtr Tape::mul(NodePtr a, NodePtr b) {
  assert(a->value.sameShape(b->value));
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a->value[i] * b->value[i];
  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = {a, b};
  node->needsGrad = a->needsGrad || b->needsGrad;
  Node* self = node.get();
  if (node->needsGrad) {
    node->backFn = [self, a, b]() {
      if (a->needsGrad) {
        Tensor& ga = a->ensureGrad();
        for (std::size_t i = 0; i < ga.size(); ++i)
          ga[i] += self->grad[i] * b->value[i];
      }
      if (b->needsGrad) {
        Tensor& gb = b->ensureGrad();
        for (std::size_t i = 0; i < gb.size(); ++i)
          gb[i] += self->grad[i] * a->value[i];
      }
    };
  }
  order_.push_back(node);
  return node;
}

NodePtr Tape::scale(NodePtr x, double k) {
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * k;
  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = {x};
  node->needsGrad = x->needsGrad;
  Node* self = node.get();
  if (node->needsGrad) {
    node->backFn = [self, x, k]() {
      Tensor& gi = x->ensureGrad();
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self->grad[i] * k;
    };
  }
  order_.push_back(node);
  return node;
}

NodePtr Tape::concatChannels(const std::vector<NodePtr>& xs) {
  assert(!xs.empty());
  const int N = xs[0]->value.shape(0);
  const int H = xs[0]->value.shape(2), W = xs[0]->value.shape(3);
  int totalC = 0;
  for (const auto& x : xs) {
    assert(x->value.dim() == 4 && x->value.shape(0) == N &&
           x->value.shape(2) == H && x->value.shape(3) == W);
    totalC += x->value.shape(1);
  }
  Tensor out({N, totalC, H, W});
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    int cOff = 0;
    for (const auto& x : xs) {
      const int C = x->value.shape(1);
      const double* src = x->value.data() + static_cast<std::size_t>(n) * C * hw;
      double* dst =
          out.data() + (static_cast<std::size_t>(n) * totalC + cOff) * hw;
      std::copy(src, src + static_cast<std::size_t>(C) * hw, dst);
      cOff += C;
    }
  }

  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = xs;
  for (const auto& x : xs) node->needsGrad = node->needsGrad || x->needsGrad;
  Node* self = node.get();
  auto parts = xs;
  if (node->needsGrad) {
    node->backFn = [self, parts, N, totalC, hw]() {
      for (int n = 0; n < N; ++n) {
        int cOff = 0;
        for (const auto& x : parts) {
          const int C = x->value.shape(1);
          if (x->needsGrad) {
            const double* src =
                self->grad.data() +
                (static_cast<std::size_t>(n) * totalC + cOff) * hw;
            double* dst =
                x->ensureGrad().data() + static_cast<std::size_t>(n) * C * hw;
            kernels::axpy(1.0, src, dst, static_cast<std::size_t>(C) * hw);
          }
          cOff += C;
        }
      }
    };
  }
  order_.push_back(node);
  return node;
}

NodePtr Tape::upsampleNearest2(NodePtr x) {
  assert(x->value.dim() == 4);
  const int N = x->value.shape(0), C = x->value.shape(1);
  const int H = x->value.shape(2), W = x->value.shape(3);
  Tensor out({N, C, 2 * H, 2 * W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* src =
          x->value.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
      double* dst =
          out.data() + (static_cast<std::size_t>(n) * C + c) * 4 * H * W;
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const double v = src[h * W + w];
          dst[(2 * h) * 2 * W + 2 * w] = v;
          dst[(2 * h) * 2 * W + 2 * w + 1] = v;
          dst[(2 * h + 1) * 2 * W + 2 * w] = v;
          dst[(2 * h + 1) * 2 * W + 2 * w + 1] = v;
        }
    }

  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = {x};
  node->needsGrad = x->needsGrad;
  Node* self = node.get();
  if (node->needsGrad) {
    node->backFn = [self, x, N, C, H, W]() {
      Tensor& gi = x->ensureGrad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double* dst =
              gi.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
          const double* src = self->grad.data() +
                              (static_cast<std::size_t>(n) * C + c) * 4 * H * W;
          for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w)
              dst[h * W + w] += src[(2 * h) * 2 * W + 2 * w] +
                                src[(2 * h) * 2 * W + 2 * w + 1] +
                                src[(2 * h + 1) * 2 * W + 2 * w] +
                                src[(2 * h + 1) * 2 * W + 2 * w + 1];
        }
    };
  }
  order_.push_back(node);
  return node;
}

NodePtr Tape::dropout(NodePtr x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  const double keepScale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<Tensor>(x->value.shape());
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = rng.uniform01() < p ? 0.0 : keepScale;
    (*mask)[i] = m;
    out[i] = x->value[i] * m;
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = {x};
  node->needsGrad = x->needsGrad;
  Node* self = node.get();
  if (node->needsGrad) {
    node->backFn = [self, x, mask]() {
      Tensor& gi = x->ensureGrad();
      for (std::size_t i = 0; i < gi.size(); ++i)
        gi[i] += self->grad[i] * (*mask)[i];
    };
  }
  order_.push_back(node);
  return node;
}

NodePtr Tape::batchNorm(NodePtr x, Param& gamma, Param& beta, Param& runMean,
                        Param& runVar, bool training, double momentum,
                        double eps) {
  assert(x->value.dim() == 4);
  const int N = x->value.shape(0), C = x->value.shape(1);
  const int H = x->value.shape(2), W = x->value.shape(3);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const double M = static_cast<double>(N) * H * W;

  NodePtr gammaNode = param(gamma);
  NodePtr betaNode = param(beta);

  auto mean = std::make_shared<Tensor>(Tensor({C}));
  auto invStd = std::make_shared<Tensor>(Tensor({C}));
  Tensor out(x->value.shape());

  if (training) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p =
            x->value.data() + (static_cast<std::size_t>(n) * C + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double mu = s / M;
      double v = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p =
            x->value.data() + (static_cast<std::size_t>(n) * C + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = p[i] - mu;
          v += d * d;
        }
      }
      const double var = v / M;
      (*mean)[c] = mu;
      (*invStd)[c] = 1.0 / std::sqrt(var + eps);
      runMean.value[c] = (1.0 - momentum) * runMean.value[c] + momentum * mu;
      runVar.value[c] = (1.0 - momentum) * runVar.value[c] + momentum * var;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      (*mean)[c] = runMean.value[c];
      (*invStd)[c] = 1.0 / std::sqrt(runVar.value[c] + eps);
    }
  }

  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double mu = (*mean)[c], is = (*invStd)[c];
      const double g = gamma.value[c], bt = beta.value[c];
      const double* src =
          x->value.data() + (static_cast<std::size_t>(n) * C + c) * hw;
      double* dst = out.data() + (static_cast<std::size_t>(n) * C + c) * hw;
      for (std::size_t i = 0; i < hw; ++i)
        dst[i] = g * (src[i] - mu) * is + bt;
    }

  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = {x, gammaNode, betaNode};
  node->needsGrad = x->needsGrad || gammaNode->needsGrad || betaNode->needsGrad;
  Node* self = node.get();
  if (node->needsGrad) {
    Param* gp = &gamma;
    node->backFn = [self, x, gammaNode, betaNode, gp, mean, invStd, N, C, hw,
                    M, training]() {
      for (int c = 0; c < C; ++c) {
        const double mu = (*mean)[c], is = (*invStd)[c];
        const double g = gp->value[c];
        double sumDy = 0.0, sumDyXhat = 0.0;
        for (int n = 0; n < N; ++n) {
          const std::size_t off = (static_cast<std::size_t>(n) * C + c) * hw;
          const double* dy = self->grad.data() + off;
          const double* xv = x->value.data() + off;
          for (std::size_t i = 0; i < hw; ++i) {
            sumDy += dy[i];
            sumDyXhat += dy[i] * (xv[i] - mu) * is;
          }
        }
        if (gammaNode->needsGrad) gammaNode->ensureGrad()[c] += sumDyXhat;
        if (betaNode->needsGrad) betaNode->ensureGrad()[c] += sumDy;
        if (x->needsGrad) {
          Tensor& gi = x->ensureGrad();
          for (int n = 0; n < N; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * hw;
            const double* dy = self->grad.data() + off;
            const double* xv = x->value.data() + off;
            double* gx = gi.data() + off;
            if (training) {
              for (std::size_t i = 0; i < hw; ++i) {
                const double xhat = (xv[i] - mu) * is;
                gx[i] += g * is / M * (M * dy[i] - sumDy - xhat * sumDyXhat);
              }
            } else {
              for (std::size_t i = 0; i < hw; ++i) gx[i] += g * is * dy[i];
            }
          }
        }
      }
    };
  }
  order_.push_back(node);
  return node;
}

NodePtr Tape::scaleChannels(NodePtr x, NodePtr s) {
  assert(x->value.dim() == 4 && s->value.dim() == 2);
  const int N = x->value.shape(0), C = x->value.shape(1);
  const std::size_t hw =
      static_cast<std::size_t>(x->value.shape(2)) * x->value.shape(3);
  assert(s->value.shape(0) == N && s->value.shape(1) == C);
  Tensor out(x->value.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double sc = s->value.at(n, c);
      const std::size_t off = (static_cast<std::size_t>(n) * C + c) * hw;
      const double* src = x->value.data() + off;
      double* dst = out.data() + off;
      for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * sc;
    }

  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = {x, s};
  node->needsGrad = x->needsGrad || s->needsGrad;
  Node* self = node.get();
  if (node->needsGrad) {
    node->backFn = [self, x, s, N, C, hw]() {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const std::size_t off = (static_cast<std::size_t>(n) * C + c) * hw;
          const double* dy = self->grad.data() + off;
          if (x->needsGrad) {
            const double sc = s->value.at(n, c);
            double* gx = x->ensureGrad().data() + off;
            for (std::size_t i = 0; i < hw; ++i) gx[i] += dy[i] * sc;
          }
          if (s->needsGrad) {
            const double* xv = x->value.data() + off;
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += dy[i] * xv[i];
            s->ensureGrad().at(n, c) += acc;
          }
        }
    };
  }
  order_.push_back(node);
  return node;
}

NodePtr Tape::padSpatial(NodePtr x, int top, int bottom, int left, int right) {
  assert(x->value.dim() == 4);
  const int N = x->value.shape(0), C = x->value.shape(1);
  const int H = x->value.shape(2), W = x->value.shape(3);
  const int OH = H + top + bottom, OW = W + left + right;
  Tensor out({N, C, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h) {
        const double* src = x->value.data() +
                            ((static_cast<std::size_t>(n) * C + c) * H + h) * W;
        double* dst =
            out.data() +
            ((static_cast<std::size_t>(n) * C + c) * OH + h + top) * OW + left;
        std::copy(src, src + W, dst);
      }

  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = {x};
  node->needsGrad = x->needsGrad;
  Node* self = node.get();
  if (node->needsGrad) {
    node->backFn = [self, x, N, C, H, W, OH, OW, top, left]() {
      Tensor& gi = x->ensureGrad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          for (int h = 0; h < H; ++h) {
            const double* src =
                self->grad.data() +
                ((static_cast<std::size_t>(n) * C + c) * OH + h + top) * OW +
                left;
            double* dst =
                gi.data() +
                ((static_cast<std::size_t>(n) * C + c) * H + h) * W;
            for (int w = 0; w < W; ++w) dst[w] += src[w];
          }
    };
  }
  order_.push_back(node);
  return node;
}

NodePtr Tape::cropSpatial(NodePtr x, int top, int left, int h, int w) {
  assert(x->value.dim() == 4);
  const int N = x->value.shape(0), C = x->value.shape(1);
  const int H = x->value.shape(2), W = x->value.shape(3);
  assert(top + h <= H && left + w <= W);
  Tensor out({N, C, h, w});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < h; ++y) {
        const double* src =
            x->value.data() +
            ((static_cast<std::size_t>(n) * C + c) * H + y + top) * W + left;
        double* dst =
            out.data() + ((static_cast<std::size_t>(n) * C + c) * h + y) * w;
        std::copy(src, src + w, dst);
      }

  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = {x};
  node->needsGrad = x->needsGrad;
  Node* self = node.get();
  if (node->needsGrad) {
    node->backFn = [self, x, N, C, H, W, h, w, top, left]() {
      Tensor& gi = x->ensureGrad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          for (int y = 0; y < h; ++y) {
            const double* src =
                self->grad.data() +
                ((static_cast<std::size_t>(n) * C + c) * h + y) * w;
            double* dst =
                gi.data() +
                ((static_cast<std::size_t>(n) * C + c) * H + y + top) * W +
                left;
            for (int i = 0; i < w; ++i) dst[i] += src[i];
          }
    };
  }
  order_.push_back(node);
  return node;
}

NodePtr Tape::l2NormalizeRows(NodePtr x, double eps) {
  assert(x->value.dim() == 2);
  const int N = x->value.shape(0), D = x->value.shape(1);
  auto norms = std::make_shared<Tensor>(Tensor({N}));
  Tensor out({N, D});
  for (int n = 0; n < N; ++n) {
    const double* src = x->value.data() + static_cast<std::size_t>(n) * D;
    double s = 0.0;
    for (int i = 0; i < D; ++i) s += src[i] * src[i];
    const double nrm = std::sqrt(s + eps);
    (*norms)[n] = nrm;
    double* dst = out.data() + static_cast<std::size_t>(n) * D;
    for (int i = 0; i < D; ++i) dst[i] = src[i] / nrm;
  }

  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->inputs = {x};
  node->needsGrad = x->needsGrad;
  Node* self = node.get();
  if (node->needsGrad) {
    node->backFn = [self, x, norms, N, D]() {
      Tensor& gi = x->ensureGrad();
      for (int n = 0; n < N; ++n) {
        const std::size_t off = static_cast<std::size_t>(n) * D;
        const double* y = self->value.data() + off;
        const double* dy = self->grad.data() + off;
        double dot = 0.0;
        for (int i = 0; i < D; ++i) dot += y[i] * dy[i];
        const double inv = 1.0 / (*norms)[n];
        double* gx = gi.data() + off;
        for (int i = 0; i < D; ++i) gx[i] += (dy[i] - y[i] * dot) * inv;
      }
    };
  }
  order_.push_back(node);
  return node;
}

void Tape::backward(NodePtr root) {
  Tensor seed(root->value.shape());
  seed.fill(1.0);
  backward(root, seed);
}

void Tape::backward(NodePtr root, const Tensor& seed) {
  assert(seed.size() == root->value.size());
  Tensor& g = root->ensureGrad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* n = it->get();
    if (n->needsGrad && n->backFn && !n->grad.empty()) n->backFn();
  }
}

}  // namespace cxr::nn
