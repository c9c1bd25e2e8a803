#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cxrlab/core/rng.hpp"
#include "cxrlab/nn/graph.hpp"
#include "cxrlab/nn/param.hpp"
#include "support/oracles.hpp"

using cxr::Tensor;
using cxr::nn::NodePtr;
using cxr::nn::Param;
using cxr::nn::ParamStore;
using cxr::nn::Tape;

namespace {

Tensor randomTensor(const std::vector<int>& shape, cxr::Rng& rng,
                    double scale = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = rng.normal(0.0, 1.0) * scale;
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Checks the analytic gradient of (output . seed) with respect to every
// trainable param in the store and every extra tensor in `freeInputs`.
void checkGradients(ParamStore& store,
                    const std::function<NodePtr(Tape&)>& build,
                    std::vector<Tensor*> freeInputs = {},
                    double tol = 1e-5) {
  Tape probe;
  NodePtr probeOut = build(probe);
  cxr::Rng seedRng(999);
  Tensor seed = randomTensor(probeOut->value.shape(), seedRng);

  auto loss = [&]() {
    Tape t;
    return dot(build(t)->value, seed);
  };

  store.zeroGrads();
  Tape t;
  NodePtr out = build(t);
  t.backward(out, seed);

  for (Param* p : store.trainable()) {
    Tensor analytic = p->grad.clone();
    Tensor numeric = oracle::numericGradient(loss, p->value);
    INFO("param ", p->name);
    CHECK(oracle::maxRelError(analytic, numeric) < tol);
  }
  (void)freeInputs;
}

}  // namespace

TEST_CASE("conv2d gradients, including stride, padding and groups") {
  cxr::Rng rng(21);
  ParamStore store;
  store.add("x", randomTensor({2, 4, 6, 6}, rng));
  store.add("w", randomTensor({6, 2, 3, 3}, rng, 0.5));
  store.add("b", randomTensor({6}, rng));
  checkGradients(store, [&](Tape& t) {
    return t.conv2d(t.param(store.at("x")), t.param(store.at("w")),
                    t.param(store.at("b")), 2, 1, 2);
  });
}

TEST_CASE("conv2d without bias") {
  cxr::Rng rng(22);
  ParamStore store;
  store.add("x", randomTensor({1, 2, 5, 5}, rng));
  store.add("w", randomTensor({3, 2, 3, 3}, rng, 0.5));
  checkGradients(store, [&](Tape& t) {
    return t.conv2d(t.param(store.at("x")), t.param(store.at("w")), nullptr, 1,
                    1, 1);
  });
}

TEST_CASE("relu gradient away from the kink") {
  ParamStore store;
  Tensor x = Tensor::fromVector({-1.5, -0.7, 0.3, 1.2, 2.4, -2.2});
  store.add("x", x.reshaped({1, 1, 2, 3}));
  checkGradients(store,
                 [&](Tape& t) { return t.relu(t.param(store.at("x"))); });
}

TEST_CASE("sigmoid gradient") {
  cxr::Rng rng(23);
  ParamStore store;
  store.add("x", randomTensor({3, 4}, rng));
  checkGradients(store,
                 [&](Tape& t) { return t.sigmoid(t.param(store.at("x"))); });
}

TEST_CASE("max pool gradient with distinct window values") {
  cxr::Rng rng(24);
  ParamStore store;
  // normal draws collide with negligible probability, so no FD kinks
  store.add("x", randomTensor({2, 3, 6, 6}, rng));
  checkGradients(store,
                 [&](Tape& t) { return t.maxPool2(t.param(store.at("x"))); });
}

TEST_CASE("average pool gradient") {
  cxr::Rng rng(25);
  ParamStore store;
  store.add("x", randomTensor({2, 2, 4, 4}, rng));
  checkGradients(store,
                 [&](Tape& t) { return t.avgPool2(t.param(store.at("x"))); });
}

TEST_CASE("global average pool gradient") {
  cxr::Rng rng(26);
  ParamStore store;
  store.add("x", randomTensor({2, 5, 3, 3}, rng));
  checkGradients(store, [&](Tape& t) {
    return t.globalAvgPool(t.param(store.at("x")));
  });
}

TEST_CASE("linear layer gradients") {
  cxr::Rng rng(27);
  ParamStore store;
  store.add("x", randomTensor({4, 7}, rng));
  store.add("w", randomTensor({3, 7}, rng, 0.5));
  store.add("b", randomTensor({3}, rng));
  checkGradients(store, [&](Tape& t) {
    return t.linear(t.param(store.at("x")), t.param(store.at("w")),
                    t.param(store.at("b")));
  });
}

TEST_CASE("elementwise add gradients flow to both inputs") {
  cxr::Rng rng(28);
  ParamStore store;
  store.add("a", randomTensor({2, 3, 2, 2}, rng));
  store.add("b", randomTensor({2, 3, 2, 2}, rng));
  checkGradients(store, [&](Tape& t) {
    return t.add(t.param(store.at("a")), t.param(store.at("b")));
  });
}

TEST_CASE("channel concatenation gradients") {
  cxr::Rng rng(29);
  ParamStore store;
  store.add("a", randomTensor({2, 2, 3, 3}, rng));
  store.add("b", randomTensor({2, 4, 3, 3}, rng));
  store.add("c", randomTensor({2, 1, 3, 3}, rng));
  checkGradients(store, [&](Tape& t) {
    return t.concatChannels({t.param(store.at("a")), t.param(store.at("b")),
                             t.param(store.at("c"))});
  });
}

TEST_CASE("nearest-neighbor upsampling gradients") {
  cxr::Rng rng(30);
  ParamStore store;
  store.add("x", randomTensor({1, 3, 3, 4}, rng));
  checkGradients(store, [&](Tape& t) {
    return t.upsampleNearest2(t.param(store.at("x")));
  });
}

TEST_CASE("batch norm training-mode gradients") {
  cxr::Rng rng(31);
  ParamStore store;
  store.add("x", randomTensor({3, 4, 3, 3}, rng));
  Tensor ones({4});
  ones.fill(1.0);
  Tensor zeros({4});
  zeros.zero();
  store.add("gamma", randomTensor({4}, rng, 0.3));
  store.add("beta", randomTensor({4}, rng, 0.3));
  store.add("rm", zeros.clone(), false);
  store.add("rv", ones.clone(), false);
  checkGradients(
      store,
      [&](Tape& t) {
        return t.batchNorm(t.param(store.at("x")), store.at("gamma"),
                           store.at("beta"), store.at("rm"), store.at("rv"),
                           true);
      },
      {}, 1e-4);
}

TEST_CASE("batch norm eval mode uses running stats and has simple gradients") {
  cxr::Rng rng(32);
  ParamStore store;
  store.add("x", randomTensor({2, 3, 2, 2}, rng));
  store.add("gamma", randomTensor({3}, rng, 0.5));
  store.add("beta", randomTensor({3}, rng, 0.5));
  Tensor rm = randomTensor({3}, rng, 0.1);
  Tensor rv({3});
  rv.fill(1.5);
  store.add("rm", rm, false);
  store.add("rv", rv, false);
  checkGradients(store, [&](Tape& t) {
    return t.batchNorm(t.param(store.at("x")), store.at("gamma"),
                       store.at("beta"), store.at("rm"), store.at("rv"),
                       false);
  });
}

TEST_CASE("batch norm updates running stats with population variance") {
  ParamStore store;
  Tensor x({1, 1, 1, 4});
  x[0] = 1.0;
  x[1] = 2.0;
  x[2] = 3.0;
  x[3] = 4.0;
  Tensor g({1}), b({1}), rm({1}), rv({1});
  g.fill(1.0);
  b.zero();
  rm.zero();
  rv.fill(1.0);
  store.add("g", g);
  store.add("b", b);
  store.add("rm", rm, false);
  store.add("rv", rv, false);

  Tape t;
  auto xn = t.input(x, false);
  t.batchNorm(xn, store.at("g"), store.at("b"), store.at("rm"), store.at("rv"),
              true, 0.1);
  // batch mean 2.5, population variance 1.25
  CHECK(store.at("rm").value[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.5));
  CHECK(store.at("rv").value[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.25));
}

TEST_CASE("channel scaling gradients flow to both tensor and scales") {
  cxr::Rng rng(33);
  ParamStore store;
  store.add("x", randomTensor({2, 3, 3, 3}, rng));
  store.add("s", randomTensor({2, 3}, rng));
  checkGradients(store, [&](Tape& t) {
    return t.scaleChannels(t.param(store.at("x")), t.param(store.at("s")));
  });
}

TEST_CASE("spatial pad and crop gradients") {
  cxr::Rng rng(34);
  ParamStore store;
  store.add("x", randomTensor({1, 2, 4, 5}, rng));
  checkGradients(store, [&](Tape& t) {
    auto padded = t.padSpatial(t.param(store.at("x")), 1, 2, 0, 3);
    return t.cropSpatial(padded, 0, 1, 4, 5);
  });
}

TEST_CASE("row-wise L2 normalization gradient") {
  cxr::Rng rng(35);
  ParamStore store;
  store.add("x", randomTensor({4, 6}, rng));
  checkGradients(store, [&](Tape& t) {
    return t.l2NormalizeRows(t.param(store.at("x")));
  });
}

TEST_CASE("normalized rows have unit norm") {
  cxr::Rng rng(36);
  Tape t;
  auto x = t.input(randomTensor({8, 16}, rng), false);
  auto y = t.l2NormalizeRows(x);
  for (int r = 0; r < 8; ++r) {
    double s = 0.0;
    for (int c = 0; c < 16; ++c) s += y->value.at(r, c) * y->value.at(r, c);
    CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("dropout is identity in eval mode and scales kept units in train") {
  cxr::Rng rng(37);
  Tensor x = randomTensor({10, 10}, rng);
  Tape t;
  auto xn = t.input(x, false);
  cxr::Rng dropRng(5);
  auto evalOut = t.dropout(xn, 0.5, dropRng, false);
  CHECK(evalOut.get() == xn.get());

  cxr::Rng dropRng2(5);
  auto trainOut = t.dropout(xn, 0.5, dropRng2, true);
  int kept = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = trainOut->value[i];
    if (v != 0.0) {
      ++kept;
      CHECK(v == doctest::Approx(2.0 * x[i]));
    }
  }
  CHECK(kept > 25);
  CHECK(kept < 75);
}

TEST_CASE("dropout gradient uses the same mask as forward") {
  cxr::Rng rng(38);
  ParamStore store;
  store.add("x", randomTensor({6, 6}, rng));
  checkGradients(store, [&](Tape& t) {
    cxr::Rng dropRng(77);  // identical stream on every rebuild
    return t.dropout(t.param(store.at("x")), 0.3, dropRng, true);
  });
}

TEST_CASE("a parameter used twice accumulates gradient from both uses") {
  cxr::Rng rng(39);
  ParamStore store;
  store.add("x", randomTensor({2, 3}, rng));
  store.add("w", randomTensor({3, 3}, rng, 0.5));
  checkGradients(store, [&](Tape& t) {
    auto h = t.linear(t.param(store.at("x")), t.param(store.at("w")), nullptr);
    return t.linear(h, t.param(store.at("w")), nullptr);
  });
}

TEST_CASE("composite conv net end-to-end gradients") {
  cxr::Rng rng(40);
  ParamStore store;
  store.add("x", randomTensor({2, 1, 8, 8}, rng));
  // conv ahead of batch norm carries no bias: the mean subtraction would
  // cancel it and leave a zero-gradient parameter
  store.add("w1", randomTensor({4, 1, 3, 3}, rng, 0.4));
  store.add("g", randomTensor({4}, rng, 0.3));
  store.add("be", randomTensor({4}, rng, 0.3));
  Tensor rm({4}), rv({4});
  rm.zero();
  rv.fill(1.0);
  store.add("rm", rm, false);
  store.add("rv", rv, false);
  store.add("wf", randomTensor({3, 4}, rng, 0.5));
  store.add("bf", randomTensor({3}, rng, 0.1));
  checkGradients(
      store,
      [&](Tape& t) {
        auto h = t.conv2d(t.param(store.at("x")), t.param(store.at("w1")),
                          nullptr, 1, 1, 1);
        h = t.batchNorm(h, store.at("g"), store.at("be"), store.at("rm"),
                        store.at("rv"), true);
        h = t.relu(h);
        h = t.maxPool2(h);
        auto pooled = t.globalAvgPool(h);
        return t.linear(pooled, t.param(store.at("wf")),
                        t.param(store.at("bf")));
      },
      {}, 2e-4);
}

TEST_CASE("backward from a single-logit seed matches that logit's gradient") {
  cxr::Rng rng(41);
  ParamStore store;
  store.add("x", randomTensor({1, 1, 4, 4}, rng));
  store.add("w", randomTensor({3, 16}, rng, 0.5));

  auto buildDirect = [&](Tape& t) {
    auto x2d = t.input(store.at("x").value.reshaped({1, 16}), true);
    return t.linear(x2d, t.param(store.at("w")), nullptr);
  };

  store.zeroGrads();
  Tape t;
  NodePtr out = buildDirect(t);
  Tensor seed({1, 3});
  seed.zero();
  seed.at(0, 1) = 1.0;
  t.backward(out, seed);

  auto loss = [&]() {
    Tape t2;
    return buildDirect(t2)->value.at(0, 1);
  };
  Tensor numeric = oracle::numericGradient(loss, store.at("w").value);
  CHECK(oracle::maxRelError(store.at("w").grad, numeric) < 1e-5);
}

TEST_CASE("constants do not receive gradients and do not register back fns") {
  Tape t;
  auto c = t.value(Tensor::fromVector({1.0, 2.0}));
  CHECK_FALSE(c->needsGrad);
  auto x = t.input(Tensor::fromVector({3.0, 4.0}), true);
  auto y = t.add(c, x);
  t.backward(y);
  CHECK(c->grad.empty());
  CHECK(x->grad.size() == 2);
  CHECK(x->grad[0] == 1.0);
}
