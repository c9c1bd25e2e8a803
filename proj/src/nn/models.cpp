#include "cxrlab/nn/models.hpp"

#include <cassert>
#include <cmath>
#include <iostream>
#include <optional>

#include "cxrlab/core/error.hpp"

namespace cxr::nn {

namespace {

Tensor heNormal(const std::vector<int>& shape, int fanIn, Rng& rng) {
  Tensor t(shape);
  const double std = std::sqrt(2.0 / fanIn);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}

Tensor constant(const std::vector<int>& shape, double v) {
  Tensor t(shape);
  t.fill(v);
  return t;
}

struct Conv {
  Param* w = nullptr;
  Param* b = nullptr;
  int stride = 1;
  int pad = 0;
  int groups = 1;

  NodePtr operator()(Tape& t, NodePtr x) const {
    return t.conv2d(x, t.param(*w), b ? t.param(*b) : nullptr, stride, pad,
                    groups);
  }
};

Conv makeConv(ParamStore& s, Rng& rng, const std::string& name, int inC,
              int outC, int k, int stride, int pad, int groups = 1,
              bool bias = false) {
  Conv c;
  const int fanIn = (inC / groups) * k * k;
  c.w = &s.add(name + ".weight",
               heNormal({outC, inC / groups, k, k}, fanIn, rng));
  if (bias) c.b = &s.add(name + ".bias", constant({outC}, 0.0));
  c.stride = stride;
  c.pad = pad;
  c.groups = groups;
  return c;
}

struct Bn {
  Param* g = nullptr;
  Param* b = nullptr;
  Param* rm = nullptr;
  Param* rv = nullptr;

  NodePtr operator()(Tape& t, NodePtr x, bool training) const {
    return t.batchNorm(x, *g, *b, *rm, *rv, training);
  }
};

Bn makeBn(ParamStore& s, const std::string& name, int c) {
  Bn bn;
  bn.g = &s.add(name + ".gamma", constant({c}, 1.0));
  bn.b = &s.add(name + ".beta", constant({c}, 0.0));
  bn.rm = &s.add(name + ".running_mean", constant({c}, 0.0), false);
  bn.rv = &s.add(name + ".running_var", constant({c}, 1.0), false);
  return bn;
}

struct Lin {
  Param* w = nullptr;
  Param* b = nullptr;

  NodePtr operator()(Tape& t, NodePtr x) const {
    return t.linear(x, t.param(*w), b ? t.param(*b) : nullptr);
  }
};

Lin makeLin(ParamStore& s, Rng& rng, const std::string& name, int inF,
            int outF, bool bias = true) {
  Lin l;
  l.w = &s.add(name + ".weight", heNormal({outF, inF}, inF, rng));
  if (bias) l.b = &s.add(name + ".bias", constant({outF}, 0.0));
  return l;
}

NodePtr silu(Tape& t, NodePtr x) { return t.mul(x, t.sigmoid(x)); }

}  // namespace

std::string toString(BackboneName name) {
  switch (name) {
    case BackboneName::tinyCnn: return "tiny_cnn";
    case BackboneName::denseNet121: return "densenet121";
    case BackboneName::resNet50: return "resnet50";
    case BackboneName::mobileNetV1: return "mobilenet_v1";
    case BackboneName::efficientNetB0: return "efficientnet_b0";
  }
  return "tiny_cnn";
}

BackboneName backboneFromString(const std::string& s) {
  if (s == "tiny_cnn") return BackboneName::tinyCnn;
  if (s == "densenet121") return BackboneName::denseNet121;
  if (s == "resnet50") return BackboneName::resNet50;
  if (s == "mobilenet_v1") return BackboneName::mobileNetV1;
  if (s == "efficientnet_b0") return BackboneName::efficientNetB0;
  throw ConfigError("unknown backbone: " + s);
}

int backboneFeatureDim(BackboneName name) {
  switch (name) {
    case BackboneName::tinyCnn: return 64;
    case BackboneName::denseNet121: return 1024;
    case BackboneName::resNet50: return 2048;
    case BackboneName::mobileNetV1: return 1024;
    case BackboneName::efficientNetB0: return 1280;
  }
  return 64;
}

struct Backbone::Impl {
  BackboneName archName = BackboneName::tinyCnn;
  int featureDim = 0;
  std::vector<int> stageChannels;
  std::vector<int> stageScales;

  virtual BackboneOut forward(Tape& t, NodePtr x, bool training) const = 0;
  virtual ~Impl() = default;
};

namespace {

// ---------------------------------------------------------------------------
// tiny_cnn: three conv-relu-pool blocks plus a final conv-relu, for fast
// desk-scale experiments.

struct TinyCnnImpl final : Backbone::Impl {
  Conv c1, c2, c3, c4;

  TinyCnnImpl(int inC, ParamStore& s, Rng& rng, const std::string& p) {
    archName = BackboneName::tinyCnn;
    featureDim = 64;
    stageChannels = {8, 16, 32};
    stageScales = {1, 2, 4};
    c1 = makeConv(s, rng, p + ".block1.conv", inC, 8, 3, 1, 1, 1, true);
    c2 = makeConv(s, rng, p + ".block2.conv", 8, 16, 3, 1, 1, 1, true);
    c3 = makeConv(s, rng, p + ".block3.conv", 16, 32, 3, 1, 1, 1, true);
    c4 = makeConv(s, rng, p + ".block4.conv", 32, 64, 3, 1, 1, 1, true);
  }

  BackboneOut forward(Tape& t, NodePtr x, bool) const override {
    BackboneOut out;
    NodePtr h = t.relu(c1(t, x));
    out.stages.push_back(h);
    h = t.relu(c2(t, t.maxPool2(h)));
    out.stages.push_back(h);
    h = t.relu(c3(t, t.maxPool2(h)));
    out.stages.push_back(h);
    h = t.relu(c4(t, t.maxPool2(h)));
    out.features = h;
    out.pooled = t.globalAvgPool(h);
    return out;
  }
};

// ---------------------------------------------------------------------------
// densenet121: dense blocks of 6/12/24/16 bottleneck layers, growth rate 32,
// half-width transitions. Pooling windows are 2x2 throughout.

struct DenseLayer {
  Bn bn1;
  Conv conv1;  // 1x1 to 4 * growth
  Bn bn2;
  Conv conv2;  // 3x3 to growth
};

struct DenseTransition {
  Bn bn;
  Conv conv;  // 1x1 to half width
};

struct DenseNetImpl final : Backbone::Impl {
  static constexpr int kGrowth = 32;
  Conv stem;
  Bn stemBn;
  std::vector<std::vector<DenseLayer>> blocks;
  std::vector<DenseTransition> transitions;
  Bn finalBn;

  DenseNetImpl(int inC, ParamStore& s, Rng& rng, const std::string& p) {
    archName = BackboneName::denseNet121;
    featureDim = 1024;
    stageChannels = {64, 256, 512, 1024};
    stageScales = {2, 4, 8, 16};

    stem = makeConv(s, rng, p + ".stem.conv", inC, 64, 7, 2, 3);
    stemBn = makeBn(s, p + ".stem.bn", 64);

    const int layerCounts[4] = {6, 12, 24, 16};
    int c = 64;
    for (int b = 0; b < 4; ++b) {
      std::vector<DenseLayer> block;
      for (int l = 0; l < layerCounts[b]; ++l) {
        const std::string base = p + ".block" + std::to_string(b + 1) +
                                 ".layer" + std::to_string(l + 1);
        DenseLayer dl;
        dl.bn1 = makeBn(s, base + ".bn1", c);
        dl.conv1 = makeConv(s, rng, base + ".conv1", c, 4 * kGrowth, 1, 1, 0);
        dl.bn2 = makeBn(s, base + ".bn2", 4 * kGrowth);
        dl.conv2 = makeConv(s, rng, base + ".conv2", 4 * kGrowth, kGrowth, 3,
                            1, 1);
        block.push_back(dl);
        c += kGrowth;
      }
      blocks.push_back(std::move(block));
      if (b < 3) {
        const std::string base = p + ".transition" + std::to_string(b + 1);
        DenseTransition tr;
        tr.bn = makeBn(s, base + ".bn", c);
        tr.conv = makeConv(s, rng, base + ".conv", c, c / 2, 1, 1, 0);
        transitions.push_back(tr);
        c /= 2;
      }
    }
    finalBn = makeBn(s, p + ".final.bn", c);
    assert(c == 1024);
  }

  BackboneOut forward(Tape& t, NodePtr x, bool training) const override {
    BackboneOut out;
    NodePtr h = t.relu(stemBn(t, stem(t, x), training));
    out.stages.push_back(h);
    h = t.maxPool2(h);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      for (const DenseLayer& dl : blocks[b]) {
        NodePtr y = dl.conv1(t, t.relu(dl.bn1(t, h, training)));
        y = dl.conv2(t, t.relu(dl.bn2(t, y, training)));
        h = t.concatChannels({h, y});
      }
      if (b < transitions.size()) {
        out.stages.push_back(h);
        h = t.avgPool2(
            transitions[b].conv(t, t.relu(transitions[b].bn(t, h, training))));
      }
    }
    h = t.relu(finalBn(t, h, training));
    out.features = h;
    out.pooled = t.globalAvgPool(h);
    return out;
  }
};

// ---------------------------------------------------------------------------
// resnet50: bottleneck residual stages 3/4/6/3, stride on the 3x3 conv.

struct ResBlock {
  Conv c1, c2, c3;
  Bn b1, b2, b3;
  std::optional<Conv> down;
  std::optional<Bn> downBn;
};

struct ResNetImpl final : Backbone::Impl {
  Conv stem;
  Bn stemBn;
  std::vector<std::vector<ResBlock>> layers;

  ResNetImpl(int inC, ParamStore& s, Rng& rng, const std::string& p) {
    archName = BackboneName::resNet50;
    featureDim = 2048;
    stageChannels = {64, 256, 512, 1024};
    stageScales = {2, 4, 8, 16};

    stem = makeConv(s, rng, p + ".stem.conv", inC, 64, 7, 2, 3);
    stemBn = makeBn(s, p + ".stem.bn", 64);

    const int counts[4] = {3, 4, 6, 3};
    const int planes[4] = {64, 128, 256, 512};
    int c = 64;
    for (int li = 0; li < 4; ++li) {
      std::vector<ResBlock> blocks;
      for (int bi = 0; bi < counts[li]; ++bi) {
        const std::string base = p + ".layer" + std::to_string(li + 1) +
                                 ".block" + std::to_string(bi + 1);
        const int stride = (li > 0 && bi == 0) ? 2 : 1;
        const int mid = planes[li];
        const int outC = mid * 4;
        ResBlock rb;
        rb.c1 = makeConv(s, rng, base + ".conv1", c, mid, 1, 1, 0);
        rb.b1 = makeBn(s, base + ".bn1", mid);
        rb.c2 = makeConv(s, rng, base + ".conv2", mid, mid, 3, stride, 1);
        rb.b2 = makeBn(s, base + ".bn2", mid);
        rb.c3 = makeConv(s, rng, base + ".conv3", mid, outC, 1, 1, 0);
        rb.b3 = makeBn(s, base + ".bn3", outC);
        if (stride != 1 || c != outC) {
          rb.down = makeConv(s, rng, base + ".down.conv", c, outC, 1, stride,
                             0);
          rb.downBn = makeBn(s, base + ".down.bn", outC);
        }
        blocks.push_back(std::move(rb));
        c = outC;
      }
      layers.push_back(std::move(blocks));
    }
  }

  BackboneOut forward(Tape& t, NodePtr x, bool training) const override {
    BackboneOut out;
    NodePtr h = t.relu(stemBn(t, stem(t, x), training));
    out.stages.push_back(h);
    h = t.maxPool2(h);
    for (std::size_t li = 0; li < layers.size(); ++li) {
      for (const ResBlock& rb : layers[li]) {
        NodePtr y = t.relu(rb.b1(t, rb.c1(t, h), training));
        y = t.relu(rb.b2(t, rb.c2(t, y), training));
        y = rb.b3(t, rb.c3(t, y), training);
        NodePtr identity =
            rb.down ? (*rb.downBn)(t, (*rb.down)(t, h), training) : h;
        h = t.relu(t.add(y, identity));
      }
      if (li + 1 < layers.size()) out.stages.push_back(h);
    }
    out.features = h;
    out.pooled = t.globalAvgPool(h);
    return out;
  }
};

// ---------------------------------------------------------------------------
// mobilenet_v1: depthwise-separable stacks at width multiplier 1.0.

struct DwSep {
  Conv dw;
  Bn dwBn;
  Conv pw;
  Bn pwBn;
};

struct MobileNetImpl final : Backbone::Impl {
  Conv stem;
  Bn stemBn;
  std::vector<DwSep> blocks;
  std::vector<int> tapAfter;  // block indices whose output is a stage tap

  MobileNetImpl(int inC, ParamStore& s, Rng& rng, const std::string& p) {
    archName = BackboneName::mobileNetV1;
    featureDim = 1024;
    stageChannels = {64, 128, 256, 512};
    stageScales = {2, 4, 8, 16};

    stem = makeConv(s, rng, p + ".stem.conv", inC, 32, 3, 2, 1);
    stemBn = makeBn(s, p + ".stem.bn", 32);

    const std::pair<int, int> plan[] = {
        {64, 1},  {128, 2}, {128, 1}, {256, 2}, {256, 1},  {512, 2},
        {512, 1}, {512, 1}, {512, 1}, {512, 1}, {512, 1},  {1024, 2},
        {1024, 1}};
    int c = 32;
    int idx = 0;
    for (const auto& [outC, stride] : plan) {
      const std::string base = p + ".block" + std::to_string(idx + 1);
      DwSep b;
      b.dw = makeConv(s, rng, base + ".dw", c, c, 3, stride, 1, c);
      b.dwBn = makeBn(s, base + ".dw_bn", c);
      b.pw = makeConv(s, rng, base + ".pw", c, outC, 1, 1, 0);
      b.pwBn = makeBn(s, base + ".pw_bn", outC);
      blocks.push_back(b);
      c = outC;
      ++idx;
    }
    tapAfter = {0, 2, 4, 10};  // last block at each of scales 2, 4, 8, 16
  }

  BackboneOut forward(Tape& t, NodePtr x, bool training) const override {
    BackboneOut out;
    NodePtr h = t.relu(stemBn(t, stem(t, x), training));
    std::size_t nextTap = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const DwSep& b = blocks[i];
      h = t.relu(b.dwBn(t, b.dw(t, h), training));
      h = t.relu(b.pwBn(t, b.pw(t, h), training));
      if (nextTap < tapAfter.size() &&
          static_cast<int>(i) == tapAfter[nextTap]) {
        out.stages.push_back(h);
        ++nextTap;
      }
    }
    out.features = h;
    out.pooled = t.globalAvgPool(h);
    return out;
  }
};

// ---------------------------------------------------------------------------
// efficientnet_b0: MBConv blocks with squeeze-excitation and SiLU.

struct MbConv {
  std::optional<Conv> expand;
  std::optional<Bn> expandBn;
  Conv dw;
  Bn dwBn;
  Lin seReduce;
  Lin seExpand;
  Conv project;
  Bn projectBn;
  bool residual = false;
};

struct EfficientNetImpl final : Backbone::Impl {
  Conv stem;
  Bn stemBn;
  std::vector<MbConv> blocks;
  std::vector<int> tapAfter;
  Conv head;
  Bn headBn;

  EfficientNetImpl(int inC, ParamStore& s, Rng& rng, const std::string& p) {
    archName = BackboneName::efficientNetB0;
    featureDim = 1280;
    stageChannels = {16, 24, 40, 112};
    stageScales = {2, 4, 8, 16};

    stem = makeConv(s, rng, p + ".stem.conv", inC, 32, 3, 2, 1);
    stemBn = makeBn(s, p + ".stem.bn", 32);

    struct StagePlan {
      int expand, outC, layers, stride, k;
    };
    const StagePlan plan[] = {
        {1, 16, 1, 1, 3},  {6, 24, 2, 2, 3},  {6, 40, 2, 2, 5},
        {6, 80, 3, 2, 3},  {6, 112, 3, 1, 5}, {6, 192, 4, 2, 5},
        {6, 320, 1, 1, 3}};
    int c = 32;
    int idx = 0;
    int stageIdx = 0;
    for (const StagePlan& sp : plan) {
      for (int l = 0; l < sp.layers; ++l) {
        const std::string base = p + ".block" + std::to_string(idx + 1);
        const int stride = (l == 0) ? sp.stride : 1;
        const int expC = c * sp.expand;
        MbConv mb;
        if (sp.expand != 1) {
          mb.expand = makeConv(s, rng, base + ".expand", c, expC, 1, 1, 0);
          mb.expandBn = makeBn(s, base + ".expand_bn", expC);
        }
        mb.dw = makeConv(s, rng, base + ".dw", expC, expC, sp.k, stride,
                         sp.k / 2, expC);
        mb.dwBn = makeBn(s, base + ".dw_bn", expC);
        const int seDim = std::max(1, c / 4);
        mb.seReduce = makeLin(s, rng, base + ".se_reduce", expC, seDim);
        mb.seExpand = makeLin(s, rng, base + ".se_expand", seDim, expC);
        mb.project = makeConv(s, rng, base + ".project", expC, sp.outC, 1, 1,
                              0);
        mb.projectBn = makeBn(s, base + ".project_bn", sp.outC);
        mb.residual = (stride == 1 && c == sp.outC);
        blocks.push_back(std::move(mb));
        c = sp.outC;
        ++idx;
      }
      // taps after stages producing 16, 24, 40 and 112 channels
      if (stageIdx == 0 || stageIdx == 1 || stageIdx == 2 || stageIdx == 4)
        tapAfter.push_back(idx - 1);
      ++stageIdx;
    }
    head = makeConv(s, rng, p + ".head.conv", c, 1280, 1, 1, 0);
    headBn = makeBn(s, p + ".head.bn", 1280);
  }

  BackboneOut forward(Tape& t, NodePtr x, bool training) const override {
    BackboneOut out;
    NodePtr h = silu(t, stemBn(t, stem(t, x), training));
    std::size_t nextTap = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const MbConv& mb = blocks[i];
      NodePtr y = h;
      if (mb.expand) y = silu(t, (*mb.expandBn)(t, (*mb.expand)(t, y), training));
      y = silu(t, mb.dwBn(t, mb.dw(t, y), training));
      NodePtr squeezed = t.globalAvgPool(y);
      NodePtr se = silu(t, mb.seReduce(t, squeezed));
      se = t.sigmoid(mb.seExpand(t, se));
      y = t.scaleChannels(y, se);
      y = mb.projectBn(t, mb.project(t, y), training);
      h = mb.residual ? t.add(h, y) : y;
      if (nextTap < tapAfter.size() &&
          static_cast<int>(i) == tapAfter[nextTap]) {
        out.stages.push_back(h);
        ++nextTap;
      }
    }
    h = silu(t, headBn(t, head(t, h), training));
    out.features = h;
    out.pooled = t.globalAvgPool(h);
    return out;
  }
};

}  // namespace

Backbone::Backbone(const BackboneConfig& cfg, ParamStore& store, Rng& rng,
                   const std::string& prefix) {
  switch (cfg.name) {
    case BackboneName::tinyCnn:
      impl_ = std::make_unique<TinyCnnImpl>(cfg.inChannels, store, rng, prefix);
      break;
    case BackboneName::denseNet121:
      impl_ = std::make_unique<DenseNetImpl>(cfg.inChannels, store, rng,
                                             prefix);
      break;
    case BackboneName::resNet50:
      impl_ = std::make_unique<ResNetImpl>(cfg.inChannels, store, rng, prefix);
      break;
    case BackboneName::mobileNetV1:
      impl_ = std::make_unique<MobileNetImpl>(cfg.inChannels, store, rng,
                                              prefix);
      break;
    case BackboneName::efficientNetB0:
      impl_ = std::make_unique<EfficientNetImpl>(cfg.inChannels, store, rng,
                                                 prefix);
      break;
  }
}

Backbone::~Backbone() = default;
Backbone::Backbone(Backbone&&) noexcept = default;
Backbone& Backbone::operator=(Backbone&&) noexcept = default;

BackboneOut Backbone::forward(Tape& t, NodePtr x, bool training) const {
  return impl_->forward(t, x, training);
}

int Backbone::featureDim() const { return impl_->featureDim; }
BackboneName Backbone::name() const { return impl_->archName; }
const std::vector<int>& Backbone::stageChannels() const {
  return impl_->stageChannels;
}
const std::vector<int>& Backbone::stageScales() const {
  return impl_->stageScales;
}

// ---------------------------------------------------------------------------

Classifier::Classifier(int featureDim, int numClasses, ParamStore& store,
                       Rng& rng, const std::string& prefix, double dropout)
    : dropout_(dropout), numClasses_(numClasses) {
  w_ = &store.add(prefix + ".fc.weight",
                  heNormal({numClasses, featureDim}, featureDim, rng));
  b_ = &store.add(prefix + ".fc.bias", constant({numClasses}, 0.0));
}

NodePtr Classifier::forward(Tape& t, NodePtr pooled, bool training,
                            Rng& dropRng) const {
  NodePtr h = t.dropout(pooled, dropout_, dropRng, training);
  return t.linear(h, t.param(*w_), t.param(*b_));
}

ProjectionHead::ProjectionHead(int featureDim, int projDim, bool mlp,
                               ParamStore& store, Rng& rng,
                               const std::string& prefix)
    : projDim_(projDim) {
  if (mlp) {
    w1_ = &store.add(prefix + ".fc1.weight",
                     heNormal({featureDim, featureDim}, featureDim, rng));
    b1_ = &store.add(prefix + ".fc1.bias", constant({featureDim}, 0.0));
    w2_ = &store.add(prefix + ".fc2.weight",
                     heNormal({projDim, featureDim}, featureDim, rng));
    b2_ = &store.add(prefix + ".fc2.bias", constant({projDim}, 0.0));
  } else {
    w1_ = &store.add(prefix + ".fc1.weight",
                     heNormal({projDim, featureDim}, featureDim, rng));
    b1_ = &store.add(prefix + ".fc1.bias", constant({projDim}, 0.0));
  }
}

NodePtr ProjectionHead::forward(Tape& t, NodePtr pooled) const {
  NodePtr h = t.linear(pooled, t.param(*w1_), t.param(*b1_));
  if (w2_) {
    h = t.relu(h);
    h = t.linear(h, t.param(*w2_), t.param(*b2_));
  }
  return t.l2NormalizeRows(h);
}

// ---------------------------------------------------------------------------

struct SegDecoder::Impl {
  struct Up {
    Conv conv;  // 3x3 after upsample + concat
  };
  std::vector<Up> ups;          // coarsest skip first
  std::optional<Conv> fullRes;  // extra conv at input resolution
  Conv out;
};

SegDecoder::SegDecoder(const Backbone& encoder, ParamStore& store, Rng& rng,
                       const std::string& prefix, int outChannels)
    : impl_(std::make_unique<Impl>()) {
  const auto& skipC = encoder.stageChannels();
  const auto& scales = encoder.stageScales();
  int curC = encoder.featureDim();
  int idx = 0;
  for (int i = static_cast<int>(skipC.size()) - 1; i >= 0; --i) {
    Impl::Up up;
    up.conv = makeConv(store, rng,
                       prefix + ".up" + std::to_string(idx + 1) + ".conv",
                       curC + skipC[i], skipC[i], 3, 1, 1, 1, true);
    impl_->ups.push_back(up);
    curC = skipC[i];
    ++idx;
  }
  if (!scales.empty() && scales.front() > 1) {
    impl_->fullRes = makeConv(store, rng, prefix + ".full.conv", curC, curC, 3,
                              1, 1, 1, true);
  }
  impl_->out = makeConv(store, rng, prefix + ".out", curC, outChannels, 1, 1,
                        0, 1, true);
}

SegDecoder::~SegDecoder() = default;
SegDecoder::SegDecoder(SegDecoder&&) noexcept = default;

namespace {

// Upsamples by two, then pads or crops so the result matches (th, tw).
NodePtr matchSize(Tape& t, NodePtr x, int th, int tw) {
  NodePtr h = t.upsampleNearest2(x);
  const int hh = h->value.shape(2), hw = h->value.shape(3);
  if (hh < th || hw < tw)
    h = t.padSpatial(h, 0, std::max(0, th - hh), 0, std::max(0, tw - hw));
  if (h->value.shape(2) > th || h->value.shape(3) > tw)
    h = t.cropSpatial(h, 0, 0, th, tw);
  return h;
}

}  // namespace

NodePtr SegDecoder::forward(Tape& t, const BackboneOut& enc, int inH,
                            int inW) const {
  NodePtr h = enc.features;
  int skipIdx = static_cast<int>(enc.stages.size()) - 1;
  for (const Impl::Up& up : impl_->ups) {
    assert(skipIdx >= 0);
    NodePtr skip = enc.stages[skipIdx--];
    h = matchSize(t, h, skip->value.shape(2), skip->value.shape(3));
    h = t.relu(up.conv(t, t.concatChannels({h, skip})));
  }
  if (impl_->fullRes) {
    h = matchSize(t, h, inH, inW);
    h = t.relu((*impl_->fullRes)(t, h));
  }
  return impl_->out(t, h);
}

// ---------------------------------------------------------------------------

MomentumQueue::MomentumQueue(int capacity, int dim, Rng& rng)
    : queue_({capacity, dim}), capacity_(capacity), dim_(dim) {
  for (int r = 0; r < capacity; ++r) {
    double norm = 0.0;
    for (int c = 0; c < dim; ++c) {
      const double v = rng.normal(0.0, 1.0);
      queue_.at(r, c) = v;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (int c = 0; c < dim; ++c) queue_.at(r, c) /= norm;
  }
}

void MomentumQueue::enqueue(const Tensor& keys) {
  if (keys.dim() != 2 || keys.shape(1) != dim_)
    throw ValidationError("enqueued keys must be [B, dim]");
  for (int r = 0; r < keys.shape(0); ++r) {
    double norm = 0.0;
    for (int c = 0; c < dim_; ++c) norm += keys.at(r, c) * keys.at(r, c);
    norm = std::sqrt(norm);
    if (norm == 0.0)
      throw ValidationError("cannot enqueue a zero key vector");
    double scale = 1.0;
    if (std::abs(norm - 1.0) > 1e-5) {
      std::cerr << "[queue] renormalizing key with norm " << norm << "\n";
      scale = 1.0 / norm;
    }
    for (int c = 0; c < dim_; ++c) queue_.at(ptr_, c) = keys.at(r, c) * scale;
    ptr_ = (ptr_ + 1) % capacity_;
    filled_ = std::min(filled_ + 1, capacity_);
  }
}

void momentumUpdate(const ParamStore& query, ParamStore& key, double m) {
  if (m < 0.0 || m > 1.0)
    throw ValidationError("momentum coefficient must lie in [0, 1]");
  for (Param* kp : key.all()) {
    const Param* qp = query.find(kp->name);
    if (!qp)
      throw ValidationError("momentum update: query store lacks " + kp->name);
    if (!qp->value.sameShape(kp->value))
      throw ValidationError("momentum update: shape mismatch for " + kp->name);
    if (m == 1.0) continue;
    if (m == 0.0) {
      std::copy(qp->value.data(), qp->value.data() + qp->value.size(),
                kp->value.data());
      continue;
    }
    for (std::size_t i = 0; i < kp->value.size(); ++i)
      kp->value[i] = m * kp->value[i] + (1.0 - m) * qp->value[i];
  }
}

void copyParams(const ParamStore& query, ParamStore& key) {
  momentumUpdate(query, key, 0.0);
}

}  // namespace cxr::nn
