#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cxrlab/core/rng.hpp"
#include "cxrlab/core/tensor.hpp"
#include "cxrlab/nn/graph.hpp"
#include "cxrlab/nn/param.hpp"

namespace cxr::nn {

enum class BackboneName {
  tinyCnn,
  denseNet121,
  resNet50,
  mobileNetV1,
  efficientNetB0,
};

BackboneName backboneFromString(const std::string& s);
std::string toString(BackboneName name);
int backboneFeatureDim(BackboneName name);

struct BackboneConfig {
  BackboneName name = BackboneName::tinyCnn;
  int inChannels = 1;
};

/// One forward pass worth of taps. `stages` runs finest to coarsest and
/// matches stageChannels()/stageScales(); `features` is the last conv map
/// (the GradCAM target); `pooled` is its global average, [N, featureDim].
struct BackboneOut {
  std::vector<NodePtr> stages;
  NodePtr features;
  NodePtr pooled;
};

class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, ParamStore& store, Rng& rng,
           const std::string& prefix = "backbone");
  ~Backbone();
  Backbone(Backbone&&) noexcept;
  Backbone& operator=(Backbone&&) noexcept;

  BackboneOut forward(Tape& t, NodePtr x, bool training) const;
  int featureDim() const;
  BackboneName name() const;
  const std::vector<int>& stageChannels() const;
  /// Downsample factor of each stage tap relative to the input.
  const std::vector<int>& stageScales() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

/// Global-average-pooled features -> dropout -> linear logits.
class Classifier {
 public:
  Classifier(int featureDim, int numClasses, ParamStore& store, Rng& rng,
             const std::string& prefix = "head", double dropout = 0.2);
  NodePtr forward(Tape& t, NodePtr pooled, bool training, Rng& dropRng) const;
  int numClasses() const { return numClasses_; }

 private:
  Param* w_;
  Param* b_;
  double dropout_;
  int numClasses_;
};

/// Embedding head for contrastive pretraining. Linear by default, two-layer
/// MLP when `mlp` is set. Output rows are L2 normalized.
class ProjectionHead {
 public:
  ProjectionHead(int featureDim, int projDim, bool mlp, ParamStore& store,
                 Rng& rng, const std::string& prefix = "proj");
  NodePtr forward(Tape& t, NodePtr pooled) const;
  int projDim() const { return projDim_; }

 private:
  Param* w1_;
  Param* b1_;
  Param* w2_ = nullptr;
  Param* b2_ = nullptr;
  int projDim_;
};

/// U-style decoder over the backbone taps. Upsamples from the coarsest map,
/// concatenates each skip, and ends with a 1x1 conv producing `outChannels`
/// logits at the input resolution. Handles sizes that are not exact powers
/// of two by padding and cropping around each merge.
class SegDecoder {
 public:
  SegDecoder(const Backbone& encoder, ParamStore& store, Rng& rng,
             const std::string& prefix = "decoder", int outChannels = 1);
  ~SegDecoder();
  SegDecoder(SegDecoder&&) noexcept;

  NodePtr forward(Tape& t, const BackboneOut& enc, int inH, int inW) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Fixed-size FIFO of negative keys for contrastive training. Rows are kept
/// unit norm; enqueue renormalizes when an incoming row drifts.
class MomentumQueue {
 public:
  MomentumQueue(int capacity, int dim, Rng& rng);

  void enqueue(const Tensor& keys);  // [B, dim]
  const Tensor& data() const { return queue_; }
  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  int position() const { return ptr_; }
  /// Number of slots overwritten by real keys so far, capped at capacity.
  int filled() const { return filled_; }

 private:
  Tensor queue_;
  int capacity_;
  int dim_;
  int ptr_ = 0;
  int filled_ = 0;
};

/// In-place momentum update: key <- m * key + (1 - m) * query, matched by
/// parameter name over every entry including the non-trainable ones.
void momentumUpdate(const ParamStore& query, ParamStore& key, double m);

/// Copies query values into the key store (the m = 0 case, used at init).
void copyParams(const ParamStore& query, ParamStore& key);

}  // namespace cxr::nn
