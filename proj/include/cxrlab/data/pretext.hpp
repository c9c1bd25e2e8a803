#pragma once

#include <utility>
#include <vector>

#include "cxrlab/core/rng.hpp"
#include "cxrlab/core/tensor.hpp"
#include "cxrlab/data/transforms.hpp"

namespace cxr::data {

// Mask geometry is specified at a 224x224 reference resolution and scaled
// proportionally per axis for other image sizes.
inline constexpr int kReferenceSize = 224;
inline constexpr int kMaskSideLo = 17;
inline constexpr int kMaskSideHi = 32;
inline constexpr int kCenterMaskSide = 100;

enum class MaskSide { left, right, center };

struct MaskSpec {
  int x = 0;  // left
  int y = 0;  // top
  int w = 0;
  int h = 0;
  MaskSide side = MaskSide::center;

  bool operator==(const MaskSpec&) const = default;
};

// Inclusive pixel bounds of the area eligible for targeted masks: the image
// minus 10% on the left and right, 15% at the top, and 20% at the bottom.
struct ConstraintRegion {
  int row0 = 0, row1 = 0;
  int col0 = 0, col1 = 0;
};

/// Eligible area for an (h, w) image: rows ceil(0.15h)..floor(0.80h), cols
/// ceil(0.10w)..floor(0.90w). Raises a validation error when the image is
/// under 32x32 or the region cannot hold even the smallest scaled mask.
ConstraintRegion constraintRegion(int h, int w);

/// One square-at-reference mask per lung. Side lengths draw uniformly from
/// [sizeLo, sizeHi] (reference pixels) per mask and are scaled per axis.
/// The left mask stays strictly left of column w/2, the right mask starts at
/// or after it, and both stay inside the constraint region, so the pair is
/// always disjoint. Raises a validation error when the largest scaled mask
/// cannot fit in its half of the region.
std::pair<MaskSpec, MaskSpec> targetedLungMasks(int h, int w, Rng& rng,
                                                int sizeLo = kMaskSideLo,
                                                int sizeHi = kMaskSideHi);

/// Centered mask with floor((dim - size)/2) offsets. Negative mask dims
/// select the scaled default (100 at reference). Oversized masks are
/// rejected.
MaskSpec centerMask(int h, int w, int maskH = -1, int maskW = -1);

struct InpaintSample {
  Tensor input;   // pixels with mask interiors replaced by the fill value
  Tensor target;  // original pixels
  std::vector<MaskSpec> masks;
  Tensor lossMask;  // 1 inside the masks, 0 elsewhere
};

/// Builds a reconstruction sample. Masks must sit inside the image and be
/// pairwise disjoint. The default fill is the image mean.
InpaintSample makeInpaintSample(const Tensor& pixels,
                                const std::vector<MaskSpec>& masks,
                                double fillValue);
InpaintSample makeInpaintSample(const Tensor& pixels,
                                const std::vector<MaskSpec>& masks);

/// Two independently augmented views of one image for contrastive training.
std::pair<Tensor, Tensor> mocoPair(const Tensor& pixels, MocoVariant variant,
                                   Rng& rngQ, Rng& rngK);

/// Same, but with an explicit geometric policy for both views (used to pin
/// the pipeline down in tests and debugging).
std::pair<Tensor, Tensor> mocoPairWithPolicy(const Tensor& pixels,
                                             const AugPolicy& policy,
                                             Rng& rngQ, Rng& rngK);

}  // namespace cxr::data
