#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "cxrlab/core/rng.hpp"
#include "cxrlab/core/tensor.hpp"

namespace cxr::data {

// Deterministic preprocessing applied before any augmentation. The pipeline
// runs winsorize, histogram equalization, resize, then [0,1] normalization,
// skipping whichever steps are disabled.
struct PreprocConfig {
  double winsorPercentile = 92.5;  // clamp percentile in (50,100]; 0 disables
  bool winsorUpperOnly = false;    // clamp only the bright tail
  bool histEq = false;
  bool histEqPlainCdf = false;  // map via round(255*cdf) instead of the
                                // offset form that anchors the minimum at 0
  int targetH = 224;
  int targetW = 224;
  bool normalize01 = true;

  void validate() const;
};

// Stochastic geometric augmentation. Ranges of zero width disable the
// corresponding component; applying a policy never changes image dimensions.
struct AugPolicy {
  double rotationDeg = 0.0;  // symmetric range, degrees
  double hflipProb = 0.0;
  double scaleLo = 1.0;  // center-anchored zoom, cropped back to size
  double scaleHi = 1.0;
  double shearLo = 0.0;
  double shearHi = 0.0;
  double translateFrac = 0.0;  // horizontal shift as a fraction of width
  std::uint64_t seedStream = 0;

  void validate() const;
};

// One concrete draw from an AugPolicy.
struct AugParams {
  double rotationDeg = 0.0;
  bool hflip = false;
  double scale = 1.0;
  double shear = 0.0;
  double translateFrac = 0.0;
};

/// Clamps the bright tail at the p-th percentile value and, unless
/// `upperOnly`, the dark tail at the (100-p)-th. Percentiles use nearest
/// rank on the sorted pixel multiset. p = 100 is the identity.
Tensor winsorize(const Tensor& pixels, double percentile,
                 bool upperOnly = false);

/// Histogram equalization over integer-quantized levels (up to 16-bit).
/// Default convention subtracts the lowest occupied level's CDF so the
/// output minimum is 0; `plainCdf` uses round(255*cdf) directly. A constant
/// image maps to all zeros under the default convention.
Tensor histogramEqualize(const Tensor& pixels, bool plainCdf = false);

/// Affine rescale to exactly [0,1]; a constant image maps to zeros.
Tensor normalize01(const Tensor& pixels);

/// Bilinear resample to (outH, outW).
Tensor resizeTo(const Tensor& pixels, int outH, int outW);

/// Full deterministic pipeline per the config.
Tensor preprocess(const Tensor& pixels, const PreprocConfig& cfg);

/// Draws augmentation parameters. Consumes one draw per component in a
/// fixed order (rotation, flip, scale, shear, translate) regardless of
/// which components are active, so streams stay aligned across policies.
AugParams sampleAugParams(const AugPolicy& policy, Rng& rng);

/// Applies the drawn transform about the image center. Bilinear for images,
/// nearest-neighbor when `nearest` (masks). Out-of-frame pixels fill with 0.
Tensor warpWithParams(const Tensor& pixels, const AugParams& params,
                      bool nearest = false, double fill = 0.0);

/// Samples one set of parameters and applies it to the image (bilinear) and,
/// when present, the mask (nearest-neighbor), keeping the pair aligned.
std::pair<Tensor, Tensor> applyAugment(const Tensor& pixels,
                                       const Tensor* mask,
                                       const AugPolicy& policy, Rng& rng);

// Two-view augmentation recipes for momentum contrast.
//   cxr:         hflip p=0.5, rotation within 10 degrees
//   cxrModified: hflip p=0.5, rotation within 20 degrees, horizontal
//                translation up to 20%, zoom 1.0-1.2
//   v2:          random resized crop, brightness/contrast jitter, hflip,
//                Gaussian blur (single-channel adaptation)
enum class MocoVariant { cxr, cxrModified, v2 };

MocoVariant mocoVariantFromString(const std::string& s);
std::string toString(MocoVariant v);

/// Geometric policy behind the cxr and cxrModified recipes. The v2 recipe
/// is not expressible as an AugPolicy and raises a validation error.
AugPolicy mocoPolicy(MocoVariant variant);

/// One augmented view of a preprocessed [0,1] image; dimensions preserved.
Tensor mocoView(const Tensor& pixels, MocoVariant variant, Rng& rng);

/// Separable Gaussian blur with reflected borders.
Tensor gaussianBlur(const Tensor& pixels, double sigma);

}  // namespace cxr::data
