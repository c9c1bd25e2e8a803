#include "cxrlab/data/pretext.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cxrlab/core/error.hpp"

namespace cxr::data {

namespace {

int scaleToAxis(int refSide, int axisLen) {
  const double scaled =
      static_cast<double>(refSide) * axisLen / kReferenceSize;
  return std::max(1, static_cast<int>(std::round(scaled)));
}

void requireInside(const MaskSpec& m, int h, int w) {
  if (m.w <= 0 || m.h <= 0 || m.x < 0 || m.y < 0 || m.x + m.w > w ||
      m.y + m.h > h)
    throw ValidationError("mask does not fit inside the image");
}

bool overlaps(const MaskSpec& a, const MaskSpec& b) {
  return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h &&
         b.y < a.y + a.h;
}

}  // namespace

ConstraintRegion constraintRegion(int h, int w) {
  if (h < 32 || w < 32)
    throw ValidationError("constraint region needs at least a 32x32 image");
  ConstraintRegion r;
  r.row0 = static_cast<int>(std::ceil(0.15 * h));
  r.row1 = static_cast<int>(std::floor(0.80 * h));
  r.col0 = static_cast<int>(std::ceil(0.10 * w));
  r.col1 = static_cast<int>(std::floor(0.90 * w));
  const int minH = scaleToAxis(kMaskSideLo, h);
  const int minW = scaleToAxis(kMaskSideLo, w);
  if (r.row1 - r.row0 + 1 < minH || r.col1 - r.col0 + 1 < minW)
    throw ValidationError(
        "constraint region cannot hold the smallest mask; use smaller masks "
        "or a larger image");
  return r;
}

std::pair<MaskSpec, MaskSpec> targetedLungMasks(int h, int w, Rng& rng,
                                                int sizeLo, int sizeHi) {
  if (sizeLo < 1 || sizeLo > sizeHi)
    throw ValidationError("mask size range must satisfy 1 <= lo <= hi");
  const ConstraintRegion region = constraintRegion(h, w);
  const int half = w / 2;  // left masks end before this column, right start at it

  const int maxH = scaleToAxis(sizeHi, h);
  const int maxW = scaleToAxis(sizeHi, w);
  const int leftSpan = half - region.col0;
  const int rightSpan = region.col1 + 1 - std::max(half, region.col0);
  if (region.row1 - region.row0 + 1 < maxH || leftSpan < maxW ||
      rightSpan < maxW)
    throw ValidationError(
        "largest mask (" + std::to_string(sizeHi) +
        " at reference scale) does not fit the per-lung constraint region; "
        "shrink the mask size range");

  auto drawMask = [&](MaskSide side) {
    const int refSide = static_cast<int>(rng.uniformInt(sizeLo, sizeHi));
    MaskSpec m;
    m.side = side;
    m.h = scaleToAxis(refSide, h);
    m.w = scaleToAxis(refSide, w);
    m.y = static_cast<int>(
        rng.uniformInt(region.row0, region.row1 + 1 - m.h));
    if (side == MaskSide::left) {
      m.x = static_cast<int>(rng.uniformInt(region.col0, half - m.w));
    } else {
      m.x = static_cast<int>(
          rng.uniformInt(std::max(half, region.col0), region.col1 + 1 - m.w));
    }
    return m;
  };

  MaskSpec left = drawMask(MaskSide::left);
  MaskSpec right = drawMask(MaskSide::right);
  return {left, right};
}

MaskSpec centerMask(int h, int w, int maskH, int maskW) {
  if (h <= 0 || w <= 0) throw ValidationError("image size must be positive");
  if (maskH < 0) maskH = scaleToAxis(kCenterMaskSide, h);
  if (maskW < 0) maskW = scaleToAxis(kCenterMaskSide, w);
  if (maskH == 0 || maskW == 0)
    throw ValidationError("center mask must be non-empty");
  if (maskH > h || maskW > w)
    throw ValidationError("center mask exceeds the image size");
  MaskSpec m;
  m.side = MaskSide::center;
  m.h = maskH;
  m.w = maskW;
  m.y = (h - maskH) / 2;
  m.x = (w - maskW) / 2;
  return m;
}

InpaintSample makeInpaintSample(const Tensor& pixels,
                                const std::vector<MaskSpec>& masks,
                                double fillValue) {
  if (pixels.dim() != 2 || pixels.size() == 0)
    throw ValidationError("expected a non-empty [H,W] image tensor");
  const int h = pixels.shape(0), w = pixels.shape(1);
  for (const MaskSpec& m : masks) requireInside(m, h, w);
  for (std::size_t i = 0; i < masks.size(); ++i)
    for (std::size_t j = i + 1; j < masks.size(); ++j)
      if (overlaps(masks[i], masks[j]))
        throw ValidationError("inpainting masks must be pairwise disjoint");

  InpaintSample s;
  s.target = pixels.clone();
  s.input = pixels.clone();
  s.masks = masks;
  s.lossMask = Tensor({h, w});
  for (const MaskSpec& m : masks)
    for (int y = m.y; y < m.y + m.h; ++y)
      for (int x = m.x; x < m.x + m.w; ++x) {
        s.input.at(y, x) = fillValue;
        s.lossMask.at(y, x) = 1.0;
      }
  return s;
}

InpaintSample makeInpaintSample(const Tensor& pixels,
                                const std::vector<MaskSpec>& masks) {
  double mean = 0.0;
  for (std::size_t i = 0; i < pixels.size(); ++i) mean += pixels.data()[i];
  mean /= static_cast<double>(pixels.size());
  return makeInpaintSample(pixels, masks, mean);
}

std::pair<Tensor, Tensor> mocoPair(const Tensor& pixels, MocoVariant variant,
                                   Rng& rngQ, Rng& rngK) {
  return {mocoView(pixels, variant, rngQ), mocoView(pixels, variant, rngK)};
}

std::pair<Tensor, Tensor> mocoPairWithPolicy(const Tensor& pixels,
                                             const AugPolicy& policy,
                                             Rng& rngQ, Rng& rngK) {
  return {applyAugment(pixels, nullptr, policy, rngQ).first,
          applyAugment(pixels, nullptr, policy, rngK).first};
}

}  // namespace cxr::data
