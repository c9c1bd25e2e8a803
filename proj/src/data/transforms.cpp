#include "cxrlab/data/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cxrlab/core/error.hpp"
#include "cxrlab/kernels/kernels.hpp"

namespace cxr::data {

namespace {
constexpr double kPi = 3.14159265358979323846;

void requireImage(const Tensor& t) {
  if (t.dim() != 2 || t.size() == 0)
    throw ValidationError("expected a non-empty [H,W] image tensor");
}
}  // namespace

void PreprocConfig::validate() const {
  if (winsorPercentile != 0.0 &&
      (winsorPercentile <= 50.0 || winsorPercentile > 100.0))
    throw ValidationError("winsor percentile must lie in (50,100] or be 0");
  if (targetH <= 0 || targetW <= 0)
    throw ValidationError("target size must be positive");
}

void AugPolicy::validate() const {
  if (rotationDeg < 0.0) throw ValidationError("rotation range must be >= 0");
  if (hflipProb < 0.0 || hflipProb > 1.0)
    throw ValidationError("flip probability must lie in [0,1]");
  if (scaleLo > scaleHi || scaleLo <= 0.0)
    throw ValidationError("scale range must satisfy 0 < lo <= hi");
  if (shearLo > shearHi) throw ValidationError("shear range must have lo <= hi");
  if (translateFrac < 0.0 || translateFrac >= 1.0)
    throw ValidationError("translation fraction must lie in [0,1)");
}

Tensor winsorize(const Tensor& pixels, double percentile, bool upperOnly) {
  requireImage(pixels);
  if (percentile <= 50.0 || percentile > 100.0)
    throw ValidationError("winsor percentile must lie in (50,100]");

  const std::size_t n = pixels.size();
  std::vector<double> sorted(pixels.data(), pixels.data() + n);
  std::sort(sorted.begin(), sorted.end());
  auto nearestRank = [&](double p) {
    const auto rank = static_cast<std::size_t>(std::clamp<double>(
        std::ceil(p / 100.0 * static_cast<double>(n)), 1.0,
        static_cast<double>(n)));
    return sorted[rank - 1];
  };
  const double hi = nearestRank(percentile);
  const double lo = upperOnly ? sorted.front() : nearestRank(100.0 - percentile);

  Tensor out = pixels.clone();
  double* d = out.data();
  for (std::size_t i = 0; i < n; ++i) d[i] = std::clamp(d[i], lo, hi);
  return out;
}

Tensor histogramEqualize(const Tensor& pixels, bool plainCdf) {
  requireImage(pixels);
  const std::size_t n = pixels.size();
  const double* src = pixels.data();

  int maxLevel = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = src[i];
    if (v != std::round(v) || v < 0.0 || v > 65535.0)
      throw ValidationError(
          "histogram equalization needs integer levels in [0, 65535]");
    maxLevel = std::max(maxLevel, static_cast<int>(v));
  }

  std::vector<std::size_t> cdf(static_cast<std::size_t>(maxLevel) + 1, 0);
  for (std::size_t i = 0; i < n; ++i) ++cdf[static_cast<std::size_t>(src[i])];
  for (std::size_t v = 1; v < cdf.size(); ++v) cdf[v] += cdf[v - 1];

  std::size_t cdfMin = 0;
  for (std::size_t v = 0; v < cdf.size(); ++v)
    if (cdf[v] > 0) {
      cdfMin = cdf[v];
      break;
    }

  Tensor out = pixels.clone();
  double* d = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = cdf[static_cast<std::size_t>(src[i])];
    double mapped;
    if (plainCdf) {
      mapped = std::round(255.0 * static_cast<double>(c) /
                          static_cast<double>(n));
    } else if (n == cdfMin) {
      mapped = 0.0;  // single occupied level
    } else {
      mapped = std::round(255.0 * static_cast<double>(c - cdfMin) /
                          static_cast<double>(n - cdfMin));
    }
    d[i] = mapped;
  }
  return out;
}

Tensor normalize01(const Tensor& pixels) {
  requireImage(pixels);
  const std::size_t n = pixels.size();
  const double* src = pixels.data();
  double lo = src[0], hi = src[0];
  for (std::size_t i = 1; i < n; ++i) {
    lo = std::min(lo, src[i]);
    hi = std::max(hi, src[i]);
  }
  Tensor out = pixels.clone();
  double* d = out.data();
  if (hi == lo) {
    for (std::size_t i = 0; i < n; ++i) d[i] = 0.0;
    return out;
  }
  // divide rather than multiply by a reciprocal: (hi-lo)/(hi-lo) is exactly
  // 1, which makes the map idempotent and the output range exactly [0,1]
  for (std::size_t i = 0; i < n; ++i) d[i] = (d[i] - lo) / (hi - lo);
  return out;
}

Tensor resizeTo(const Tensor& pixels, int outH, int outW) {
  requireImage(pixels);
  if (outH <= 0 || outW <= 0)
    throw ValidationError("resize target must be positive");
  const int inH = pixels.shape(0), inW = pixels.shape(1);
  if (inH == outH && inW == outW) return pixels.clone();
  Tensor out({outH, outW});
  kernels::resizeBilinear(pixels.data(), inH, inW, out.data(), outH, outW);
  return out;
}

Tensor preprocess(const Tensor& pixels, const PreprocConfig& cfg) {
  cfg.validate();
  Tensor x = pixels;
  if (cfg.winsorPercentile != 0.0)
    x = winsorize(x, cfg.winsorPercentile, cfg.winsorUpperOnly);
  if (cfg.histEq) x = histogramEqualize(x, cfg.histEqPlainCdf);
  x = resizeTo(x, cfg.targetH, cfg.targetW);
  if (cfg.normalize01) x = normalize01(x);
  return x;
}

AugParams sampleAugParams(const AugPolicy& policy, Rng& rng) {
  policy.validate();
  AugParams p;
  p.rotationDeg = rng.uniform(-policy.rotationDeg, policy.rotationDeg);
  p.hflip = rng.bernoulli(policy.hflipProb);
  p.scale = rng.uniform(policy.scaleLo, policy.scaleHi);
  p.shear = rng.uniform(policy.shearLo, policy.shearHi);
  p.translateFrac =
      rng.uniform(-policy.translateFrac, policy.translateFrac);
  return p;
}

Tensor warpWithParams(const Tensor& pixels, const AugParams& params,
                      bool nearest, double fill) {
  requireImage(pixels);
  const int h = pixels.shape(0), w = pixels.shape(1);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double theta = params.rotationDeg * kPi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double f = params.hflip ? -1.0 : 1.0;

  // forward map: dest = F * R * diag(scale) * Shear * (src - C) + C + t,
  // with Shear = [[1, k], [0, 1]] and F = diag(flip, 1)
  const double k = params.shear;
  const double r00 = c * params.scale;
  const double r01 = (c * k - s) * params.scale;
  const double r10 = s * params.scale;
  const double r11 = (s * k + c) * params.scale;
  const double a00 = f * r00, a01 = f * r01;
  const double a10 = r10, a11 = r11;

  const double det = a00 * a11 - a01 * a10;
  if (std::abs(det) < 1e-12)
    throw ValidationError("augmentation transform is singular");
  const double i00 = a11 / det, i01 = -a01 / det;
  const double i10 = -a10 / det, i11 = a00 / det;

  const double tx = params.translateFrac * w;
  // inverse map: src = M^-1 * (dest - C - t) + C
  kernels::Affine2d inv;
  inv.a00 = i00;
  inv.a01 = i01;
  inv.a10 = i10;
  inv.a11 = i11;
  inv.tx = -i00 * (cx + tx) - i01 * cy + cx;
  inv.ty = -i10 * (cx + tx) - i11 * cy + cy;

  Tensor out({h, w});
  kernels::warpAffine(pixels.data(), h, w, out.data(), inv, nearest, fill);
  return out;
}

std::pair<Tensor, Tensor> applyAugment(const Tensor& pixels,
                                       const Tensor* mask,
                                       const AugPolicy& policy, Rng& rng) {
  if (mask) {
    if (mask->dim() != 2 || mask->shape(0) != pixels.shape(0) ||
        mask->shape(1) != pixels.shape(1))
      throw ValidationError("mask dimensions must match the image");
  }
  const AugParams params = sampleAugParams(policy, rng);
  Tensor img = warpWithParams(pixels, params, false, 0.0);
  Tensor m;
  if (mask) m = warpWithParams(*mask, params, true, 0.0);
  return {std::move(img), std::move(m)};
}

MocoVariant mocoVariantFromString(const std::string& s) {
  if (s == "cxr") return MocoVariant::cxr;
  if (s == "cxr_modified") return MocoVariant::cxrModified;
  if (s == "v2") return MocoVariant::v2;
  throw ConfigError("unknown contrastive augmentation variant: '" + s + "'");
}

std::string toString(MocoVariant v) {
  switch (v) {
    case MocoVariant::cxr: return "cxr";
    case MocoVariant::cxrModified: return "cxr_modified";
    case MocoVariant::v2: return "v2";
  }
  return "cxr";
}

AugPolicy mocoPolicy(MocoVariant variant) {
  AugPolicy p;
  switch (variant) {
    case MocoVariant::cxr:
      p.rotationDeg = 10.0;
      p.hflipProb = 0.5;
      break;
    case MocoVariant::cxrModified:
      p.rotationDeg = 20.0;
      p.hflipProb = 0.5;
      p.scaleLo = 1.0;
      p.scaleHi = 1.2;
      p.translateFrac = 0.2;
      break;
    case MocoVariant::v2:
      throw ValidationError(
          "the v2 recipe includes crop/jitter/blur and has no AugPolicy form");
  }
  return p;
}

Tensor gaussianBlur(const Tensor& pixels, double sigma) {
  requireImage(pixels);
  if (sigma <= 0.0) return pixels.clone();
  const int h = pixels.shape(0), w = pixels.shape(1);
  const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
  std::vector<double> kern(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kern[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += kern[i + radius];
  }
  for (double& v : kern) v /= sum;

  auto reflect = [](int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return std::clamp(i, 0, n - 1);
  };

  Tensor tmp({h, w}), out({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kern[i + radius] * pixels.at(y, reflect(x + i, w));
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kern[i + radius] * tmp.at(reflect(y + i, h), x);
      out.at(y, x) = acc;
    }
  return out;
}

namespace {

Tensor randomResizedCrop(const Tensor& pixels, Rng& rng) {
  const int h = pixels.shape(0), w = pixels.shape(1);
  for (int tries = 0; tries < 10; ++tries) {
    const double area = rng.uniform(0.4, 1.0) * h * w;
    const double aspect = std::exp(rng.uniform(std::log(3.0 / 4.0),
                                               std::log(4.0 / 3.0)));
    const int cw = static_cast<int>(std::round(std::sqrt(area * aspect)));
    const int ch = static_cast<int>(std::round(std::sqrt(area / aspect)));
    if (cw < 1 || ch < 1 || cw > w || ch > h) continue;
    const int x0 = static_cast<int>(rng.uniformInt(0, w - cw));
    const int y0 = static_cast<int>(rng.uniformInt(0, h - ch));
    Tensor crop({ch, cw});
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) crop.at(y, x) = pixels.at(y0 + y, x0 + x);
    return resizeTo(crop, h, w);
  }
  return pixels.clone();
}

Tensor intensityJitter(const Tensor& pixels, Rng& rng) {
  // grayscale stand-in for color jitter: brightness shift and contrast
  // stretch about the image mean, clamped back to [0,1]
  const double brightness = rng.uniform(-0.2, 0.2);
  const double contrast = rng.uniform(0.7, 1.3);
  double mean = 0.0;
  const std::size_t n = pixels.size();
  const double* src = pixels.data();
  for (std::size_t i = 0; i < n; ++i) mean += src[i];
  mean /= static_cast<double>(n);

  Tensor out = pixels.clone();
  double* d = out.data();
  for (std::size_t i = 0; i < n; ++i)
    d[i] = std::clamp(contrast * (d[i] - mean) + mean + brightness, 0.0, 1.0);
  return out;
}

}  // namespace

Tensor mocoView(const Tensor& pixels, MocoVariant variant, Rng& rng) {
  requireImage(pixels);
  if (variant != MocoVariant::v2) {
    return applyAugment(pixels, nullptr, mocoPolicy(variant), rng).first;
  }
  Tensor x = randomResizedCrop(pixels, rng);
  if (rng.bernoulli(0.8)) x = intensityJitter(x, rng);
  AugParams flipOnly;
  flipOnly.hflip = rng.bernoulli(0.5);
  if (flipOnly.hflip) x = warpWithParams(x, flipOnly, true, 0.0);
  if (rng.bernoulli(0.5)) x = gaussianBlur(x, rng.uniform(0.1, 2.0));
  return x;
}

}  // namespace cxr::data
