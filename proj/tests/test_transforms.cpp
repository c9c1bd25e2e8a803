#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cxrlab/core/error.hpp"
#include "cxrlab/core/rng.hpp"
#include "cxrlab/data/transforms.hpp"
#include "support/oracles.hpp"

using namespace cxr;
using namespace cxr::data;

namespace {

Tensor fromValues(int h, int w, const std::vector<double>& v) {
  Tensor t({h, w});
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

Tensor randomQuantized(int h, int w, int levels, Rng& rng) {
  Tensor t({h, w});
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<double>(rng.uniformInt(0, levels - 1));
  return t;
}

double minOf(const Tensor& t) {
  return *std::min_element(t.data(), t.data() + t.size());
}
double maxOf(const Tensor& t) {
  return *std::max_element(t.data(), t.data() + t.size());
}

}  // namespace

TEST_CASE("winsorize spec examples") {
  SUBCASE("constant image is unchanged") {
    const Tensor t({5, 5}, 7.0);
    CHECK(oracle::bitwiseEqual(winsorize(t, 92.5), t));
  }
  SUBCASE("percentile 100 is the identity") {
    Rng rng(1);
    Tensor t({6, 7});
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data()[i] = rng.uniform(0, 255);
    CHECK(oracle::bitwiseEqual(winsorize(t, 100.0), t));
  }
  SUBCASE("values 1..100 at percentile 90 clamp to the nearest-rank values") {
    std::vector<double> v(100);
    for (int i = 0; i < 100; ++i) v[i] = i + 1;
    const Tensor out = winsorize(fromValues(10, 10, v), 90.0);
    CHECK(maxOf(out) == 90.0);  // rank ceil(0.9*100) = 90 -> value 90
    CHECK(minOf(out) == 10.0);  // rank ceil(0.1*100) = 10 -> value 10
  }
  SUBCASE("upper-only mode leaves the dark tail alone") {
    std::vector<double> v(100);
    for (int i = 0; i < 100; ++i) v[i] = i + 1;
    const Tensor out = winsorize(fromValues(10, 10, v), 90.0, true);
    CHECK(maxOf(out) == 90.0);
    CHECK(minOf(out) == 1.0);
  }
  SUBCASE("percentile outside (50,100] is rejected") {
    const Tensor t({4, 4}, 1.0);
    CHECK_THROWS_AS(winsorize(t, 50.0), ValidationError);
    CHECK_THROWS_AS(winsorize(t, 101.0), ValidationError);
  }
}

TEST_CASE("winsorize matches the sorting oracle on random arrays") {
  Rng rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = static_cast<int>(rng.uniformInt(2, 12));
    const int w = static_cast<int>(rng.uniformInt(2, 12));
    const double p = rng.uniform(51.0, 100.0);
    Tensor t({h, w});
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data()[i] = std::round(rng.uniform(-50, 300));

    const std::size_t n = t.size();
    std::vector<double> sorted(t.data(), t.data() + n);
    std::sort(sorted.begin(), sorted.end());
    auto rankValue = [&](double pct) {
      const double r = std::ceil(pct / 100.0 * static_cast<double>(n));
      const auto idx = static_cast<std::size_t>(
          std::clamp<double>(r, 1.0, static_cast<double>(n)));
      return sorted[idx - 1];
    };
    const double hi = rankValue(p), lo = rankValue(100.0 - p);

    const Tensor out = winsorize(t, p);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(out.data()[i] == std::clamp(t.data()[i], lo, hi));
    CHECK(maxOf(out) <= maxOf(t));
    CHECK(minOf(out) >= minOf(t));
    CHECK(out.shape(0) == h);
    CHECK(out.shape(1) == w);
  }
}

TEST_CASE("histogram equalization spec examples") {
  SUBCASE("a full uniform 8-bit histogram is a fixed point") {
    std::vector<double> v(256);
    for (int i = 0; i < 256; ++i) v[i] = i;
    const Tensor t = fromValues(16, 16, v);
    CHECK(oracle::bitwiseEqual(histogramEqualize(t), t));
  }
  SUBCASE("two-level image under both conventions") {
    std::vector<double> v(16, 0.0);
    for (int i = 8; i < 16; ++i) v[i] = 255.0;
    const Tensor t = fromValues(4, 4, v);
    const Tensor offset = histogramEqualize(t);
    CHECK(offset.data()[0] == 0.0);
    CHECK(offset.data()[15] == 255.0);
    const Tensor plain = histogramEqualize(t, true);
    CHECK(plain.data()[0] == 128.0);  // round(255 * 0.5)
    CHECK(plain.data()[15] == 255.0);
  }
  SUBCASE("constant image maps to zero under the offset convention") {
    const Tensor t({4, 4}, 200.0);
    const Tensor out = histogramEqualize(t);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == 0.0);
  }
  SUBCASE("non-integer pixels are rejected") {
    const Tensor t({2, 2}, 1.5);
    CHECK_THROWS_AS(histogramEqualize(t), ValidationError);
  }
}

TEST_CASE("histogram equalization matches the CDF oracle") {
  Rng rng(901);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor t = randomQuantized(9, 11, 64, rng);
    const std::size_t n = t.size();

    std::vector<double> counts(64, 0.0);
    for (std::size_t i = 0; i < n; ++i) counts[static_cast<int>(t.data()[i])]++;
    std::vector<double> cdf(64, 0.0);
    double run = 0.0;
    for (int v = 0; v < 64; ++v) {
      run += counts[v];
      cdf[v] = run;
    }
    double cdfMin = 0.0;
    for (int v = 0; v < 64; ++v)
      if (counts[v] > 0) {
        cdfMin = cdf[v];
        break;
      }

    const Tensor offset = histogramEqualize(t);
    const Tensor plain = histogramEqualize(t, true);
    for (std::size_t i = 0; i < n; ++i) {
      const double c = cdf[static_cast<int>(t.data()[i])];
      CHECK(offset.data()[i] ==
            std::round(255.0 * (c - cdfMin) / (static_cast<double>(n) - cdfMin)));
      CHECK(plain.data()[i] == std::round(255.0 * c / static_cast<double>(n)));
    }
    CHECK(minOf(offset) == 0.0);
  }
}

TEST_CASE("normalize01 maps to exactly [0,1] and is idempotent") {
  const Tensor t = fromValues(1, 3, {0.0, 128.0, 255.0});
  const Tensor out = normalize01(t);
  CHECK(out.data()[0] == 0.0);
  CHECK(out.data()[1] == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
  CHECK(out.data()[2] == 1.0);

  const Tensor constant({3, 3}, 42.0);
  const Tensor zeros = normalize01(constant);
  for (std::size_t i = 0; i < zeros.size(); ++i) CHECK(zeros.data()[i] == 0.0);

  Rng rng(8);
  Tensor r({7, 5});
  for (std::size_t i = 0; i < r.size(); ++i)
    r.data()[i] = rng.uniform(-3.0, 900.0);
  const Tensor once = normalize01(r);
  CHECK(minOf(once) == 0.0);
  CHECK(maxOf(once) == 1.0);
  CHECK(oracle::bitwiseEqual(normalize01(once), once));
}

TEST_CASE("resize spec examples") {
  Rng rng(3);
  Tensor t({5, 6});
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform01();

  SUBCASE("identity size returns the input unchanged") {
    CHECK(oracle::bitwiseEqual(resizeTo(t, 5, 6), t));
  }
  SUBCASE("constant image stays constant") {
    const Tensor c({4, 4}, 3.25);
    const Tensor out = resizeTo(c, 9, 7);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out.data()[i] == doctest::Approx(3.25).epsilon(1e-12));
  }
  SUBCASE("checkerboard upsample stays in range and roughly mean-preserving") {
    const Tensor board = fromValues(2, 2, {0.0, 1.0, 1.0, 0.0});
    const Tensor out = resizeTo(board, 4, 4);
    double mean = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out.data()[i] >= 0.0);
      CHECK(out.data()[i] <= 1.0);
      mean += out.data()[i];
    }
    CHECK(std::abs(mean / 16.0 - 0.5) <= 0.25);
  }
}

TEST_CASE("full preprocheadline recipe produces a [0,1] image of target size") {
  Rng rng(44);
  Tensor t({37, 41});
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<double>(rng.uniformInt(0, 255));
  PreprocConfig cfg;
  cfg.winsorPercentile = 92.5;
  cfg.targetH = 32;
  cfg.targetW = 48;
  const Tensor out = preprocess(t, cfg);
  CHECK(out.shape(0) == 32);
  CHECK(out.shape(1) == 48);
  CHECK(minOf(out) == 0.0);
  CHECK(maxOf(out) == 1.0);

  PreprocConfig bad;
  bad.winsorPercentile = 40.0;
  CHECK_THROWS_AS(preprocess(t, bad), ValidationError);
}

TEST_CASE("null augmentation policy is the identity on image and mask") {
  Rng imgRng(10);
  Tensor img({16, 16});
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = imgRng.uniform01();
  Tensor mask({16, 16});
  mask.at(4, 7) = 1.0;

  AugPolicy null;
  Rng rng(0);
  auto [outImg, outMask] = applyAugment(img, &mask, null, rng);
  CHECK(oracle::bitwiseEqual(outImg, img));
  CHECK(oracle::bitwiseEqual(outMask, mask));
}

TEST_CASE("guaranteed horizontal flip reverses columns and is an involution") {
  Rng imgRng(11);
  Tensor img({8, 9});
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = imgRng.uniform01();

  AugPolicy flip;
  flip.hflipProb = 1.0;
  Rng rng1(0);
  auto [once, unused] = applyAugment(img, nullptr, flip, rng1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 9; ++x) CHECK(once.at(y, x) == img.at(y, 8 - x));
  Rng rng2(0);
  auto [twice, unused2] = applyAugment(once, nullptr, flip, rng2);
  CHECK(oracle::bitwiseEqual(twice, img));
}

TEST_CASE("pure rotation moves a set pixel per the rotation-matrix oracle") {
  Tensor mask({64, 64});
  const int srcRow = 10, srcCol = 20;
  mask.at(srcRow, srcCol) = 1.0;

  AugParams params;
  params.rotationDeg = 10.0;
  const Tensor out = warpWithParams(mask, params, true, 0.0);

  const double cx = (64 - 1) / 2.0, cy = (64 - 1) / 2.0;
  const double theta = 10.0 * 3.14159265358979323846 / 180.0;
  const double ex =
      cx + std::cos(theta) * (srcCol - cx) - std::sin(theta) * (srcRow - cy);
  const double ey =
      cy + std::sin(theta) * (srcCol - cx) + std::cos(theta) * (srcRow - cy);

  int found = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (out.at(y, x) == 1.0) {
        ++found;
        CHECK(std::abs(x - ex) <= 1.0);
        CHECK(std::abs(y - ey) <= 1.0);
      }
  CHECK(found >= 1);
}

TEST_CASE("nearest-neighbor warps keep masks binary under any policy draw") {
  Tensor mask({20, 20});
  for (int y = 6; y < 14; ++y)
    for (int x = 3; x < 9; ++x) mask.at(y, x) = 1.0;
  AugPolicy policy;
  policy.rotationDeg = 25.0;
  policy.hflipProb = 0.5;
  policy.scaleLo = 0.9;
  policy.scaleHi = 1.3;
  policy.shearLo = 0.0;
  policy.shearHi = 0.15;
  policy.translateFrac = 0.2;
  Rng imgRng(12);
  Tensor img({20, 20});
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = imgRng.uniform01();

  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(trial);
    auto [outImg, outMask] = applyAugment(img, &mask, policy, rng);
    CHECK(outImg.shape(0) == 20);
    CHECK(outMask.shape(1) == 20);
    for (std::size_t i = 0; i < outMask.size(); ++i) {
      const double v = outMask.data()[i];
      CHECK((v == 0.0 || v == 1.0));
    }
  }
}

TEST_CASE("augmenting a pair applies one parameter draw to both members") {
  Rng imgRng(13);
  Tensor img({12, 12});
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = imgRng.uniform01();
  Tensor mask({12, 12});
  mask.at(5, 5) = 1.0;
  AugPolicy policy;
  policy.rotationDeg = 15.0;
  policy.hflipProb = 0.5;
  policy.scaleLo = 1.0;
  policy.scaleHi = 1.2;

  Rng rngA(42);
  auto [outImg, outMask] = applyAugment(img, &mask, policy, rngA);
  Rng rngB(42);
  const AugParams params = sampleAugParams(policy, rngB);
  CHECK(oracle::bitwiseEqual(outImg, warpWithParams(img, params, false, 0.0)));
  CHECK(oracle::bitwiseEqual(outMask, warpWithParams(mask, params, true, 0.0)));
}

TEST_CASE("policy validation rejects inverted or out-of-range settings") {
  AugPolicy p;
  p.scaleLo = 1.3;
  p.scaleHi = 1.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  AugPolicy q;
  q.hflipProb = 1.5;
  CHECK_THROWS_AS(q.validate(), ValidationError);
  AugPolicy r;
  r.shearLo = 0.2;
  r.shearHi = 0.1;
  CHECK_THROWS_AS(r.validate(), ValidationError);
}

TEST_CASE("contrastive recipe policies match their definitions") {
  const AugPolicy base = mocoPolicy(MocoVariant::cxr);
  CHECK(base.rotationDeg == 10.0);
  CHECK(base.hflipProb == 0.5);
  CHECK(base.translateFrac == 0.0);
  CHECK(base.scaleLo == base.scaleHi);

  const AugPolicy mod = mocoPolicy(MocoVariant::cxrModified);
  CHECK(mod.rotationDeg == 20.0);
  CHECK(mod.translateFrac == 0.2);
  CHECK(mod.scaleLo == 1.0);
  CHECK(mod.scaleHi == 1.2);

  CHECK_THROWS_AS(mocoPolicy(MocoVariant::v2), ValidationError);

  for (const auto v :
       {MocoVariant::cxr, MocoVariant::cxrModified, MocoVariant::v2})
    CHECK((mocoVariantFromString(toString(v)) == v));
  CHECK_THROWS_AS(mocoVariantFromString("v3"), ConfigError);
}

TEST_CASE("modified recipe draws stay inside the declared ranges") {
  const AugPolicy mod = mocoPolicy(MocoVariant::cxrModified);
  Rng rng(555);
  for (int i = 0; i < 10000; ++i) {
    const AugParams p = sampleAugParams(mod, rng);
    CHECK(p.scale >= 1.0);
    CHECK(p.scale <= 1.2);
    CHECK(std::abs(p.rotationDeg) <= 20.0);
    CHECK(std::abs(p.translateFrac) <= 0.2);
  }
}

TEST_CASE("base recipe degenerates to the identity when draws are zeroed") {
  AugPolicy frozen = mocoPolicy(MocoVariant::cxr);
  frozen.rotationDeg = 0.0;
  frozen.hflipProb = 0.0;
  Rng imgRng(14);
  Tensor img({10, 10});
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = imgRng.uniform01();
  Rng rng(9);
  auto [view, unused] = applyAugment(img, nullptr, frozen, rng);
  CHECK(oracle::bitwiseEqual(view, img));
}

TEST_CASE("two-view sampling is deterministic and generically distinct") {
  Rng imgRng(15);
  Tensor img({24, 24});
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = imgRng.uniform01();

  for (const auto v :
       {MocoVariant::cxr, MocoVariant::cxrModified, MocoVariant::v2}) {
    Rng q1(100), q2(100), k1(200);
    const Tensor viewA = mocoView(img, v, q1);
    const Tensor viewB = mocoView(img, v, q2);
    const Tensor viewK = mocoView(img, v, k1);
    CHECK(viewA.shape(0) == 24);
    CHECK(viewA.shape(1) == 24);
    CHECK(oracle::bitwiseEqual(viewA, viewB));
    CHECK_FALSE(oracle::bitwiseEqual(viewA, viewK));
  }
}

TEST_CASE("gaussian blur preserves constants and total mass") {
  const Tensor c({6, 6}, 2.0);
  const Tensor blurred = gaussianBlur(c, 1.3);
  for (std::size_t i = 0; i < blurred.size(); ++i)
    CHECK(blurred.data()[i] == doctest::Approx(2.0).epsilon(1e-12));

  Tensor impulse({15, 15});
  impulse.at(7, 7) = 1.0;
  const Tensor resp = gaussianBlur(impulse, 1.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < resp.size(); ++i) mass += resp.data()[i];
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(resp.at(7, 5) == doctest::Approx(resp.at(7, 9)).epsilon(1e-12));
  CHECK(resp.at(5, 7) == doctest::Approx(resp.at(9, 7)).epsilon(1e-12));
  CHECK(resp.at(7, 7) > resp.at(7, 6));
}
