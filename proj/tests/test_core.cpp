#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cxrlab/core/error.hpp"
#include "cxrlab/core/image_io.hpp"
#include "cxrlab/core/rng.hpp"
#include "cxrlab/core/tensor.hpp"
#include "cxrlab/nn/adam.hpp"
#include "cxrlab/nn/checkpoint.hpp"
#include "cxrlab/nn/param.hpp"

using cxr::Tensor;

namespace fs = std::filesystem;

namespace {

fs::path tempDir() {
  auto p = fs::temp_directory_path() / "cxrlab_core_test";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("tensors share storage on copy and separate on clone") {
  Tensor a({2, 3});
  a.fill(1.0);
  Tensor b = a;
  b[0] = 9.0;
  CHECK(a[0] == 9.0);
  Tensor c = a.clone();
  c[1] = 7.0;
  CHECK(a[1] == 1.0);
}

TEST_CASE("reshape keeps storage and checks element count") {
  Tensor a({2, 6});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<double>(i);
  Tensor b = a.reshaped({3, 4});
  CHECK(b.at(2, 3) == 11.0);
  b.at(0, 0) = -1.0;
  CHECK(a.at(0, 0) == -1.0);
}

TEST_CASE("identical seeds give identical streams, different seeds diverge") {
  cxr::Rng a(42), b(42), c(43);
  bool allEqual = true, anyDiffer = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform01(), y = b.uniform01(), z = c.uniform01();
    allEqual = allEqual && (x == y);
    anyDiffer = anyDiffer || (x != z);
  }
  CHECK(allEqual);
  CHECK(anyDiffer);
}

TEST_CASE("forked streams are independent of draw order on the parent") {
  cxr::Rng a(7);
  cxr::Rng fork1 = a.fork(3);
  for (int i = 0; i < 50; ++i) a.uniform01();
  cxr::Rng b(7);
  cxr::Rng fork2 = b.fork(3);
  for (int i = 0; i < 20; ++i) {
    CHECK(fork1.u64() == fork2.u64());
  }
}

TEST_CASE("uniformInt covers the inclusive range and stays inside it") {
  cxr::Rng rng(101);
  bool sawLo = false, sawHi = false;
  for (int i = 0; i < 2000; ++i) {
    const int v = rng.uniformInt(17, 32);
    CHECK(v >= 17);
    CHECK(v <= 32);
    sawLo = sawLo || v == 17;
    sawHi = sawHi || v == 32;
  }
  CHECK(sawLo);
  CHECK(sawHi);
}

TEST_CASE("normal draws have roughly the requested moments") {
  cxr::Rng rng(5);
  double sum = 0.0, sumSq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal(2.0, 3.0);
    sum += v;
    sumSq += v * v;
  }
  const double mean = sum / n;
  const double var = sumSq / n - mean * mean;
  CHECK(mean == doctest::Approx(2.0).epsilon(0.05));
  CHECK(std::sqrt(var) == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("8-bit png round trip preserves pixel values") {
  auto dir = tempDir();
  const auto path = (dir / "gray8.png").string();
  Tensor img({5, 7});
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<double>((i * 37) % 256);
  cxr::writeGrayPng8(path, img);
  CHECK(cxr::pngBitDepth(path) == 8);
  Tensor back = cxr::readGrayPng(path);
  REQUIRE(back.shape(0) == 5);
  REQUIRE(back.shape(1) == 7);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == img[i]);
}

TEST_CASE("16-bit png round trip preserves pixel values") {
  auto dir = tempDir();
  const auto path = (dir / "gray16.png").string();
  Tensor img({4, 4});
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<double>((i * 4099) % 65536);
  cxr::writeGrayPng16(path, img);
  CHECK(cxr::pngBitDepth(path) == 16);
  Tensor back = cxr::readGrayPng(path);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == img[i]);
}

TEST_CASE("reading a missing file reports an io error") {
  CHECK_THROWS_AS(cxr::readGrayPng("/nonexistent/nope.png"), cxr::IoError);
}

TEST_CASE("reading a non-png file reports a parse error") {
  auto dir = tempDir();
  const auto path = (dir / "not_a_png.png").string();
  std::ofstream(path) << "plainly not a png";
  CHECK_THROWS_AS(cxr::readGrayPng(path), cxr::ParseError);
}

TEST_CASE("param store rejects duplicate names and keeps insertion order") {
  cxr::nn::ParamStore store;
  Tensor t({2});
  store.add("a", t.clone());
  store.add("b", t.clone());
  CHECK_THROWS_AS(store.add("a", t.clone()), cxr::ValidationError);
  auto all = store.all();
  REQUIRE(all.size() == 2);
  CHECK(all[0]->name == "a");
  CHECK(all[1]->name == "b");
  CHECK(store.totalElements() == 4);
}

TEST_CASE("adam minimizes a separable quadratic") {
  cxr::nn::ParamStore store;
  Tensor x0 = Tensor::fromVector({5.0, -3.0, 2.0});
  store.add("x", x0.clone());
  cxr::nn::Adam opt(store.trainable(), 0.05);
  for (int step = 0; step < 400; ++step) {
    cxr::nn::Param& p = store.at("x");
    for (std::size_t i = 0; i < 3; ++i) p.grad[i] = 2.0 * p.value[i];
    opt.step();
  }
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::abs(store.at("x").value[i]) < 1e-3);
  CHECK(opt.stepCount() == 400);
  CHECK(opt.paramNames() == std::vector<std::string>{"x"});
}

TEST_CASE("adam first step moves by roughly lr regardless of gradient scale") {
  cxr::nn::ParamStore store;
  store.add("x", Tensor::fromVector({1.0}));
  cxr::nn::Adam opt(store.trainable(), 0.1);
  store.at("x").grad[0] = 1e4;
  opt.step();
  CHECK(store.at("x").value[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-4));
}

TEST_CASE("checkpoint save, load, save is byte identical") {
  auto dir = tempDir();
  const auto p1 = (dir / "ck1.bin").string();
  const auto p2 = (dir / "ck2.bin").string();

  cxr::nn::ParamStore store;
  cxr::Rng rng(9);
  Tensor w({4, 3});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, 1.0);
  store.add("layer.weight", w);
  store.add("layer.bias", Tensor::fromVector({0.25, -0.5, 1e-17}));

  nlohmann::json meta{{"backbone", "tiny_cnn"}, {"epoch", 3}};
  cxr::nn::saveCheckpoint(p1, store, meta);

  cxr::nn::ParamStore store2;
  store2.add("layer.weight", Tensor({4, 3}));
  store2.add("layer.bias", Tensor({3}));
  auto meta2 = cxr::nn::loadCheckpoint(p1, store2);
  CHECK(meta2["backbone"] == "tiny_cnn");
  cxr::nn::saveCheckpoint(p2, store2, meta2);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)),
                 std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK_FALSE(s1.empty());
}

TEST_CASE("strict load rejects missing params and shape mismatches") {
  auto dir = tempDir();
  const auto path = (dir / "ck_strict.bin").string();
  cxr::nn::ParamStore store;
  store.add("w", Tensor({2, 2}));
  cxr::nn::saveCheckpoint(path, store, nlohmann::json::object());

  cxr::nn::ParamStore extra;
  extra.add("w", Tensor({2, 2}));
  extra.add("v", Tensor({1}));
  CHECK_THROWS_AS(cxr::nn::loadCheckpoint(path, extra), cxr::CheckpointError);

  cxr::nn::ParamStore wrongShape;
  wrongShape.add("w", Tensor({3, 2}));
  CHECK_THROWS_AS(cxr::nn::loadCheckpoint(path, wrongShape),
                  cxr::CheckpointError);
}

TEST_CASE("weight transfer copies matches and reports everything else") {
  auto dir = tempDir();
  const auto path = (dir / "ck_transfer.bin").string();
  cxr::nn::ParamStore src;
  Tensor a({2});
  a.fill(3.5);
  src.add("backbone.w", a);
  src.add("head.w", Tensor::fromVector({1.0, 2.0, 3.0}));
  cxr::nn::saveCheckpoint(path, src, nlohmann::json::object());

  cxr::nn::ParamStore dst;
  dst.add("backbone.w", Tensor({2}));
  dst.add("head.w", Tensor({4}));     // same name, different shape
  dst.add("head.bias", Tensor({4}));  // absent from the file
  auto report = cxr::nn::transferWeights(path, dst);
  CHECK(report.loaded == std::vector<std::string>{"backbone.w"});
  CHECK(report.shapeMismatch == std::vector<std::string>{"head.w"});
  CHECK(report.missingInFile == std::vector<std::string>{"head.bias"});
  CHECK(report.unusedInFile.empty());  // mismatch already reported above
  CHECK(dst.at("backbone.w").value[0] == 3.5);
}
