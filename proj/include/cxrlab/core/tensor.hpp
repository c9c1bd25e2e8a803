#pragma once

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <vector>

namespace cxr {

// Dense row-major tensor of doubles with shared storage.
// Copies are shallow; clone() makes a deep copy. Ops that write allocate
// fresh storage, so aliasing is only visible when explicitly intended
// (parameter nodes sharing their owner's buffer).
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, double fill = 0.0)
      : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (int d : shape_) {
      assert(d >= 0);
      n *= static_cast<std::size_t>(d);
    }
    data_ = std::make_shared<std::vector<double>>(n, fill);
  }

  Tensor(std::initializer_list<int> shape, double fill = 0.0)
      : Tensor(std::vector<int>(shape), fill) {}

  static Tensor zerosLike(const Tensor& other) { return Tensor(other.shape_); }

  static Tensor fromVector(const std::vector<double>& values) {
    Tensor t({static_cast<int>(values.size())});
    std::copy(values.begin(), values.end(), t.data());
    return t;
  }

  bool empty() const { return !data_ || data_->empty(); }
  int dim() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int shape(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }

  std::size_t size() const { return data_ ? data_->size() : 0; }

  double* data() { return data_ ? data_->data() : nullptr; }
  const double* data() const { return data_ ? data_->data() : nullptr; }

  double& operator[](std::size_t i) { return (*data_)[i]; }
  double operator[](std::size_t i) const { return (*data_)[i]; }

  double& at(int i) { return (*data_)[idx1(i)]; }
  double at(int i) const { return (*data_)[idx1(i)]; }
  double& at(int i, int j) { return (*data_)[idx2(i, j)]; }
  double at(int i, int j) const { return (*data_)[idx2(i, j)]; }
  double& at(int i, int j, int k) { return (*data_)[idx3(i, j, k)]; }
  double at(int i, int j, int k) const { return (*data_)[idx3(i, j, k)]; }
  double& at(int i, int j, int k, int l) { return (*data_)[idx4(i, j, k, l)]; }
  double at(int i, int j, int k, int l) const { return (*data_)[idx4(i, j, k, l)]; }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_ ? std::make_shared<std::vector<double>>(*data_) : nullptr;
    return t;
  }

  // Same storage, new shape. Element count must match.
  Tensor reshaped(std::vector<int> shape) const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    assert(n == size());
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  void fill(double v) {
    if (data_) std::fill(data_->begin(), data_->end(), v);
  }

  void zero() { fill(0.0); }

  bool sameShape(const Tensor& other) const { return shape_ == other.shape_; }

  double minValue() const;
  double maxValue() const;
  double sum() const;
  double mean() const { return size() ? sum() / static_cast<double>(size()) : 0.0; }
  bool allFinite() const;

 private:
  std::size_t idx1(int i) const {
    assert(dim() == 1 && i >= 0 && i < shape_[0]);
    return static_cast<std::size_t>(i);
  }
  std::size_t idx2(int i, int j) const {
    assert(dim() == 2 && i >= 0 && i < shape_[0] && j >= 0 && j < shape_[1]);
    return static_cast<std::size_t>(i) * shape_[1] + j;
  }
  std::size_t idx3(int i, int j, int k) const {
    assert(dim() == 3 && i >= 0 && i < shape_[0] && j >= 0 && j < shape_[1] &&
           k >= 0 && k < shape_[2]);
    return (static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k;
  }
  std::size_t idx4(int i, int j, int k, int l) const {
    assert(dim() == 4 && i >= 0 && i < shape_[0] && j >= 0 && j < shape_[1] &&
           k >= 0 && k < shape_[2] && l >= 0 && l < shape_[3]);
    return ((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) *
               shape_[3] +
           l;
  }

  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> data_;
};

}  // namespace cxr
