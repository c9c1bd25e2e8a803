#include "cxrlab/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cxr {

double Tensor::minValue() const {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < size(); ++i) m = std::min(m, (*data_)[i]);
  return m;
}

double Tensor::maxValue() const {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < size(); ++i) m = std::max(m, (*data_)[i]);
  return m;
}

double Tensor::sum() const {
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i) s += (*data_)[i];
  return s;
}

bool Tensor::allFinite() const {
  for (std::size_t i = 0; i < size(); ++i) {
    if (!std::isfinite((*data_)[i])) return false;
  }
  return true;
}

}  // namespace cxr
