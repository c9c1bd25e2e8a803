#pragma once

#include <string>
#include <vector>

#include "cxrlab/nn/param.hpp"

namespace cxr::nn {

/// Adam with the usual bias-corrected first and second moment estimates.
/// Holds raw pointers into a ParamStore; the store must outlive the optimizer.
class Adam {
 public:
  Adam(std::vector<Param*> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void setLr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int stepCount() const { return step_; }

  /// Applies one update from the accumulated gradients, then zeroes them.
  void step();

  std::vector<std::string> paramNames() const;

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  int step_ = 0;
};

}  // namespace cxr::nn
