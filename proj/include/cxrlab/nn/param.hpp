#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cxrlab/core/error.hpp"
#include "cxrlab/core/tensor.hpp"

namespace cxr::nn {

// Named model state. `trainable` distinguishes optimizable weights from
// buffers (batch-norm running statistics) that are saved in checkpoints but
// never receive gradients.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

// Insertion-ordered parameter registry; iteration order is the canonical
// order used by optimizers, momentum updates, and checkpoint files.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor init, bool trainable = true) {
    if (index_.count(name))
      throw ValidationError("duplicate parameter name: " + name);
    auto p = std::make_unique<Param>();
    p->name = name;
    p->grad = Tensor(init.shape());
    p->value = std::move(init);
    p->trainable = trainable;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Param* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  const Param* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  Param& at(const std::string& name) {
    Param* p = find(name);
    if (!p) throw ValidationError("unknown parameter: " + name);
    return *p;
  }

  std::size_t count() const { return params_.size(); }

  std::vector<Param*> all() {
    std::vector<Param*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  std::vector<const Param*> all() const {
    std::vector<const Param*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  std::vector<Param*> trainable() {
    std::vector<Param*> out;
    for (auto& p : params_)
      if (p->trainable) out.push_back(p.get());
    return out;
  }

  void zeroGrads() {
    for (auto& p : params_) p->grad.zero();
  }

  std::size_t totalElements() const {
    std::size_t n = 0;
    for (auto& p : params_) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace cxr::nn
