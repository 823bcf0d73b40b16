#pragma once

// AdamW with decoupled weight decay. Decay multiplies parameters directly and
// is independent of the moment estimates, so a zero gradient with zero decay
// leaves parameters bit-identical (from a fresh state).

#include <cmath>
#include <vector>

#include "tcl/common.hpp"
#include "tcl/tensor.hpp"

namespace tcl::ad {

template <class T>
class AdamW {
 public:
  struct Params {
    T lr = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(0);
  };

  AdamW(std::vector<Tensor<T>> params, Params cfg) : cfg_(cfg), params_(std::move(params)) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].size(), T(0));
      v_[i].assign(params_[i].size(), T(0));
    }
  }

  // One update from the gradients currently held in the parameter buffers.
  // Gradients are not cleared here; call zero_grad() when accumulation for
  // the step is finished being consumed.
  void step() {
    ++t_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& p = params_[i];
      const T* g = p.grad_data();
      T* w = p.data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      for (size_t j = 0; j < p.size(); ++j) {
        const T gj = g ? g[j] : T(0);
        if (cfg_.weight_decay != T(0)) w[j] -= cfg_.lr * cfg_.weight_decay * w[j];
        m[j] = cfg_.beta1 * m[j] + (T(1) - cfg_.beta1) * gj;
        v[j] = cfg_.beta2 * v[j] + (T(1) - cfg_.beta2) * gj * gj;
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  long step_count() const { return t_; }
  const Params& config() const { return cfg_; }

 private:
  Params cfg_;
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  long t_ = 0;
};

}  // namespace tcl::ad
