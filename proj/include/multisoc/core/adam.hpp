#pragma once

#include "multisoc/core/params.hpp"

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace multisoc {

template <typename S>
struct AdamConfig {
  S lr = S(4e-5);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
};

// Standard Adam with bias correction. step() consumes and zeroes the gradient
// buffers of the ParamSet; moments are keyed by parameter name so they can be
// checkpointed alongside the weights.
template <typename S>
class Adam {
 public:
  explicit Adam(AdamConfig<S> cfg = {}) : cfg_(cfg) {}

  AdamConfig<S>& config() { return cfg_; }
  int64_t step_count() const { return step_count_; }
  void set_step_count(int64_t n) { step_count_ = n; }

  // parameters whose name starts with prefix use this lr instead of cfg.lr
  void set_prefix_lr(const std::string& prefix, S lr) {
    prefix_lr_.emplace_back(prefix, lr);
  }

  void step(ParamSet<S>& params) {
    ++step_count_;
    const S bc1 = S(1) - std::pow(cfg_.beta1, static_cast<S>(step_count_));
    const S bc2 = S(1) - std::pow(cfg_.beta2, static_cast<S>(step_count_));
    for (auto& [name, e] : params) {
      if (!e.grad.allFinite()) {
        throw NumericError("Adam: non-finite gradient for parameter " + name);
      }
      Moments& mo = moments_[name];
      if (mo.m.size() == 0) {
        mo.m.setZero(e.value.rows(), e.value.cols());
        mo.v.setZero(e.value.rows(), e.value.cols());
      }
      mo.m = cfg_.beta1 * mo.m + (S(1) - cfg_.beta1) * e.grad;
      mo.v = (cfg_.beta2 * mo.v.array() + (S(1) - cfg_.beta2) * e.grad.array().square()).matrix();
      S lr = cfg_.lr;
      for (const auto& [prefix, value] : prefix_lr_) {
        if (name.rfind(prefix, 0) == 0) lr = value;
      }
      e.value.array() -= lr * (mo.m.array() / bc1) / ((mo.v.array() / bc2).sqrt() + cfg_.eps);
      e.grad.setZero();
    }
  }

  bool has_moments(const std::string& name) const { return moments_.count(name) != 0; }
  Matrix<S>& first_moment(const std::string& name) { return moments_[name].m; }
  Matrix<S>& second_moment(const std::string& name) { return moments_[name].v; }

 private:
  struct Moments {
    Matrix<S> m, v;
  };
  AdamConfig<S> cfg_;
  std::map<std::string, Moments> moments_;
  std::vector<std::pair<std::string, S>> prefix_lr_;
  int64_t step_count_ = 0;
};

}  // namespace multisoc
