#pragma once

#include <cmath>
#include <map>
#include <string>

#include "mbtf/nn/params.hpp"

namespace mbtf::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamMoments {
  Tensor<T> m;
  Tensor<T> v;
  long step = 0;
};

// One bias-corrected Adam update of `param` in place.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamMoments<T>& st, double lr, const AdamConfig& cfg) {
  if (st.m.shape() != param.shape()) {
    st.m = Tensor<T>(param.shape());
    st.v = Tensor<T>(param.shape());
    st.step = 0;
  }
  require_shape(grad, param.shape(), "adam gradient");
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double gi = grad[i];
    const double m = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * gi;
    const double v = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * gi * gi;
    st.m[i] = static_cast<T>(m);
    st.v[i] = static_cast<T>(v);
    param[i] -= static_cast<T>(lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps));
  }
}

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Updates every trainable parameter that received a gradient.
  void step(ParamStore<T>& store, double lr) {
    for (const auto& [path, p] : store.params()) {
      if (!p->requires_grad || p->grad.empty()) continue;
      adam_step(p->value, p->grad, state_[path], lr, cfg_);
    }
  }

  const std::map<std::string, AdamMoments<T>>& state() const { return state_; }
  std::map<std::string, AdamMoments<T>>& state() { return state_; }

 private:
  AdamConfig cfg_;
  std::map<std::string, AdamMoments<T>> state_;
};

}  // namespace mbtf::nn
