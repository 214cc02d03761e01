#pragma once

#include <cmath>
#include <map>
#include <string>

#include "mbtf/nn/autograd.hpp"
#include "mbtf/nn/weights.hpp"
#include "mbtf/rng.hpp"

namespace mbtf::nn {

// Trainable parameters and non-trainable buffers (batch-norm running
// statistics) keyed by layer path. std::map keeps iteration order stable,
// which fixes the optimizer update order and the serialization order.
template <typename T>
class ParamStore {
 public:
  Var<T> add(const std::string& path, Tensor<T> init) {
    if (params_.count(path) || buffers_.count(path)) throw ConfigError("duplicate parameter path '" + path + "'");
    auto v = make_leaf(std::move(init), true);
    params_.emplace(path, v);
    return v;
  }

  Tensor<T>& add_buffer(const std::string& path, Tensor<T> init) {
    if (params_.count(path) || buffers_.count(path)) throw ConfigError("duplicate buffer path '" + path + "'");
    return buffers_.emplace(path, std::move(init)).first->second;
  }

  const Var<T>& param(const std::string& path) const {
    auto it = params_.find(path);
    if (it == params_.end()) throw ValidationError("unknown parameter '" + path + "'");
    return it->second;
  }
  Tensor<T>& buffer(const std::string& path) {
    auto it = buffers_.find(path);
    if (it == buffers_.end()) throw ValidationError("unknown buffer '" + path + "'");
    return it->second;
  }

  const std::map<std::string, Var<T>>& params() const { return params_; }
  const std::map<std::string, Tensor<T>>& buffers() const { return buffers_; }

  void zero_grad() {
    for (auto& [_, v] : params_) v->grad = Tensor<T>();
  }

  // Freezes (or unfreezes) every parameter whose path starts with prefix.
  void set_trainable(const std::string& prefix, bool trainable) {
    for (auto& [path, v] : params_) {
      if (path.rfind(prefix, 0) == 0) v->requires_grad = trainable;
    }
  }

  std::size_t parameter_count(const std::string& prefix = "") const {
    std::size_t n = 0;
    for (const auto& [path, v] : params_) {
      if (path.rfind(prefix, 0) == 0) n += v->value.size();
    }
    return n;
  }

  std::map<std::string, Tensor<float>> export_tensors() const {
    std::map<std::string, Tensor<float>> out;
    for (const auto& [path, v] : params_) out.emplace(path, v->value.template cast<float>());
    for (const auto& [path, b] : buffers_) out.emplace(path, b.template cast<float>());
    return out;
  }

  // Every registered path must be present with a matching shape; the first
  // mismatch is reported. Extra tensors in the container are ignored only
  // when `prefix` restricts the load.
  void load(const ModelWeights& w, const std::string& prefix = "") {
    auto check = [&](const std::string& path, const Shape& shape) -> const Tensor<float>& {
      if (!w.contains(path)) throw ValidationError("topology mismatch: missing tensor '" + path + "'");
      const auto& t = w.at(path);
      if (t.shape() != shape) {
        throw ValidationError("topology mismatch at '" + path + "': expected " + shape_str(shape) + ", got " +
                              shape_str(t.shape()));
      }
      return t;
    };
    for (auto& [path, v] : params_) {
      if (path.rfind(prefix, 0) != 0) continue;
      v->value = check(path, v->value.shape()).template cast<T>();
    }
    for (auto& [path, b] : buffers_) {
      if (path.rfind(prefix, 0) != 0) continue;
      b = check(path, b.shape()).template cast<T>();
    }
  }

  // Reset every parameter and buffer to zero (identity-path tests).
  void zero_all(const std::string& prefix = "") {
    for (auto& [path, v] : params_) {
      if (path.rfind(prefix, 0) == 0) v->value.fill(T(0));
    }
  }

 private:
  std::map<std::string, Var<T>> params_;
  std::map<std::string, Tensor<T>> buffers_;
};

// He-uniform initialization scaled by fan-in.
template <typename T>
Tensor<T> init_uniform(Shape shape, int fan_in, Rng& rng, double gain = 1.0) {
  Tensor<T> t(std::move(shape));
  const double bound = gain * std::sqrt(3.0 / std::max(1, fan_in));
  for (auto& e : t.vec()) e = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace mbtf::nn
