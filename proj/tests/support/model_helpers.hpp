#pragma once

#include <string>

#include "mbtf/nn/params.hpp"
#include "mbtf/rng.hpp"

namespace helpers {

template <typename T>
mbtf::nn::Tensor<T> random_input(mbtf::nn::Shape shape, std::uint64_t seed, double scale = 1.0) {
  mbtf::Rng rng(seed);
  mbtf::nn::Tensor<T> t(std::move(shape));
  for (auto& e : t.vec()) e = static_cast<T>(scale * rng.uniform(-1.0, 1.0));
  return t;
}

// Random running statistics so inference-mode batch norm is not an identity.
template <typename T>
void randomize_buffers(mbtf::nn::ParamStore<T>& store, std::uint64_t seed) {
  mbtf::Rng rng(seed);
  for (const auto& [path, _] : store.buffers()) {
    auto& b = store.buffer(path);
    const bool var = path.find("running_var") != std::string::npos;
    for (auto& e : b.vec()) e = static_cast<T>(var ? rng.uniform(0.5, 1.5) : rng.uniform(-0.1, 0.1));
  }
}

template <typename T>
void randomize_params(mbtf::nn::ParamStore<T>& store, const std::string& prefix, std::uint64_t seed,
                      double scale = 0.1) {
  mbtf::Rng rng(seed);
  for (const auto& [path, v] : store.params()) {
    if (path.rfind(prefix, 0) != 0) continue;
    for (auto& e : v->value.vec()) e = static_cast<T>(scale * rng.uniform(-1.0, 1.0));
  }
}

}  // namespace helpers
