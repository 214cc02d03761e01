#pragma once

#include <string>

#include "mbtf/nn/ops.hpp"
#include "mbtf/nn/params.hpp"

namespace mbtf::nn {

enum class LayerKind { conv2d, conv_transpose2d, batch_norm, prelu, sigmoid, gru, linear };

const char* to_string(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::conv2d;
  int kf = 1, kt = 1;
  int sf = 1, st = 1;
  int df = 1, dt = 1;
  int c_in = 1, c_out = 1;
  int groups = 1;
  bool causal = false;  // affects time-axis padding only
  int hidden = 0;       // gru
  bool bias = true;

  void validate() const;
  // Geometry of the forward convolution; for conv_transpose2d, the geometry
  // of the convolution whose adjoint this layer computes.
  ConvGeometry geometry() const;
};

// Parameter-owning layer handles. Each registers its tensors under `path` in
// the store at construction and keeps Var references for the forward pass.

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(ParamStore<T>& store, const std::string& path, const LayerSpec& spec, Rng& rng);
  Var<T> operator()(Graph<T>& g, const Var<T>& x) const;
  const LayerSpec& spec() const { return spec_; }
  const Var<T>& weight() const { return w_; }
  const Var<T>& bias() const { return b_; }

 private:
  LayerSpec spec_;
  ConvGeometry geom_;
  Var<T> w_, b_;
};

template <typename T>
class ConvTranspose2dLayer {
 public:
  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(ParamStore<T>& store, const std::string& path, const LayerSpec& spec, Rng& rng);
  Var<T> operator()(Graph<T>& g, const Var<T>& x, int out_f, int out_t) const;
  const LayerSpec& spec() const { return spec_; }

 private:
  LayerSpec spec_;
  ConvGeometry geom_;
  Var<T> w_, b_;
};

template <typename T>
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  BatchNormLayer(ParamStore<T>& store, const std::string& path, int channels);
  Var<T> operator()(Graph<T>& g, const Var<T>& x, bool training) const;

 private:
  Var<T> gamma_, beta_;
  Tensor<T>* running_mean_ = nullptr;
  Tensor<T>* running_var_ = nullptr;
};

template <typename T>
class PReluLayer {
 public:
  static constexpr double kInitSlope = 0.25;
  PReluLayer() = default;
  PReluLayer(ParamStore<T>& store, const std::string& path, int channels);
  Var<T> operator()(Graph<T>& g, const Var<T>& x) const { return prelu(g, x, slope_); }

 private:
  Var<T> slope_;
};

template <typename T>
class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(ParamStore<T>& store, const std::string& path, int in, int out, Rng& rng, bool bias = true);
  Var<T> operator()(Graph<T>& g, const Var<T>& x) const { return linear(g, x, w_, b_); }
  const Var<T>& weight() const { return w_; }

 private:
  Var<T> w_, b_;
};

template <typename T>
class GruLayer {
 public:
  GruLayer() = default;
  GruLayer(ParamStore<T>& store, const std::string& path, int input, int hidden, Rng& rng);
  Var<T> operator()(Graph<T>& g, const Var<T>& x, const Var<T>& h0 = nullptr, bool reverse = false) const {
    return gru(g, x, w_, h0, reverse);
  }
  int hidden() const { return w_.hidden(); }
  const GruWeights<T>& weights() const { return w_; }

 private:
  GruWeights<T> w_;
};

}  // namespace mbtf::nn
