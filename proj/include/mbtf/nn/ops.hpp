#pragma once

#include <array>
#include <functional>
#include <vector>

#include "mbtf/nn/autograd.hpp"
#include "mbtf/nn/conv.hpp"

namespace mbtf::nn {

// Differentiable operations. Every op takes the recording graph explicitly;
// outputs carry a backward closure only when some input requires a gradient.

template <typename T>
Var<T> add(Graph<T>& g, const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(Graph<T>& g, const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(Graph<T>& g, const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(Graph<T>& g, const Var<T>& a, T s);
template <typename T>
Var<T> sum(Graph<T>& g, const Var<T>& a);
template <typename T>
Var<T> mean(Graph<T>& g, const Var<T>& a);

template <typename T>
Var<T> sigmoid(Graph<T>& g, const Var<T>& x);
template <typename T>
Var<T> tanh(Graph<T>& g, const Var<T>& x);
// Per-channel slope along axis 0.
template <typename T>
Var<T> prelu(Graph<T>& g, const Var<T>& x, const Var<T>& slope);

template <typename T>
Var<T> reshape(Graph<T>& g, const Var<T>& x, Shape shape);
// 3-d axis permutation: out.dim(i) = in.dim(perm[i]).
template <typename T>
Var<T> permute3(Graph<T>& g, const Var<T>& x, std::array<int, 3> perm);
template <typename T>
Var<T> concat0(Graph<T>& g, const std::vector<Var<T>>& parts);
template <typename T>
Var<T> slice0(Graph<T>& g, const Var<T>& x, int begin, int end);
// Concatenation along the last axis (time for [C,F,T]).
template <typename T>
Var<T> concat_last(Graph<T>& g, const std::vector<Var<T>>& parts);
template <typename T>
Var<T> slice_last(Graph<T>& g, const Var<T>& x, int begin, int end);
// a: [N,K] times z: [N,K,T] broadcast over the last axis.
template <typename T>
Var<T> mul_broadcast_last(Graph<T>& g, const Var<T>& a, const Var<T>& z);

template <typename T>
Var<T> conv2d(Graph<T>& g, const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvGeometry& geom);
// Transposed convolution: the adjoint of conv2d(geom) producing [C, f, t].
template <typename T>
Var<T> conv_transpose2d(Graph<T>& g, const Var<T>& x, const Var<T>& w, const Var<T>& bias,
                        const ConvGeometry& geom, int out_f, int out_t);

struct BatchNormOptions {
  double momentum = 0.99;  // running <- momentum*running + (1-momentum)*batch
  double eps = 1e-5;
  bool training = false;
};

// Normalizes per channel (axis 0) over all remaining axes. In training mode
// the running statistics are updated in place.
template <typename T>
Var<T> batch_norm(Graph<T>& g, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, const BatchNormOptions& opt);

// x: [B, D], w: [O, D], bias: [O] or null -> [B, O].
template <typename T>
Var<T> linear(Graph<T>& g, const Var<T>& x, const Var<T>& w, const Var<T>& bias);

template <typename T>
struct GruWeights {
  Var<T> w_ih;  // [3H, D] gate order: reset, update, candidate
  Var<T> w_hh;  // [3H, H]
  Var<T> b_ih;  // [3H]
  Var<T> b_hh;  // [3H]
  int hidden() const { return w_hh->value.dim(1); }
};

// x: [B, L, D]; h0: [B, H] or null (zeros). Returns all hidden states
// [B, L, H]. With reverse=true the sequence is consumed from L-1 down to 0 and
// outputs are stored at their original positions.
template <typename T>
Var<T> gru(Graph<T>& g, const Var<T>& x, const GruWeights<T>& w, const Var<T>& h0, bool reverse = false);

// (1 + m) * x as complex numbers; channels (2i, 2i+1) hold (re, im).
template <typename T>
Var<T> apply_complex_mask(Graph<T>& g, const Var<T>& mask_residual, const Var<T>& x);

// A fixed linear operator with its adjoint, for differentiating through
// signal reconstruction (iSTFT + synthesis filter bank).
template <typename T>
struct LinearOperator {
  Shape out_shape;
  std::function<Tensor<T>(const Tensor<T>&)> forward;
  std::function<Tensor<T>(const Tensor<T>&)> adjoint;
};

template <typename T>
Var<T> apply_linear(Graph<T>& g, const Var<T>& x, const LinearOperator<T>& op);

template <typename T>
Var<T> mse(Graph<T>& g, const Var<T>& a, const Var<T>& b);

}  // namespace mbtf::nn
