#pragma once

#include <string>
#include <type_traits>

#include "mbtf/nn/tensor.hpp"

namespace mbtf::nn {

// Geometry of a 2-D cross-correlation over a [channels, freq, time] tensor.
// Padding is explicit per side so causal (past-only) time padding and
// "same" frequency padding are both expressible.
struct ConvGeometry {
  int kf = 1, kt = 1;  // kernel
  int sf = 1, st = 1;  // stride
  int df = 1, dt = 1;  // dilation
  int pf_lo = 0, pf_hi = 0;
  int pt_lo = 0, pt_hi = 0;
  int groups = 1;

  int out_f(int f) const { return (f + pf_lo + pf_hi - df * (kf - 1) - 1) / sf + 1; }
  int out_t(int t) const { return (t + pt_lo + pt_hi - dt * (kt - 1) - 1) / st + 1; }

  void validate() const;
  std::string str() const;

  // Frequency padded "same" (ceil(F/sf) outputs); time padded causally (past
  // only) or split as evenly as possible with the extra frame on the future side.
  static ConvGeometry same(int kf, int kt, int sf, int df, int dt, bool causal, int groups = 1);

  // Geometry whose adjoint (transposed convolution) is causal in time when
  // `causal` is set: the time padding sits on the future side of the forward map.
  static ConvGeometry transposed_same(int kf, int kt, int sf, int df, int dt, bool causal);
};

bool operator==(const ConvGeometry& a, const ConvGeometry& b);

// weight: [C_out, C_in/groups, kf, kt]; bias: [C_out] or empty.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const std::type_identity_t<Tensor<T>>* bias,
                         const ConvGeometry& g);

// Adjoint of conv2d_forward with respect to its input. Output is [C_in, F, T]
// for the given input extent (F, T); this is the transposed convolution.
template <typename T>
Tensor<T> conv2d_input_adjoint(const Tensor<T>& gout, const Tensor<T>& w, const ConvGeometry& g, int c_in, int f,
                               int t);

// Accumulates dL/dw into wgrad given the forward input and dL/d(out).
template <typename T>
void conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& gout, const ConvGeometry& g, Tensor<T>& wgrad);

template <typename T>
void bias_grad(const Tensor<T>& gout, Tensor<T>& bgrad);

}  // namespace mbtf::nn
