#pragma once

#include <string>
#include <vector>

#include "mbtf/nn/ops.hpp"

namespace mbtf::train {

using nn::Graph;
using nn::Tensor;
using nn::Var;

inline constexpr double kLossEps = 1e-8;
inline constexpr double kSnrLossWeight = 10.0;

// 10 log10(|s|^2 / (|e|^2 + eps)) with s the projection of the estimate on the
// reference and e the remainder. Throws ValidationError on unequal lengths or
// an all-zero reference.
double si_snr(const std::vector<double>& estimate, const std::vector<double>& reference);

// Differentiable SI-SNR in dB of a 1-D estimate against a fixed reference.
template <typename T>
Var<T> si_snr(Graph<T>& g, const Var<T>& estimate, const Tensor<T>& reference);

// Mean over bands, bins and frames of |X - X_hat|^2 for [2C, F, T] tensors
// holding (re, im) channel pairs.
template <typename T>
double cmse(const Tensor<T>& x, const Tensor<T>& x_hat);
template <typename T>
Var<T> cmse(Graph<T>& g, const Var<T>& x_hat, const Tensor<T>& x);

enum class Stage { sve, ipe };
const char* to_string(Stage s);
Stage parse_stage(const std::string& s);

struct LossReport {
  long step = 0;
  double lr = 0.0;
  double si_snr_db = 0.0;
  double cmse = 0.0;
  double snr_mse = 0.0;
  double total = 0.0;
};

// sve: -SI-SNR + cMSE; ipe: -SI-SNR + cMSE + 10 * SNR MSE.
LossReport composite_loss(Stage stage, double si_snr_db, double cmse, double snr_mse = 0.0);

// Loss-log line format: step, lr, si_snr, cmse, snr_mse, total (tab separated).
std::string loss_log_header();
std::string loss_log_line(const LossReport& r);

}  // namespace mbtf::train
