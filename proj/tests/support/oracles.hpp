#pragma once

// Test-only reference implementations. These are deliberately naive and
// share no code with the library paths they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mbtf/nn/autograd.hpp"
#include "mbtf/nn/conv.hpp"
#include "mbtf/rng.hpp"

namespace oracle {

using mbtf::nn::ConvGeometry;
using mbtf::nn::Tensor;

inline Tensor<double> random_tensor(mbtf::nn::Shape shape, mbtf::Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& e : t.vec()) e = scale * rng.uniform(-1.0, 1.0);
  return t;
}

// Nested-loop cross-correlation with explicit bounds checks on every tap.
inline Tensor<double> direct_conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b,
                                    const ConvGeometry& g) {
  const int ci = x.dim(0), f = x.dim(1), t = x.dim(2);
  const int co = w.dim(0), cig = w.dim(1);
  const int fo = (f + g.pf_lo + g.pf_hi - g.df * (g.kf - 1) - 1) / g.sf + 1;
  const int to = (t + g.pt_lo + g.pt_hi - g.dt * (g.kt - 1) - 1) / g.st + 1;
  const int cog = co / g.groups;
  (void)ci;
  Tensor<double> out({co, fo, to});
  for (int o = 0; o < co; ++o) {
    const int grp = o / cog;
    for (int a = 0; a < fo; ++a) {
      for (int c = 0; c < to; ++c) {
        double acc = b ? (*b)[static_cast<std::size_t>(o)] : 0.0;
        for (int l = 0; l < cig; ++l) {
          const int in_ch = grp * cig + l;
          for (int i = 0; i < g.kf; ++i) {
            for (int j = 0; j < g.kt; ++j) {
              const int fi = a * g.sf + i * g.df - g.pf_lo;
              const int ti = c * g.st + j * g.dt - g.pt_lo;
              if (fi < 0 || fi >= f || ti < 0 || ti >= t) continue;
              acc += w[((static_cast<std::size_t>(o) * cig + l) * g.kf + i) * g.kt + j] * x.at(in_ch, fi, ti);
            }
          }
        }
        out.at(o, a, c) = acc;
      }
    }
  }
  return out;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// Central finite differences of a scalar function of the given leaves,
// compared with analytic gradients. `loss` must rebuild the forward graph
// each call and return the scalar value; `analytic` must run backward once and
// leave gradients on the leaves.
inline GradCheckResult grad_check(const std::vector<mbtf::nn::Var<double>>& leaves,
                                  const std::function<double()>& loss, const std::function<void()>& analytic,
                                  double eps = 1e-5, double floor = 1e-6) {
  for (const auto& l : leaves) l->grad = Tensor<double>();
  analytic();
  GradCheckResult res;
  for (const auto& l : leaves) {
    Tensor<double> ag = l->grad.empty() ? Tensor<double>(l->value.shape()) : l->grad;
    for (std::size_t i = 0; i < l->value.size(); ++i) {
      const double orig = l->value[i];
      l->value[i] = orig + eps;
      const double fp = loss();
      l->value[i] = orig - eps;
      const double fm = loss();
      l->value[i] = orig;
      const double num = (fp - fm) / (2 * eps);
      const double a = ag[i];
      const double err = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
      res.max_rel_err = std::max(res.max_rel_err, err);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace oracle
