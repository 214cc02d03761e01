#include "mbtf/train/losses.hpp"

#include <cmath>

#include "mbtf/error.hpp"
#include "mbtf/util/text.hpp"

namespace mbtf::train {

namespace {

struct SiSnrParts {
  double a = 0.0;  // <est, ref>
  double r = 0.0;  // |ref|^2
  double p = 0.0;  // |s|^2
  double q = 0.0;  // |e|^2 + eps
};

template <typename A, typename B>
SiSnrParts si_snr_parts(const A& est, const B& ref, std::size_t n) {
  SiSnrParts s;
  double ee = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(est[i]), y = static_cast<double>(ref[i]);
    s.a += x * y;
    s.r += y * y;
    ee += x * x;
  }
  if (!(s.r > 0.0)) throw ValidationError("SI-SNR: reference is all zeros");
  double e2 = 0.0;
  const double k = s.a / s.r;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(est[i]) - k * static_cast<double>(ref[i]);
    e2 += d * d;
  }
  s.p = k * k * s.r;
  s.q = e2 + kLossEps;
  return s;
}

double db(const SiSnrParts& s) { return 10.0 * std::log10(std::max(s.p, 1e-300) / s.q); }

}  // namespace

double si_snr(const std::vector<double>& estimate, const std::vector<double>& reference) {
  if (estimate.size() != reference.size()) {
    throw ValidationError("SI-SNR: estimate has " + std::to_string(estimate.size()) + " samples, reference " +
                          std::to_string(reference.size()));
  }
  return db(si_snr_parts(estimate, reference, estimate.size()));
}

template <typename T>
Var<T> si_snr(Graph<T>& g, const Var<T>& estimate, const Tensor<T>& reference) {
  nn::require_rank(estimate->value, 1, "SI-SNR estimate");
  nn::require_shape(reference, estimate->value.shape(), "SI-SNR reference");
  const std::size_t n = reference.size();
  const SiSnrParts s = si_snr_parts(estimate->value.vec(), reference.vec(), n);
  Tensor<T> v({1});
  v[0] = static_cast<T>(db(s));
  auto out = g.record(std::move(v), estimate->requires_grad);
  if (out->requires_grad) {
    nn::Node<T>* o = out.get();
    out->backward_fn = [o, estimate, reference, s, n] {
      // d/dx [10 log10 P - 10 log10 Q] with P = a^2/r, Q = |x|^2 - a^2/r + eps.
      const double c = 10.0 / std::log(10.0) * static_cast<double>(o->grad[0]);
      const double k = s.a / s.r;
      const double dp = s.p > 1e-300 ? 2.0 * k / s.p : 0.0;
      auto& gr = estimate->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(estimate->value[i]), y = static_cast<double>(reference[i]);
        const double dq = (2.0 * x - 2.0 * k * y) / s.q;
        gr[i] += static_cast<T>(c * (dp * y - dq));
      }
    };
  }
  return out;
}

template <typename T>
double cmse(const Tensor<T>& x, const Tensor<T>& x_hat) {
  nn::require_rank(x, 3, "cMSE reference");
  nn::require_shape(x_hat, x.shape(), "cMSE estimate");
  if (x.dim(0) % 2 != 0) throw ValidationError("cMSE: channel count must be even (re/im pairs)");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(x_hat[i]);
    acc += d * d;
  }
  return acc / (static_cast<double>(x.size()) / 2.0);
}

template <typename T>
Var<T> cmse(Graph<T>& g, const Var<T>& x_hat, const Tensor<T>& x) {
  nn::require_rank(x, 3, "cMSE reference");
  if (x.dim(0) % 2 != 0) throw ValidationError("cMSE: channel count must be even (re/im pairs)");
  // Mean over complex entries = 2 x mean over real coordinates.
  return nn::scale(g, nn::mse(g, x_hat, g.constant(x)), T(2));
}

const char* to_string(Stage s) { return s == Stage::sve ? "sve" : "ipe"; }

Stage parse_stage(const std::string& s) {
  if (s == "sve") return Stage::sve;
  if (s == "ipe") return Stage::ipe;
  throw ConfigError("unknown training stage '" + s + "' (expected sve or ipe)");
}

LossReport composite_loss(Stage stage, double si_snr_db, double cmse_value, double snr_mse) {
  LossReport r;
  r.si_snr_db = si_snr_db;
  r.cmse = cmse_value;
  r.snr_mse = stage == Stage::ipe ? snr_mse : 0.0;
  r.total = -si_snr_db + cmse_value + (stage == Stage::ipe ? kSnrLossWeight * snr_mse : 0.0);
  return r;
}

std::string loss_log_header() { return "step\tlr\tsi_snr\tcmse\tsnr_mse\ttotal"; }

std::string loss_log_line(const LossReport& r) {
  return std::to_string(r.step) + '\t' + util::format_double(r.lr) + '\t' + util::format_double(r.si_snr_db) + '\t' +
         util::format_double(r.cmse) + '\t' + util::format_double(r.snr_mse) + '\t' + util::format_double(r.total);
}

#define MBTF_INSTANTIATE(T)                                                 \
  template Var<T> si_snr(Graph<T>&, const Var<T>&, const Tensor<T>&);       \
  template double cmse(const Tensor<T>&, const Tensor<T>&);                 \
  template Var<T> cmse(Graph<T>&, const Var<T>&, const Tensor<T>&);

MBTF_INSTANTIATE(float)
MBTF_INSTANTIATE(double)
#undef MBTF_INSTANTIATE

}  // namespace mbtf::train
