#include "mbtf/ipe/cleanliness.hpp"

#include <cmath>

#include "mbtf/error.hpp"
#include "mbtf/util/text.hpp"

namespace mbtf::ipe {

template <typename T>
std::vector<double> cleanliness_score(const nn::Tensor<T>& x, const nn::Tensor<T>& y) {
  nn::require_rank(x, 3, "cleanliness X");
  if (x.shape() != y.shape()) {
    throw ValidationError("cleanliness score: shape mismatch " + nn::shape_str(x.shape()) + " vs " +
                          nn::shape_str(y.shape()));
  }
  if (x.dim(0) % 2 != 0) throw ValidationError("cleanliness score: channel count must be even (re/im pairs)");
  const int bands = x.dim(0) / 2, f = x.dim(1), t = x.dim(2);
  std::vector<double> num(static_cast<std::size_t>(t), 0.0), den(static_cast<std::size_t>(t), 0.0);
  for (int b = 0; b < bands; ++b) {
    for (int k = 0; k < f; ++k) {
      for (int i = 0; i < t; ++i) {
        num[static_cast<std::size_t>(i)] += std::hypot(static_cast<double>(x.at(2 * b, k, i)),
                                                       static_cast<double>(x.at(2 * b + 1, k, i)));
        den[static_cast<std::size_t>(i)] += std::hypot(static_cast<double>(y.at(2 * b, k, i)),
                                                       static_cast<double>(y.at(2 * b + 1, k, i)));
      }
    }
  }
  std::vector<double> s(static_cast<std::size_t>(t));
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double v = std::log10(std::max(num[i], kCleanlinessEps) / std::max(den[i], kCleanlinessEps));
    s[i] = std::max(v, kCleanlinessFloor);
  }
  return s;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void CleanlinessStats::validate() const {
  if (!std::isfinite(mean) || !std::isfinite(std) || std <= 0.0) {
    throw ValidationError("cleanliness statistics must be finite with std > 0");
  }
}

double CleanlinessStats::target(double s) const { return logistic(zscore(s)); }

std::vector<double> CleanlinessStats::targets(const std::vector<double>& s) const {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = target(s[i]);
  return out;
}

std::map<std::string, std::string> CleanlinessStats::to_metadata() const {
  return {{"cleanliness_mean", util::format_double(mean)}, {"cleanliness_std", util::format_double(std)}};
}

CleanlinessStats CleanlinessStats::from_metadata(const std::map<std::string, std::string>& meta) {
  const auto m = meta.find("cleanliness_mean");
  const auto s = meta.find("cleanliness_std");
  if (m == meta.end() || s == meta.end()) throw DataError("weights carry no cleanliness statistics");
  const auto mean = util::to_double(m->second);
  const auto std = util::to_double(s->second);
  if (!mean || !std) throw DataError("malformed cleanliness statistics in weights metadata");
  CleanlinessStats out{*mean, *std};
  out.validate();
  return out;
}

CleanlinessStats normalize_stats(const std::vector<double>& s) {
  if (s.empty()) throw ValidationError("cleanliness statistics need at least one value");
  double sum = 0.0;
  for (double v : s) {
    if (!std::isfinite(v)) throw ValidationError("cleanliness statistics: non-finite score");
    sum += v;
  }
  const double mean = sum / static_cast<double>(s.size());
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  var /= static_cast<double>(s.size());
  return {mean, std::max(std::sqrt(var), CleanlinessStats::kMinStd)};
}

template std::vector<double> cleanliness_score(const nn::Tensor<float>&, const nn::Tensor<float>&);
template std::vector<double> cleanliness_score(const nn::Tensor<double>&, const nn::Tensor<double>&);

}  // namespace mbtf::ipe
