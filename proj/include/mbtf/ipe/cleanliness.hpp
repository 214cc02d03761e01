#pragma once

#include <map>
#include <string>
#include <vector>

#include "mbtf/nn/tensor.hpp"

namespace mbtf::ipe {

inline constexpr double kCleanlinessEps = 1e-8;
inline constexpr double kCleanlinessFloor = -8.0;

// Per-frame S_t = log10(sum_f |X| / sum_f |Y|) over all sub-bands of two
// [2C, F, T] spectrogram tensors. Both sums are floored at kCleanlinessEps and
// the result is clamped to >= kCleanlinessFloor.
template <typename T>
std::vector<double> cleanliness_score(const nn::Tensor<T>& x, const nn::Tensor<T>& y);

// Population statistics of S over a training set.
struct CleanlinessStats {
  static constexpr double kMinStd = 1e-6;

  double mean = 0.0;
  double std = 1.0;

  void validate() const;
  double zscore(double s) const { return (s - mean) / std; }
  // Logistic of the z-score; the regression target of the SNR module.
  double target(double s) const;
  std::vector<double> targets(const std::vector<double>& s) const;

  std::map<std::string, std::string> to_metadata() const;
  static CleanlinessStats from_metadata(const std::map<std::string, std::string>& meta);

  friend bool operator==(const CleanlinessStats&, const CleanlinessStats&) = default;
};

// Std is floored at kMinStd. Throws ValidationError on empty or non-finite input.
CleanlinessStats normalize_stats(const std::vector<double>& s);

double logistic(double x);

}  // namespace mbtf::ipe
