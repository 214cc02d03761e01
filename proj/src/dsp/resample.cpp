#include "mbtf/dsp/resample.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bessel.hpp"
#include "mbtf/error.hpp"

namespace mbtf::dsp {

namespace {

using detail::bessel_i0;

constexpr int kZeroCrossings = 24;
constexpr int kPhases = 512;
constexpr double kBeta = 8.0;

// Kernel sampled at u = i / kPhases input samples, i = 0 .. half*kPhases + 1.
std::vector<double> kernel_table(double cutoff, double half) {
  const int n = static_cast<int>(std::ceil(half * kPhases)) + 2;
  std::vector<double> tab(n, 0.0);
  const double norm = bessel_i0(kBeta);
  for (int i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / kPhases;
    if (u >= half) break;
    const double x = std::numbers::pi * cutoff * u;
    const double sinc = u == 0.0 ? 1.0 : std::sin(x) / x;
    const double r = u / half;
    tab[i] = cutoff * sinc * bessel_i0(kBeta * std::sqrt(1.0 - r * r)) / norm;
  }
  return tab;
}

}  // namespace

std::vector<double> resample_step(const std::vector<double>& x, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("resample: step must be positive and finite");
  if (x.empty()) return {};
  const double cutoff = std::min(1.0, 1.0 / step);
  const double half = kZeroCrossings / cutoff;
  const auto tab = kernel_table(cutoff, half);
  const long n = static_cast<long>(x.size());
  const long m_len = static_cast<long>(std::floor((n - 1) / step)) + 1;
  std::vector<double> y(static_cast<std::size_t>(m_len));
  for (long m = 0; m < m_len; ++m) {
    const double t = m * step;
    const long lo = std::max<long>(0, static_cast<long>(std::ceil(t - half)));
    const long hi = std::min<long>(n - 1, static_cast<long>(std::floor(t + half)));
    double acc = 0.0;
    for (long i = lo; i <= hi; ++i) {
      const double pos = std::abs(t - static_cast<double>(i)) * kPhases;
      const long idx = static_cast<long>(pos);
      const double frac = pos - static_cast<double>(idx);
      acc += x[i] * (tab[idx] + frac * (tab[idx + 1] - tab[idx]));
    }
    y[m] = acc;
  }
  return y;
}

AudioBuffer resample(const AudioBuffer& audio, int target_rate) {
  audio.validate();
  if (target_rate <= 0) throw ValidationError("resample: target rate must be positive");
  if (target_rate == audio.sample_rate) return audio;
  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples = resample_step(audio.samples, static_cast<double>(audio.sample_rate) / target_rate);
  return out;
}

AudioBuffer pitch_shift_semitones(const AudioBuffer& audio, int semitones) {
  if (semitones < -12 || semitones > 12) {
    throw ValidationError("pitch shift: |semitones| must be <= 12, got " + std::to_string(semitones));
  }
  audio.validate();
  if (semitones == 0) return audio;
  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  out.samples = resample_step(audio.samples, std::pow(2.0, semitones / 12.0));
  return out;
}

}  // namespace mbtf::dsp
