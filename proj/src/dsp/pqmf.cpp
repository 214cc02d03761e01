#include "mbtf/dsp/pqmf.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "bessel.hpp"
#include "mbtf/error.hpp"

namespace mbtf::dsp {

namespace {

using detail::bessel_i0;

constexpr double kPi = std::numbers::pi;

// Correlation of the upsampled band with a synthesis filter: the transpose
// of the synthesis polyphase structure.
void synthesize_band(const std::vector<double>& v, const std::vector<double>& f, int c, std::vector<double>& y) {
  const int len = static_cast<int>(f.size());
  const long n_out = static_cast<long>(y.size());
  for (std::size_t m = 0; m < v.size(); ++m) {
    const double s = v[m];
    if (s == 0.0) continue;
    const long base = static_cast<long>(m) * c;
    const long end = std::min<long>(len, n_out - base);
    for (long j = 0; j < end; ++j) y[base + j] += s * f[j];
  }
}

}  // namespace

std::vector<double> kaiser_lowpass(int taps, double cutoff, double beta) {
  std::vector<double> h(taps);
  const double mid = 0.5 * (taps - 1);
  const double norm = bessel_i0(beta);
  for (int n = 0; n < taps; ++n) {
    const double m = n - mid;
    const double ideal = m == 0.0 ? cutoff : std::sin(kPi * cutoff * m) / (kPi * m);
    const double r = mid > 0 ? m / mid : 0.0;
    const double w = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
    h[n] = ideal * w;
  }
  return h;
}

void PqmfConfig::validate() const {
  if (num_bands < 2) throw ValidationError("pqmf: need at least 2 bands");
  if (prototype_len < 2 * num_bands || prototype_len % (2 * num_bands) != 0) {
    throw ValidationError("pqmf: prototype length " + std::to_string(prototype_len) + " not divisible by " +
                          std::to_string(2 * num_bands));
  }
  if (!(cutoff > 0.0 && cutoff < 1.0 / num_bands)) {
    throw ValidationError("pqmf: cutoff " + std::to_string(cutoff) + " outside (0, 1/" + std::to_string(num_bands) + ")");
  }
  if (!(kaiser_beta >= 0.0)) throw ValidationError("pqmf: negative Kaiser beta");
}

PqmfBank::PqmfBank(const PqmfConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.num_bands;
  const int len = cfg_.prototype_len;
  proto_ = kaiser_lowpass(len, cfg_.cutoff, cfg_.kaiser_beta);
  h_.assign(c, std::vector<double>(len));
  f_.assign(c, std::vector<double>(len));
  const double mid = 0.5 * (len - 1);
  for (int k = 0; k < c; ++k) {
    const double phase = (k % 2 == 0 ? 1.0 : -1.0) * kPi / 4.0;
    for (int n = 0; n < len; ++n) {
      const double arg = (2 * k + 1) * kPi / (2.0 * c) * (n - mid);
      h_[k][n] = 2.0 * proto_[n] * std::cos(arg + phase);
      f_[k][n] = 2.0 * proto_[n] * std::cos(arg - phase);
    }
  }
  // Analysis gain: white-noise energy is split without loss.
  double split = 0.0;
  for (int k = 0; k < c; ++k) {
    for (double v : h_[k]) split += v * v;
  }
  split /= c;
  const double ga = 1.0 / std::sqrt(split);
  for (auto& h : h_) {
    for (auto& v : h) v *= ga;
  }
  // Synthesis gain: unit main tap of the cascade impulse response, averaged
  // over the C decimation phases.
  double main = 0.0;
  for (int k = 0; k < c; ++k) {
    for (int n = 0; n < len; ++n) main += h_[k][n] * f_[k][len - 1 - n];
  }
  const double gs = c / main;
  for (auto& f : f_) {
    for (auto& v : f) v *= gs;
  }
}

SubbandSignals PqmfBank::analysis(const AudioBuffer& audio) const {
  audio.validate();
  const int c = cfg_.num_bands;
  if (audio.sample_rate % c != 0) {
    throw ValidationError("pqmf: sample rate " + std::to_string(audio.sample_rate) + " not divisible by " +
                          std::to_string(c) + " bands");
  }
  if (audio.size() < static_cast<std::size_t>(cfg_.prototype_len)) {
    throw LengthError("pqmf analysis: " + std::to_string(audio.size()) + " samples, need at least " +
                      std::to_string(cfg_.prototype_len));
  }
  const long n = static_cast<long>(audio.size());
  const long m_len = (n + c - 1) / c;
  const int len = cfg_.prototype_len;
  SubbandSignals out;
  out.band_rate = audio.sample_rate / c;
  out.bands.assign(c, std::vector<double>(static_cast<std::size_t>(m_len)));
  const double* x = audio.samples.data();
  for (int k = 0; k < c; ++k) {
    const double* h = h_[k].data();
    auto& band = out.bands[k];
    for (long m = 0; m < m_len; ++m) {
      const long pos = m * c;
      const long jmax = std::min<long>(len - 1, pos);
      const long jmin = std::max<long>(0, pos - (n - 1));
      double acc = 0.0;
      for (long j = jmin; j <= jmax; ++j) acc += h[j] * x[pos - j];
      band[m] = acc;
    }
  }
  return out;
}

AudioBuffer PqmfBank::synthesis(const SubbandSignals& bands) const {
  const int c = cfg_.num_bands;
  if (bands.num_bands() != c) {
    throw ValidationError("pqmf synthesis: " + std::to_string(bands.num_bands()) + " bands, expected " +
                          std::to_string(c));
  }
  bands.validate();
  AudioBuffer out;
  out.sample_rate = bands.band_rate * c;
  out.samples.assign(bands.band_length() * c, 0.0);
  for (int k = 0; k < c; ++k) synthesize_band(bands.bands[k], f_[k], c, out.samples);
  return out;
}

SubbandSignals PqmfBank::synthesis_adjoint(const std::vector<double>& grad, int band_rate) const {
  const int c = cfg_.num_bands;
  if (grad.size() % c != 0) throw ValidationError("pqmf synthesis adjoint: length not a multiple of the band count");
  const long n = static_cast<long>(grad.size());
  const long m_len = n / c;
  const int len = cfg_.prototype_len;
  SubbandSignals out;
  out.band_rate = band_rate;
  out.bands.assign(c, std::vector<double>(static_cast<std::size_t>(m_len)));
  for (int k = 0; k < c; ++k) {
    const double* f = f_[k].data();
    for (long m = 0; m < m_len; ++m) {
      const long base = m * c;
      const long end = std::min<long>(len, n - base);
      double acc = 0.0;
      for (long j = 0; j < end; ++j) acc += grad[base + j] * f[j];
      out.bands[k][m] = acc;
    }
  }
  return out;
}

double pqmf_reconstruction_error(const PqmfConfig& cfg) {
  const PqmfBank bank(cfg);
  const int c = cfg.num_bands;
  const int len = cfg.prototype_len;
  const int n = 4 * len;
  double err = 0.0;
  for (int p = 0; p < c; ++p) {
    AudioBuffer imp;
    imp.sample_rate = c;
    imp.samples.assign(n, 0.0);
    imp.samples[len + p] = 1.0;
    const AudioBuffer y = bank.synthesis(bank.analysis(imp));
    for (int i = 0; i < n; ++i) {
      const double target = i == len + p + len - 1 ? 1.0 : 0.0;
      const double d = y.samples[i] - target;
      err += d * d;
    }
  }
  return err / c;
}

PqmfConfig PqmfConfig::designed(int num_bands) {
  static std::mutex mu;
  static std::map<int, PqmfConfig> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(num_bands); it != cache.end()) return it->second;

  PqmfConfig cfg;
  cfg.num_bands = num_bands;
  cfg.prototype_len = 32 * num_bands;
  const double hi = 1.0 / num_bands;
  auto cost = [&](double cutoff) {
    PqmfConfig t = cfg;
    t.cutoff = cutoff;
    return pqmf_reconstruction_error(t);
  };
  // Coarse grid, then golden-section refinement around the best point.
  const int grid = 40;
  double best = 0.5 * hi, best_cost = cost(best);
  for (int i = 1; i < grid; ++i) {
    const double u = hi * (0.3 + 0.7 * i / grid);
    const double e = cost(u);
    if (e < best_cost) {
      best_cost = e;
      best = u;
    }
  }
  const double step = 0.7 * hi / grid;
  double a = std::max(1e-6, best - step), b = std::min(hi - 1e-6, best + step);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = cost(x1), f2 = cost(x2);
  for (int it = 0; it < 40; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = cost(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = cost(x2);
    }
  }
  cfg.cutoff = f1 < f2 ? x1 : x2;
  cache.emplace(num_bands, cfg);
  return cfg;
}

SubbandSignals pqmf_analysis(const AudioBuffer& audio, const PqmfConfig& cfg) { return PqmfBank(cfg).analysis(audio); }

AudioBuffer pqmf_synthesis(const SubbandSignals& bands, const PqmfConfig& cfg) {
  return PqmfBank(cfg).synthesis(bands);
}

const PqmfBank& default_bank(int num_bands) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<PqmfBank>> banks;
  std::lock_guard lock(mu);
  auto& slot = banks[num_bands];
  if (!slot) slot = std::make_unique<PqmfBank>(PqmfConfig::designed(num_bands));
  return *slot;
}

}  // namespace mbtf::dsp
