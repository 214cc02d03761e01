#include "mbtf/dsp/stft.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mbtf/dsp/fft.hpp"
#include "mbtf/error.hpp"

namespace mbtf::dsp {

void StftConfig::validate() const {
  if (hop < 1 || frame_len < hop || fft_size < frame_len) {
    throw ValidationError("stft: need 1 <= hop <= frame_len <= fft_size (hop " + std::to_string(hop) + ", frame " +
                          std::to_string(frame_len) + ", fft " + std::to_string(fft_size) + ")");
  }
}

int StftConfig::frames_for(std::size_t n) const {
  if (n == 0) return 0;
  const long padded = static_cast<long>(n) + 2L * pad();
  if (padded < frame_len) return 1;
  return static_cast<int>(1 + (padded - frame_len) / hop);
}

std::vector<double> make_window(Window w, int n) {
  std::vector<double> out(n, 1.0);
  if (w == Window::hann) {
    for (int i = 0; i < n; ++i) out[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return out;
}

namespace {

// Padded copy of x: reflection without repeating the edge sample, or zeros
// when the signal is too short to reflect.
std::vector<double> pad_signal(const std::vector<double>& x, int pad, std::size_t total) {
  const long n = static_cast<long>(x.size());
  std::vector<double> out(total, 0.0);
  const bool reflect = n > pad;
  for (long i = 0; i < static_cast<long>(total); ++i) {
    long src = i - pad;
    if (src < 0) {
      if (!reflect) continue;
      src = -src;
    } else if (src >= n) {
      if (!reflect) continue;
      src = 2 * (n - 1) - src;
      if (src < 0) continue;
    }
    out[i] = x[src];
  }
  return out;
}

std::size_t padded_extent(const StftConfig& cfg, int frames, std::size_t n) {
  const std::size_t need = static_cast<std::size_t>(frames - 1) * cfg.hop + cfg.frame_len;
  return std::max(need, n + 2 * static_cast<std::size_t>(cfg.pad()));
}

StftConfig config_of(const ComplexSpectrogram& spec, Window window) {
  StftConfig cfg;
  cfg.frame_len = spec.frame_len;
  cfg.hop = spec.hop;
  cfg.fft_size = spec.fft_size;
  cfg.window = window;
  return cfg;
}

}  // namespace

ComplexSpectrogram stft(const std::vector<double>& x, int sample_rate, const StftConfig& cfg) {
  cfg.validate();
  ComplexSpectrogram spec;
  spec.frame_len = cfg.frame_len;
  spec.hop = cfg.hop;
  spec.fft_size = cfg.fft_size;
  spec.sample_rate = sample_rate;
  spec.length = x.size();
  spec.frames = cfg.frames_for(x.size());
  if (spec.frames == 0) return spec;
  const int nb = spec.num_bins();
  spec.bins.resize(static_cast<std::size_t>(spec.frames) * nb);
  const auto padded = pad_signal(x, cfg.pad(), padded_extent(cfg, spec.frames, x.size()));
  const auto win = make_window(cfg.window, cfg.frame_len);
  std::vector<double> frame(cfg.fft_size, 0.0);
  for (int t = 0; t < spec.frames; ++t) {
    const double* src = padded.data() + static_cast<std::size_t>(t) * cfg.hop;
    for (int i = 0; i < cfg.frame_len; ++i) frame[i] = src[i] * win[i];
    rfft(frame, std::span(spec.bins).subspan(static_cast<std::size_t>(t) * nb, nb));
  }
  return spec;
}

ComplexSpectrogram stft(const AudioBuffer& audio, const StftConfig& cfg) {
  audio.validate();
  return stft(audio.samples, audio.sample_rate, cfg);
}

namespace {

// Per-sample 1/sum(w^2) over the padded extent (0 where no frame reaches).
std::vector<double> inverse_norm(const std::vector<double>& win, int hop, int frames, std::size_t extent) {
  std::vector<double> norm(extent, 0.0);
  for (int t = 0; t < frames; ++t) {
    const std::size_t base = static_cast<std::size_t>(t) * hop;
    for (std::size_t i = 0; i < win.size(); ++i) norm[base + i] += win[i] * win[i];
  }
  for (auto& v : norm) v = v > 1e-10 ? 1.0 / v : 0.0;
  return norm;
}

}  // namespace

AudioBuffer istft(const ComplexSpectrogram& spec, Window window) {
  spec.validate();
  AudioBuffer out;
  out.sample_rate = spec.sample_rate > 0 ? spec.sample_rate : 1;
  out.samples.assign(spec.length, 0.0);
  if (spec.frames == 0) return out;
  const StftConfig cfg = config_of(spec, window);
  if (cfg.frames_for(spec.length) != spec.frames) {
    throw ValidationError("istft: " + std::to_string(spec.frames) + " frames inconsistent with signal length " +
                          std::to_string(spec.length));
  }
  const std::size_t extent = padded_extent(cfg, spec.frames, spec.length);
  const auto win = make_window(window, spec.frame_len);
  const auto inv = inverse_norm(win, spec.hop, spec.frames, extent);
  std::vector<double> acc(extent, 0.0);
  std::vector<double> frame(spec.fft_size);
  const int nb = spec.num_bins();
  const double scale = 1.0 / spec.fft_size;
  for (int t = 0; t < spec.frames; ++t) {
    irfft_unnormalized(std::span(spec.bins).subspan(static_cast<std::size_t>(t) * nb, nb), frame);
    const std::size_t base = static_cast<std::size_t>(t) * spec.hop;
    for (int i = 0; i < spec.frame_len; ++i) acc[base + i] += win[i] * frame[i] * scale;
  }
  const std::size_t pad = static_cast<std::size_t>(cfg.pad());
  for (std::size_t i = 0; i < spec.length; ++i) out.samples[i] = acc[pad + i] * inv[pad + i];
  return out;
}

ComplexSpectrogram istft_adjoint(const std::vector<double>& grad, const ComplexSpectrogram& like, Window window) {
  if (grad.size() != like.length) {
    throw ValidationError("istft adjoint: gradient length " + std::to_string(grad.size()) + ", expected " +
                          std::to_string(like.length));
  }
  ComplexSpectrogram out = like;
  std::fill(out.bins.begin(), out.bins.end(), std::complex<double>(0.0, 0.0));
  if (like.frames == 0) return out;
  const StftConfig cfg = config_of(like, window);
  const std::size_t extent = padded_extent(cfg, like.frames, like.length);
  const auto win = make_window(window, like.frame_len);
  const auto inv = inverse_norm(win, like.hop, like.frames, extent);
  std::vector<double> acc(extent, 0.0);
  const std::size_t pad = static_cast<std::size_t>(cfg.pad());
  for (std::size_t i = 0; i < like.length; ++i) acc[pad + i] = grad[i] * inv[pad + i];
  const int n = like.fft_size;
  const int nb = like.num_bins();
  std::vector<double> frame(n, 0.0);
  std::vector<std::complex<double>> fx(nb);
  for (int t = 0; t < like.frames; ++t) {
    const std::size_t base = static_cast<std::size_t>(t) * like.hop;
    for (int i = 0; i < like.frame_len; ++i) frame[i] = win[i] * acc[base + i];
    rfft(frame, fx);
    for (int k = 0; k < nb; ++k) {
      const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
      const double ck = (edge ? 1.0 : 2.0) / n;
      std::complex<double> v = ck * fx[k];
      if (edge) v = {v.real(), 0.0};
      out.at(t, k) = v;
    }
  }
  return out;
}

}  // namespace mbtf::dsp
