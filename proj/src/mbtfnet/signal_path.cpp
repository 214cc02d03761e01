#include "mbtf/mbtfnet/signal_path.hpp"

#include "mbtf/error.hpp"

namespace mbtf::mbtfnet {

template <typename T>
nn::Tensor<T> to_tensor(const BandSpectra& s) {
  const int c = static_cast<int>(s.bands.size()), f = s.bins(), t = s.frames();
  nn::Tensor<T> out({2 * c, f, t});
  for (int b = 0; b < c; ++b) {
    const auto& spec = s.bands[static_cast<std::size_t>(b)];
    for (int k = 0; k < f; ++k) {
      for (int i = 0; i < t; ++i) {
        out.at(2 * b, k, i) = static_cast<T>(spec.at(i, k).real());
        out.at(2 * b + 1, k, i) = static_cast<T>(spec.at(i, k).imag());
      }
    }
  }
  return out;
}

template <typename T>
BandSpectra from_tensor(const nn::Tensor<T>& x, const BandSpectra& like) {
  const int c = static_cast<int>(like.bands.size()), f = like.bins(), t = like.frames();
  nn::require_shape(x, {2 * c, f, t}, "sub-band tensor");
  BandSpectra out = like;
  for (int b = 0; b < c; ++b) {
    auto& spec = out.bands[static_cast<std::size_t>(b)];
    for (int k = 0; k < f; ++k) {
      for (int i = 0; i < t; ++i) spec.at(i, k) = {static_cast<double>(x.at(2 * b, k, i)), static_cast<double>(x.at(2 * b + 1, k, i))};
    }
  }
  return out;
}

SignalPath::SignalPath(const MbtfConfig& cfg) : bank_(&dsp::default_bank(cfg.num_bands)) {
  stft_.frame_len = cfg.frame_len;
  stft_.hop = cfg.hop;
  stft_.fft_size = cfg.fft_size;
  stft_.validate();
}

BandSpectra SignalPath::analyze(const dsp::AudioBuffer& audio) const {
  audio.validate();
  const int c = num_bands();
  std::size_t padded = audio.size() + static_cast<std::size_t>(delay());
  padded = (padded + c - 1) / c * c;
  padded = std::max<std::size_t>(padded, static_cast<std::size_t>(bank_->config().prototype_len));
  dsp::AudioBuffer x{audio.samples, audio.sample_rate};
  x.samples.resize(padded, 0.0);
  const auto sub = bank_->analysis(x);
  BandSpectra out;
  out.length = audio.size();
  out.band_length = sub.band_length();
  out.band_rate = sub.band_rate;
  for (const auto& b : sub.bands) out.bands.push_back(dsp::stft(b, sub.band_rate, stft_));
  return out;
}

dsp::AudioBuffer SignalPath::synthesize(const BandSpectra& spectra) const {
  dsp::SubbandSignals sub;
  sub.band_rate = spectra.band_rate;
  for (const auto& s : spectra.bands) sub.bands.push_back(dsp::istft(s).samples);
  const auto full = bank_->synthesis(sub);
  dsp::AudioBuffer out;
  out.sample_rate = full.sample_rate;
  const auto begin = full.samples.begin() + delay();
  out.samples.assign(begin, begin + static_cast<long>(spectra.length));
  return out;
}

BandSpectra SignalPath::synthesize_adjoint(const std::vector<double>& grad, const BandSpectra& like) const {
  if (grad.size() != like.length) throw ValidationError("synthesis adjoint: gradient length mismatch");
  std::vector<double> full(like.band_length * num_bands(), 0.0);
  std::copy(grad.begin(), grad.end(), full.begin() + delay());
  const auto sub = bank_->synthesis_adjoint(full, like.band_rate);
  BandSpectra out = like;
  for (std::size_t b = 0; b < like.bands.size(); ++b) out.bands[b] = dsp::istft_adjoint(sub.bands[b], like.bands[b]);
  return out;
}

template <typename T>
nn::LinearOperator<T> SignalPath::reconstruction(const BandSpectra& like) const {
  nn::LinearOperator<T> op;
  op.out_shape = {static_cast<int>(like.length)};
  op.forward = [this, like](const nn::Tensor<T>& x) {
    const auto y = synthesize(from_tensor(x, like)).samples;
    nn::Tensor<T> out({static_cast<int>(y.size())});
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = static_cast<T>(y[i]);
    return out;
  };
  op.adjoint = [this, like](const nn::Tensor<T>& g) {
    std::vector<double> gd(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) gd[i] = static_cast<double>(g[i]);
    return to_tensor<T>(synthesize_adjoint(gd, like));
  };
  return op;
}

#define MBTF_INSTANTIATE(T)                                                          \
  template nn::Tensor<T> to_tensor<T>(const BandSpectra&);                           \
  template BandSpectra from_tensor<T>(const nn::Tensor<T>&, const BandSpectra&);     \
  template nn::LinearOperator<T> SignalPath::reconstruction<T>(const BandSpectra&) const;

MBTF_INSTANTIATE(float)
MBTF_INSTANTIATE(double)
#undef MBTF_INSTANTIATE

}  // namespace mbtf::mbtfnet
