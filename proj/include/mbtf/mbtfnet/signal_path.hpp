#pragma once

#include <vector>

#include "mbtf/dsp/pqmf.hpp"
#include "mbtf/dsp/stft.hpp"
#include "mbtf/mbtfnet/config.hpp"
#include "mbtf/nn/ops.hpp"

namespace mbtf::mbtfnet {

// Sub-band spectrograms of one signal plus what is needed to invert them.
struct BandSpectra {
  std::vector<dsp::ComplexSpectrogram> bands;
  std::size_t length = 0;       // full-band samples of the original signal
  std::size_t band_length = 0;  // samples per sub-band
  int band_rate = 0;

  int frames() const { return bands.empty() ? 0 : bands[0].frames; }
  int bins() const { return bands.empty() ? 0 : bands[0].num_bins(); }
};

// Channel 2i holds the real part and 2i+1 the imaginary part of band i.
template <typename T>
nn::Tensor<T> to_tensor(const BandSpectra& s);

// Writes a [2C, F, T] tensor into spectrograms with the geometry of `like`.
template <typename T>
BandSpectra from_tensor(const nn::Tensor<T>& x, const BandSpectra& like);

// PQMF analysis + per-band STFT and the inverse, with delay compensation so
// that synthesize(analyze(x)) is aligned with x and has its length.
class SignalPath {
 public:
  explicit SignalPath(const MbtfConfig& cfg);

  BandSpectra analyze(const dsp::AudioBuffer& audio) const;
  dsp::AudioBuffer synthesize(const BandSpectra& spectra) const;
  // Adjoint of synthesize with respect to the spectrogram bins.
  BandSpectra synthesize_adjoint(const std::vector<double>& grad, const BandSpectra& like) const;

  // synthesize() as a differentiable map from [2C, F, T] to [length].
  template <typename T>
  nn::LinearOperator<T> reconstruction(const BandSpectra& like) const;

  const dsp::PqmfBank& bank() const { return *bank_; }
  const dsp::StftConfig& stft_config() const { return stft_; }
  int delay() const { return bank_->delay(); }
  int num_bands() const { return bank_->num_bands(); }

 private:
  const dsp::PqmfBank* bank_;
  dsp::StftConfig stft_;
};

}  // namespace mbtf::mbtfnet
