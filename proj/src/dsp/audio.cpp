#include "mbtf/dsp/audio.hpp"

#include <cmath>
#include <string>

#include "mbtf/error.hpp"

namespace mbtf::dsp {

void AudioBuffer::validate() const {
  if (sample_rate <= 0) throw ValidationError("audio: sample rate must be positive, got " + std::to_string(sample_rate));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) throw ValidationError("audio: non-finite sample at index " + std::to_string(i));
  }
}

void SubbandSignals::validate() const {
  if (bands.size() < 2) throw ValidationError("sub-bands: need at least 2 bands");
  if (band_rate <= 0) throw ValidationError("sub-bands: band rate must be positive");
  for (std::size_t k = 0; k < bands.size(); ++k) {
    if (bands[k].size() != bands[0].size()) {
      throw ValidationError("sub-bands: band " + std::to_string(k) + " has length " + std::to_string(bands[k].size()) +
                            ", expected " + std::to_string(bands[0].size()));
    }
    for (double v : bands[k]) {
      if (!std::isfinite(v)) throw ValidationError("sub-bands: non-finite sample in band " + std::to_string(k));
    }
  }
}

void ComplexSpectrogram::validate() const {
  if (frame_len < 1 || hop < 1 || fft_size < 1 || hop > frame_len || frame_len > fft_size) {
    throw ValidationError("spectrogram: inconsistent geometry (frame " + std::to_string(frame_len) + ", hop " +
                          std::to_string(hop) + ", fft " + std::to_string(fft_size) + ")");
  }
  if (bins.size() != static_cast<std::size_t>(frames) * num_bins()) {
    throw ValidationError("spectrogram: " + std::to_string(bins.size()) + " bins for " + std::to_string(frames) +
                          " frames of " + std::to_string(num_bins()));
  }
  for (const auto& b : bins) {
    if (!std::isfinite(b.real()) || !std::isfinite(b.imag())) throw ValidationError("spectrogram: non-finite bin");
  }
}

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double power(const std::vector<double>& x) { return x.empty() ? 0.0 : energy(x) / static_cast<double>(x.size()); }

}  // namespace mbtf::dsp
