#pragma once

#include <vector>

#include "mbtf/dsp/audio.hpp"

namespace mbtf::dsp {

enum class Window { hann, rectangular };

struct StftConfig {
  int frame_len = 256;
  int hop = 128;
  int fft_size = 256;
  Window window = Window::hann;
  // Reflect-pad frame_len/2 on both sides (zero-pad when the signal is too
  // short to reflect) and trim after the inverse.
  bool center = true;

  void validate() const;
  int pad() const { return center ? frame_len / 2 : 0; }
  int frames_for(std::size_t n) const;
};

std::vector<double> make_window(Window w, int n);

ComplexSpectrogram stft(const AudioBuffer& audio, const StftConfig& cfg = {});
ComplexSpectrogram stft(const std::vector<double>& x, int sample_rate, const StftConfig& cfg = {});

// Window-square normalized overlap-add; returns spec.length samples.
AudioBuffer istft(const ComplexSpectrogram& spec, Window window = Window::hann);

// Adjoint of istft as a linear map from spectrogram bins (real and imaginary
// parts as independent coordinates) to samples. `like` supplies the geometry.
ComplexSpectrogram istft_adjoint(const std::vector<double>& grad, const ComplexSpectrogram& like,
                                 Window window = Window::hann);

}  // namespace mbtf::dsp
