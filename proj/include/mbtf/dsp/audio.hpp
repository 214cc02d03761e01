#pragma once

#include <complex>
#include <vector>

namespace mbtf::dsp {

inline constexpr int kNativeRate = 44100;

struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kNativeRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }

  // Throws ValidationError on non-finite samples or a non-positive rate.
  void validate() const;
};

struct SubbandSignals {
  std::vector<std::vector<double>> bands;
  int band_rate = 0;

  int num_bands() const { return static_cast<int>(bands.size()); }
  std::size_t band_length() const { return bands.empty() ? 0 : bands[0].size(); }
  void validate() const;
};

// Complex F x T grid stored frame-major: bins[t * F + f].
struct ComplexSpectrogram {
  std::vector<std::complex<double>> bins;
  int frames = 0;
  int frame_len = 0;
  int hop = 0;
  int fft_size = 0;
  int sample_rate = 0;
  std::size_t length = 0;  // samples of the analysed signal

  int num_bins() const { return fft_size / 2 + 1; }
  std::complex<double>& at(int t, int f) { return bins[static_cast<std::size_t>(t) * num_bins() + f]; }
  const std::complex<double>& at(int t, int f) const { return bins[static_cast<std::size_t>(t) * num_bins() + f]; }
  void validate() const;
};

double energy(const std::vector<double>& x);
double power(const std::vector<double>& x);

}  // namespace mbtf::dsp
