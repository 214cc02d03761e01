#pragma once

#include <vector>

#include "mbtf/dsp/audio.hpp"

namespace mbtf::dsp {

inline constexpr double kChromaMinHz = 60.0;

// Pitch classes indexed C=0 ... B=11 (A=9). Returns 12 x T, row-major by
// pitch class: out[pc * T + t].
struct Chroma {
  std::vector<double> values;
  int frames = 0;
  double at(int pc, int t) const { return values[static_cast<std::size_t>(pc) * frames + t]; }
};

int pitch_class(double hz, double tuning_ref = 440.0);

Chroma chroma(const ComplexSpectrogram& spec, double tuning_ref = 440.0);

}  // namespace mbtf::dsp
