#include "mbtf/dsp/chroma.hpp"

#include <cmath>

#include "mbtf/error.hpp"

namespace mbtf::dsp {

int pitch_class(double hz, double tuning_ref) {
  const int semis = static_cast<int>(std::lround(12.0 * std::log2(hz / tuning_ref)));
  return ((semis + 9) % 12 + 12) % 12;
}

Chroma chroma(const ComplexSpectrogram& spec, double tuning_ref) {
  if (spec.sample_rate <= 0) throw ValidationError("chroma: spectrogram has no sample rate");
  if (!(tuning_ref > 0.0)) throw ValidationError("chroma: tuning reference must be positive");
  Chroma out;
  out.frames = spec.frames;
  out.values.assign(12 * static_cast<std::size_t>(spec.frames), 0.0);
  const int nb = spec.num_bins();
  std::vector<int> pc(nb, -1);
  for (int k = 1; k < nb; ++k) {
    const double hz = static_cast<double>(k) * spec.sample_rate / spec.fft_size;
    if (hz >= kChromaMinHz) pc[k] = pitch_class(hz, tuning_ref);
  }
  for (int t = 0; t < spec.frames; ++t) {
    double col[12] = {};
    for (int k = 0; k < nb; ++k) {
      if (pc[k] >= 0) col[pc[k]] += std::norm(spec.at(t, k));
    }
    double sq = 0.0;
    for (double v : col) sq += v * v;
    const double inv = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
    for (int p = 0; p < 12; ++p) out.values[static_cast<std::size_t>(p) * spec.frames + t] = col[p] * inv;
  }
  return out;
}

}  // namespace mbtf::dsp
