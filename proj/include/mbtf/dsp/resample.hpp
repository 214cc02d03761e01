#pragma once

#include <vector>

#include "mbtf/dsp/audio.hpp"

namespace mbtf::dsp {

// Band-limited interpolation at positions m*step for m = 0 .. floor((N-1)/step),
// using a polyphase windowed-sinc table. step > 1 lowers the cutoff to 1/step
// of Nyquist to suppress aliasing.
std::vector<double> resample_step(const std::vector<double>& x, double step);

AudioBuffer resample(const AudioBuffer& audio, int target_rate);

// Resampling pitch shift by 2^(semitones/12); duration shrinks by the same factor.
AudioBuffer pitch_shift_semitones(const AudioBuffer& audio, int semitones);

}  // namespace mbtf::dsp
