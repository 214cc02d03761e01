#pragma once

#include <string>

#include "mbtf/dsp/audio.hpp"

namespace mbtf::dsp {

enum class WavFormat { pcm16, pcm24, float32 };

struct WavReadOptions {
  // Convert other sample rates to the native rate instead of failing.
  bool resample = false;
};

// Reads PCM16, PCM24 or IEEE float32 data and keeps the first channel.
AudioBuffer read_wav(const std::string& path, const WavReadOptions& opt = {});
void write_wav(const std::string& path, const AudioBuffer& audio, WavFormat fmt = WavFormat::float32);

}  // namespace mbtf::dsp
