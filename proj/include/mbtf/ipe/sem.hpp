#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mbtf/dsp/audio.hpp"

namespace mbtf::ipe {

inline constexpr int kEmbeddingDim = 192;

struct SpeakerEmbedding {
  std::vector<double> values = std::vector<double>(kEmbeddingDim, 0.0);

  static SpeakerEmbedding ones();
  // Throws ValidationError unless finite with dimension kEmbeddingDim.
  void validate() const;
  double cosine(const SpeakerEmbedding& other) const;

  friend bool operator==(const SpeakerEmbedding&, const SpeakerEmbedding&) = default;
};

// Speaker encoding module: audio in, fixed-size embedding out. Implementations
// are frozen and deterministic.
class SpeakerEncoder {
 public:
  static constexpr double kMinSeconds = 1.0;

  virtual ~SpeakerEncoder() = default;
  // Throws LengthError on less than kMinSeconds of audio.
  virtual SpeakerEmbedding encode(const dsp::AudioBuffer& audio) const = 0;
};

// Built-in stand-in: per-band mean (centred across bands) and standard
// deviation of 48 log-mel energies, through a fixed seeded linear map to 192
// dimensions, L2-normalized. Gain changes only shift the log energies, which
// the centring removes.
class ToySpeakerEncoder : public SpeakerEncoder {
 public:
  static constexpr int kMelBands = 48;
  static constexpr std::uint64_t kDefaultSeed = 0x5E3D0C0DE;

  explicit ToySpeakerEncoder(std::uint64_t seed = kDefaultSeed);
  SpeakerEmbedding encode(const dsp::AudioBuffer& audio) const override;
  // The 96 pooled statistics before projection.
  std::vector<double> features(const dsp::AudioBuffer& audio) const;

 private:
  std::vector<double> projection_;  // [kEmbeddingDim, 2 * kMelBands]
  std::vector<std::vector<double>> mel_;  // triangular weights per band over FFT bins
};

// Triangular HTK-mel filters over the bins of an n_fft real FFT.
std::vector<std::vector<double>> mel_filterbank(int bands, int n_fft, int sample_rate, double f_lo, double f_hi);

// Raw little-endian float32[kEmbeddingDim].
SpeakerEmbedding load_embedding(const std::filesystem::path& path);
void save_embedding(const std::filesystem::path& path, const SpeakerEmbedding& e);

}  // namespace mbtf::ipe
