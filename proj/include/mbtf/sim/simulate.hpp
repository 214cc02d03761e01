#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mbtf/dsp/audio.hpp"
#include "mbtf/rng.hpp"

namespace mbtf::sim {

inline constexpr double kPairSnrLo = -5.0;
inline constexpr double kPairSnrHi = 15.0;
inline constexpr double kBackingSnrLo = 5.0;
inline constexpr double kBackingSnrHi = 10.0;
inline constexpr int kBackingShift = 2;  // semitones
inline constexpr int kBackingCandidates = 10;
inline constexpr double kChromaMaxLagSeconds = 2.0;
inline constexpr double kPeakDbfs = -1.0;

struct MixResult {
  std::vector<double> mixture;
  double scale = 0.0;  // applied to the interference
};

// mixture = signal + scale * interference with
// scale = sqrt(P_signal / (P_interference * 10^(snr_db / 10))).
// Throws ValidationError on unequal lengths, non-finite SNR or zero power.
MixResult mix_at_snr(const std::vector<double>& signal, const std::vector<double>& interference, double snr_db);

// 10 log10(P_signal / P_noise).
double measured_snr_db(const std::vector<double>& signal, const std::vector<double>& noise);

// Loops (shorter input) or crops (longer input) `x` to n samples starting at
// `offset`, wrapping around the end.
std::vector<double> fit_length(const std::vector<double>& x, std::size_t n, std::size_t offset);
// Seeded offset for fit_length: uniform over valid crop starts, or over all
// positions when looping.
std::size_t draw_offset(std::size_t source_len, std::size_t n, Rng& rng);

struct PairDraw {
  bool has_accomp = false;
  bool has_noise = false;
  double snr_accomp_db = 0.0;
  double snr_noise_db = 0.0;
  std::size_t accomp_offset = 0;
  std::size_t noise_offset = 0;
};

struct SimPair {
  dsp::AudioBuffer noisy;
  dsp::AudioBuffer clean;
  PairDraw draw;
  double accomp_scale = 0.0;
  double noise_scale = 0.0;
};

// vocal + accompaniment at a drawn SNR in [-5, 15] dB, then that mixture +
// noise at a second drawn SNR in [-5, 15] dB. Missing sources are skipped.
SimPair simulate_pair(const dsp::AudioBuffer& vocal, const dsp::AudioBuffer* accomp, const dsp::AudioBuffer* noise,
                      Rng& rng);
// Deterministic replay of recorded draws.
SimPair apply_pair(const dsp::AudioBuffer& vocal, const dsp::AudioBuffer* accomp, const dsp::AudioBuffer* noise,
                   const PairDraw& draw);

// Chroma similarity: maximum over lags within +-2 s of the Pearson correlation
// of the overlapping flattened chroma sequences.
double chroma_similarity(const dsp::AudioBuffer& a, const dsp::AudioBuffer& b);

struct BackingChoice {
  std::size_t index = 0;     // into the candidate list
  int shift = 0;             // +-2 semitones
  double snr_db = 0.0;       // lead vs backing, in [5, 10]
  std::size_t offset = 0;    // fit_length offset of the shifted backing
  std::vector<double> scores;
  dsp::AudioBuffer shifted;  // fitted to the lead length
  std::vector<double> mixture;
  double scale = 0.0;
};

// Picks the candidate with the highest chroma similarity (ties to the lowest
// index), shifts it by two semitones in a random direction and mixes it under
// the lead at a drawn SNR in [5, 10] dB.
BackingChoice select_backing(const dsp::AudioBuffer& lead, const std::vector<dsp::AudioBuffer>& candidates, Rng& rng);

// Backing at `snr_db` relative to the lead, after a shift and fit.
struct BackingMix {
  std::vector<double> backing;  // shifted and fitted, before scaling
  double scale = 0.0;
};
BackingMix backing_mix(const dsp::AudioBuffer& lead, const dsp::AudioBuffer& backing, int shift, std::size_t offset,
                       double snr_db);

enum class TestSetKind { without_backing, random_backing, selected_backing };
const char* to_string(TestSetKind k);
TestSetKind parse_kind(const std::string& s);  // "without" | "random" | "selected" (or full names)

struct NamedAudio {
  std::string name;
  dsp::AudioBuffer audio;
};

struct Sources {
  std::vector<NamedAudio> vocals;
  std::vector<NamedAudio> accomps;
  std::vector<NamedAudio> noises;

  // Every *.wav under dir/{vocals,accompaniment,noise}, sorted by file name.
  static Sources load(const std::filesystem::path& dir);
};

// One simulated item; every random draw is recorded so the item can be
// rebuilt without the generator.
struct ManifestRow {
  std::string id;
  TestSetKind kind = TestSetKind::without_backing;
  std::uint64_t seed = 0;
  std::string vocal;
  std::string accomp;  // empty when absent
  std::string noise;
  std::string backing;
  std::size_t accomp_offset = 0;
  std::size_t noise_offset = 0;
  std::size_t backing_offset = 0;
  double snr_accomp_db = 0.0;
  double snr_noise_db = 0.0;
  double snr_backing_db = 0.0;
  int shift = 0;
  int candidate_index = -1;  // position of the chosen backing in the scored candidate list
  double gain = 1.0;         // peak normalization applied to both files
};

struct Manifest {
  std::vector<ManifestRow> rows;

  static const std::vector<std::string>& columns();
  std::string to_tsv() const;
  static Manifest parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);
};

struct SimItem {
  ManifestRow row;
  dsp::AudioBuffer noisy;
  dsp::AudioBuffer clean;
};

// count_per_vocal items per vocal; item i uses derive_seed(seed, i).
std::vector<SimItem> build_test_set(TestSetKind kind, const Sources& sources, int count_per_vocal,
                                    std::uint64_t seed);
// Rebuilds one item from its manifest row alone.
SimItem regenerate(const ManifestRow& row, const Sources& sources);

// Writes noisy/<id>.wav, clean/<id>.wav (float32) and manifest.tsv.
void write_test_set(const std::filesystem::path& dir, const std::vector<SimItem>& items);

}  // namespace mbtf::sim
