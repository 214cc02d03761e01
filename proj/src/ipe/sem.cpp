#include "mbtf/ipe/sem.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "mbtf/dsp/resample.hpp"
#include "mbtf/dsp/stft.hpp"
#include "mbtf/error.hpp"
#include "mbtf/nn/weights.hpp"
#include "mbtf/rng.hpp"

namespace mbtf::ipe {

namespace {

constexpr int kFrame = 1024;
constexpr int kHop = 512;
constexpr double kMelLo = 60.0;
constexpr double kMelHi = 16000.0;
constexpr double kLogFloor = 1e-10;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

SpeakerEmbedding SpeakerEmbedding::ones() {
  SpeakerEmbedding e;
  e.values.assign(kEmbeddingDim, 1.0);
  return e;
}

void SpeakerEmbedding::validate() const {
  if (values.size() != static_cast<std::size_t>(kEmbeddingDim)) {
    throw ValidationError("speaker embedding must have dimension " + std::to_string(kEmbeddingDim) + ", got " +
                          std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("speaker embedding contains a non-finite value");
  }
}

double SpeakerEmbedding::cosine(const SpeakerEmbedding& other) const {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < values.size() && i < other.values.size(); ++i) {
    ab += values[i] * other.values[i];
    aa += values[i] * values[i];
    bb += other.values[i] * other.values[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

std::vector<std::vector<double>> mel_filterbank(int bands, int n_fft, int sample_rate, double f_lo, double f_hi) {
  const int bins = n_fft / 2 + 1;
  const double m_lo = hz_to_mel(f_lo), m_hi = hz_to_mel(f_hi);
  std::vector<double> edges(static_cast<std::size_t>(bands + 2));
  for (int i = 0; i < bands + 2; ++i) edges[static_cast<std::size_t>(i)] = mel_to_hz(m_lo + (m_hi - m_lo) * i / (bands + 1));
  std::vector<std::vector<double>> fb(static_cast<std::size_t>(bands), std::vector<double>(static_cast<std::size_t>(bins)));
  for (int b = 0; b < bands; ++b) {
    const double lo = edges[static_cast<std::size_t>(b)], mid = edges[static_cast<std::size_t>(b + 1)],
                 hi = edges[static_cast<std::size_t>(b + 2)];
    for (int k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * sample_rate / n_fft;
      double w = 0.0;
      if (hz > lo && hz <= mid) w = (hz - lo) / (mid - lo);
      else if (hz > mid && hz < hi) w = (hi - hz) / (hi - mid);
      fb[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)] = w;
    }
  }
  return fb;
}

ToySpeakerEncoder::ToySpeakerEncoder(std::uint64_t seed)
    : mel_(mel_filterbank(kMelBands, kFrame, dsp::kNativeRate, kMelLo, kMelHi)) {
  Rng rng(seed);
  const int in = 2 * kMelBands;
  projection_.resize(static_cast<std::size_t>(kEmbeddingDim) * in);
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& w : projection_) w = s * rng.normal();
}

std::vector<double> ToySpeakerEncoder::features(const dsp::AudioBuffer& input) const {
  input.validate();
  const dsp::AudioBuffer audio =
      input.sample_rate == dsp::kNativeRate ? input : dsp::resample(input, dsp::kNativeRate);
  if (audio.duration() < kMinSeconds) {
    throw LengthError("speaker encoder needs at least " + std::to_string(kMinSeconds) + " s of audio, got " +
                      std::to_string(audio.duration()) + " s");
  }
  dsp::StftConfig cfg;
  cfg.frame_len = kFrame;
  cfg.hop = kHop;
  cfg.fft_size = kFrame;
  const auto spec = dsp::stft(audio, cfg);
  const int bins = spec.num_bins();
  std::vector<double> sum(kMelBands, 0.0), sum2(kMelBands, 0.0);
  std::vector<double> power(static_cast<std::size_t>(bins));
  for (int t = 0; t < spec.frames; ++t) {
    for (int k = 0; k < bins; ++k) power[static_cast<std::size_t>(k)] = std::norm(spec.at(t, k));
    for (int b = 0; b < kMelBands; ++b) {
      double e = 0.0;
      const auto& w = mel_[static_cast<std::size_t>(b)];
      for (int k = 0; k < bins; ++k) e += w[static_cast<std::size_t>(k)] * power[static_cast<std::size_t>(k)];
      const double l = std::log(e + kLogFloor);
      sum[static_cast<std::size_t>(b)] += l;
      sum2[static_cast<std::size_t>(b)] += l * l;
    }
  }
  const double n = spec.frames;
  std::vector<double> feat(2 * kMelBands);
  double centre = 0.0;
  for (int b = 0; b < kMelBands; ++b) {
    const double m = sum[static_cast<std::size_t>(b)] / n;
    feat[static_cast<std::size_t>(b)] = m;
    centre += m / kMelBands;
    const double var = std::max(0.0, sum2[static_cast<std::size_t>(b)] / n - m * m);
    feat[static_cast<std::size_t>(kMelBands + b)] = std::sqrt(var);
  }
  for (int b = 0; b < kMelBands; ++b) feat[static_cast<std::size_t>(b)] -= centre;
  return feat;
}

SpeakerEmbedding ToySpeakerEncoder::encode(const dsp::AudioBuffer& audio) const {
  const auto feat = features(audio);
  SpeakerEmbedding e;
  const std::size_t in = feat.size();
  double norm = 0.0;
  for (int o = 0; o < kEmbeddingDim; ++o) {
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += projection_[static_cast<std::size_t>(o) * in + i] * feat[i];
    e.values[static_cast<std::size_t>(o)] = acc;
    norm += acc * acc;
  }
  if (norm > 0.0) {
    const double inv = 1.0 / std::sqrt(norm);
    for (auto& v : e.values) v *= inv;
  }
  return e;
}

SpeakerEmbedding load_embedding(const std::filesystem::path& path) {
  const auto bytes = nn::read_file_bytes(path);
  if (bytes.size() != sizeof(float) * kEmbeddingDim) {
    throw DataError("embedding file '" + path.string() + "' must hold " + std::to_string(kEmbeddingDim) +
                    " float32 values (" + std::to_string(sizeof(float) * kEmbeddingDim) + " bytes), got " +
                    std::to_string(bytes.size()) + " bytes");
  }
  SpeakerEmbedding e;
  for (int i = 0; i < kEmbeddingDim; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[static_cast<std::size_t>(4 * i + b)]) << (8 * b);
    e.values[static_cast<std::size_t>(i)] = static_cast<double>(std::bit_cast<float>(u));
  }
  try {
    e.validate();
  } catch (const ValidationError& err) {
    throw DataError("embedding file '" + path.string() + "': " + err.what());
  }
  return e;
}

void save_embedding(const std::filesystem::path& path, const SpeakerEmbedding& e) {
  e.validate();
  std::vector<std::uint8_t> bytes(sizeof(float) * kEmbeddingDim);
  for (int i = 0; i < kEmbeddingDim; ++i) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(e.values[static_cast<std::size_t>(i)]));
    for (int b = 0; b < 4; ++b) bytes[static_cast<std::size_t>(4 * i + b)] = static_cast<std::uint8_t>(u >> (8 * b));
  }
  nn::write_file_bytes(path, bytes);
}

}  // namespace mbtf::ipe
