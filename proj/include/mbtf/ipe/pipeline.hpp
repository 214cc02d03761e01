#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "mbtf/ipe/cleanliness.hpp"
#include "mbtf/ipe/ipe_net.hpp"
#include "mbtf/ipe/stream.hpp"
#include "mbtf/mbtfnet/signal_path.hpp"
#include "mbtf/nn/weights.hpp"

namespace mbtf::ipe {

// Both stages in single precision plus what inference needs besides weights.
// Non-copyable: layers refer to tensors owned by the store.
class Model {
 public:
  explicit Model(const mbtfnet::MbtfConfig& cfg, std::uint64_t seed = 0);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  // Configuration comes from the "topology" metadata entry.
  static Model from_weights(const nn::ModelWeights& w);
  static Model load(const std::filesystem::path& path);
  nn::ModelWeights weights(const std::map<std::string, std::string>& extra_metadata = {}) const;

  const mbtfnet::MbtfConfig& config() const { return cfg_; }
  ParamStore<float>& store() { return *store_; }
  const ParamStore<float>& store() const { return *store_; }
  const mbtfnet::SveNet<float>& sve() const { return sve_; }
  const IpeNet<float>& ipe() const { return ipe_; }
  const mbtfnet::SignalPath& signal_path() const { return path_; }

  std::optional<double> lambda_t;
  std::optional<CleanlinessStats> stats;
  bool sve_trained = false;  // stored as "sve_trained" metadata

 private:
  mbtfnet::MbtfConfig cfg_;
  std::unique_ptr<ParamStore<float>> store_;
  mbtfnet::SveNet<float> sve_;
  IpeNet<float> ipe_;
  mbtfnet::SignalPath path_;
};

enum class EnhanceMode { sve, ipe, pe };

const char* to_string(EnhanceMode m);
EnhanceMode parse_mode(const std::string& s);

struct EnhanceOptions {
  EnhanceMode mode = EnhanceMode::sve;
  std::optional<double> lambda;         // IPE gate; defaults to the trained threshold
  std::optional<double> alpha;          // defaults to the config value
  std::optional<double> chunk_seconds;  // defaults to the config value
  std::optional<SpeakerEmbedding> enrollment;  // required in PE mode
  bool resample = false;
};

struct ChunkDecision {
  int begin_frame = 0;
  int end_frame = 0;
  double score = 0.0;  // mean SNR-module output over the chunk
  bool accepted = false;
  bool too_short = false;  // below the speaker encoder's minimum; never accepted
};

struct EnhanceReport {
  std::vector<ChunkDecision> chunks;
  IpeStreamState state;
};

// Sub-band tensors of one utterance through the SVE stage.
struct SveResult {
  mbtfnet::BandSpectra spectra;
  Tensor<float> y, x_s, z;
};

SveResult run_sve(const Model& model, const dsp::AudioBuffer& audio);

// Frames per IPE chunk: enough that a chunk spans at least `seconds` of audio.
int chunk_frames(const mbtfnet::MbtfConfig& cfg, int band_rate, double seconds);

// Algorithm 1 over an utterance, chunk by chunk with the SNR-module state
// carried across chunks. Each chunk is enhanced with the embedding held
// before its own update; until the first accepted update the stage passes
// X_s through unchanged.
Tensor<float> run_ipe(const Model& model, const SveResult& sve, IpeStreamState& state, int frames_per_chunk,
                      const SpeakerEncoder& sem, std::vector<ChunkDecision>* decisions = nullptr);

// Full pipeline: analysis, SVE, optional IPE/PE stage, synthesis. The output
// has the input length at 44.1 kHz.
dsp::AudioBuffer enhance(const Model& model, const dsp::AudioBuffer& audio, const EnhanceOptions& opts = {},
                         EnhanceReport* report = nullptr, const SpeakerEncoder* sem = nullptr);

const SpeakerEncoder& default_speaker_encoder();

}  // namespace mbtf::ipe
