#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mbtf/dsp/audio.hpp"
#include "mbtf/ipe/pipeline.hpp"
#include "mbtf/nn/adam.hpp"
#include "mbtf/train/losses.hpp"
#include "mbtf/train/schedule.hpp"

namespace mbtf::train {

struct TrainItem {
  dsp::AudioBuffer noisy;    // mixture without backing vocals
  dsp::AudioBuffer clean;    // target vocal
  dsp::AudioBuffer backing;  // optional, already scaled; added to `noisy` in the ipe stage
  dsp::AudioBuffer enroll;   // ipe stage: clean recording of the target singer
};

struct TrainConfig {
  Stage stage = Stage::sve;
  long steps = 100;
  std::uint64_t seed = 0;
  ScheduleConfig schedule;
  nn::AdamConfig adam;
  double backing_probability = 0.5;
  std::function<void(const LossReport&)> on_step;
};

// Optimizer moments plus the number of completed steps.
struct TrainState {
  nn::Adam<float> optimizer;
  long step = 0;
};

struct TrainResult {
  std::vector<LossReport> curve;
  TrainState state;
  std::optional<double> lambda_t;                // ipe stage
  std::optional<ipe::CleanlinessStats> stats;    // ipe stage
};

// Single-utterance steps over `items`, visited in a fresh seeded order each
// epoch. Item order and backing draws depend only on the seed and the global
// step, so resuming from a checkpoint continues the same sequence. The sve stage trains "sve/" only. The ipe stage freezes "sve/"
// (ConfigError unless model.sve_trained), derives the cleanliness statistics
// from the training items, and estimates lambda_t from the chunk scores of
// the final epoch; both are stored on the model.
TrainResult train_toy(ipe::Model& model, const std::vector<TrainItem>& items, const TrainConfig& cfg,
                      const TrainState* resume = nullptr);

// Weights with optimizer moments under "optim/<path>.m" / ".v" and the step
// count in metadata.
nn::ModelWeights checkpoint(const ipe::Model& model, const TrainState& state, Stage stage);
TrainState restore_state(const nn::ModelWeights& checkpoint);

// Mean loss over consecutive windows of `window` steps (a trailing partial
// window is dropped).
std::vector<double> window_means(const std::vector<LossReport>& curve, std::size_t window);

}  // namespace mbtf::train
