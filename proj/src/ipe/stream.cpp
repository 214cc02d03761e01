#include "mbtf/ipe/stream.hpp"

#include <cmath>

#include "mbtf/error.hpp"

namespace mbtf::ipe {

void IpeStreamState::validate() const {
  e.validate();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (!std::isfinite(lambda)) throw ValidationError("lambda must be finite");
  if (updated_count < 0) throw ValidationError("negative update count");
}

double chunk_score(const std::vector<double>& frame_scores) {
  if (frame_scores.empty()) throw ValidationError("chunk score of an empty chunk");
  double s = 0.0;
  for (double v : frame_scores) s += v;
  return s / static_cast<double>(frame_scores.size());
}

bool update_embedding(IpeStreamState& state, double score, const std::function<SpeakerEmbedding()>& sem) {
  if (!(score >= state.lambda)) return false;
  const SpeakerEmbedding a = sem();
  a.validate();
  for (std::size_t i = 0; i < state.e.values.size(); ++i) {
    state.e.values[i] = state.alpha * state.e.values[i] + (1.0 - state.alpha) * a.values[i];
  }
  ++state.updated_count;
  return true;
}

double estimate_lambda_t(const std::vector<double>& chunk_scores) {
  if (chunk_scores.empty()) throw ValidationError("cannot estimate a threshold from an empty score log");
  return chunk_score(chunk_scores);
}

}  // namespace mbtf::ipe
