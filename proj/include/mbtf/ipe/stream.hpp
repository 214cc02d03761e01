#pragma once

#include <functional>
#include <vector>

#include "mbtf/ipe/sem.hpp"

namespace mbtf::ipe {

// Temporary speaker embedding of one stream. Not shareable between streams.
struct IpeStreamState {
  SpeakerEmbedding e = SpeakerEmbedding::ones();
  double lambda = 0.5;
  double alpha = 0.9;
  int updated_count = 0;

  void validate() const;
};

// Mean of the per-frame scores of one chunk.
double chunk_score(const std::vector<double>& frame_scores);

// One gated update: when score >= lambda, E <- alpha*E + (1-alpha)*sem() and
// the count increments. `sem` runs only for accepted chunks. Returns whether
// the chunk was accepted.
bool update_embedding(IpeStreamState& state, double score, const std::function<SpeakerEmbedding()>& sem);

// Trained threshold: arithmetic mean of the logged chunk scores.
double estimate_lambda_t(const std::vector<double>& chunk_scores);

}  // namespace mbtf::ipe
