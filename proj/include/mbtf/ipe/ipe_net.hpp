#pragma once

#include <string>
#include <vector>

#include "mbtf/ipe/sem.hpp"
#include "mbtf/mbtfnet/mbtfnet.hpp"

namespace mbtf::ipe {

using mbtfnet::Graph;
using mbtfnet::ParamStore;
using mbtfnet::Var;
using nn::Tensor;

// Per-frame log(1 + |.|) of every sub-band bin of X_s then Y: [1, T, 2*C*F].
template <typename T>
Tensor<T> snr_features(const Tensor<T>& x_s, const Tensor<T>& y);

// Recurrent state carried between chunks: one hidden vector per GRU layer and
// the last two GRU output frames that the (3,3) convolution looks back on.
template <typename T>
struct SnrState {
  std::vector<Tensor<T>> hidden;  // [1, H] each
  Tensor<T> context;              // [1, H, 2]
};

// Stacked GRU over frames, a (3,3) convolution with one input and two output
// channels over the [hidden, time] plane, a mean over channels and hidden
// units, then a sigmoid applied by the caller. Returns logits [1, 1, T].
template <typename T>
class SnrModule {
 public:
  SnrModule() = default;
  SnrModule(ParamStore<T>& store, const std::string& path, int features, int layers, int hidden, Rng& rng);

  // With `state` the module continues from (and updates) it; without, it
  // starts from zeros.
  Var<T> operator()(Graph<T>& g, const Var<T>& features, SnrState<T>* state = nullptr) const;
  SnrState<T> initial_state() const;
  int hidden() const { return hidden_; }

 private:
  int hidden_ = 0;
  std::vector<nn::GruLayer<T>> gru_;
  nn::Conv2dLayer<T> conv_;
};

// Sigmoid of a logit clamped to [-30, 30], so the score stays strictly in (0, 1).
double snr_probability(double logit);

template <typename T>
std::vector<double> snr_probabilities(const Tensor<T>& logits);

// Learned linear map from a speaker embedding to A in R^{N x K}.
template <typename T>
class EmbedToMap {
 public:
  EmbedToMap() = default;
  EmbedToMap(ParamStore<T>& store, const std::string& path, int n, int k, Rng& rng, bool bias = true);
  Var<T> operator()(Graph<T>& g, const SpeakerEmbedding& e) const;
  Var<T> operator()(Graph<T>& g, const Var<T>& e) const;  // e: [1, 192]

 private:
  int n_ = 0, k_ = 0;
  nn::LinearLayer<T> proj_;
};

template <typename T>
Tensor<T> embedding_tensor(const SpeakerEmbedding& e);

// IPE stage parameters under "<prefix>snr.", "<prefix>embed" and "<prefix>pem.".
template <typename T>
class IpeNet {
 public:
  IpeNet() = default;
  IpeNet(ParamStore<T>& store, const mbtfnet::MbtfConfig& cfg, Rng& rng, const std::string& prefix = "ipe/");

  const SnrModule<T>& snr() const { return snr_; }
  const EmbedToMap<T>& embed() const { return embed_; }

  // A (.) Z with A broadcast over time.
  Var<T> condition(Graph<T>& g, const Var<T>& a, const Var<T>& z) const;
  // PEM: X_p from X_s and a conditioning tensor shaped like Z.
  Var<T> pem(Graph<T>& g, const Var<T>& x_s, const Var<T>& cond, bool training) const;
  Var<T> pem(Graph<T>& g, const Var<T>& x_s, const Var<T>& z, const SpeakerEmbedding& e, bool training) const;

 private:
  SnrModule<T> snr_;
  EmbedToMap<T> embed_;
  mbtfnet::IntraBand<T> pem_;
};

}  // namespace mbtf::ipe
