#include "mbtf/ipe/ipe_net.hpp"

#include <algorithm>
#include <cmath>

#include "mbtf/error.hpp"

namespace mbtf::ipe {

template <typename T>
Tensor<T> snr_features(const Tensor<T>& x_s, const Tensor<T>& y) {
  nn::require_rank(x_s, 3, "SNR module X_s");
  if (x_s.shape() != y.shape()) {
    throw ValidationError("SNR module: X_s " + nn::shape_str(x_s.shape()) + " and Y " + nn::shape_str(y.shape()) +
                          " differ in shape");
  }
  const int bands = x_s.dim(0) / 2, f = x_s.dim(1), t = x_s.dim(2);
  const int half = bands * f;
  Tensor<T> out({1, t, 2 * half});
  for (int b = 0; b < bands; ++b) {
    for (int k = 0; k < f; ++k) {
      for (int i = 0; i < t; ++i) {
        const double mx = std::hypot(static_cast<double>(x_s.at(2 * b, k, i)), static_cast<double>(x_s.at(2 * b + 1, k, i)));
        const double my = std::hypot(static_cast<double>(y.at(2 * b, k, i)), static_cast<double>(y.at(2 * b + 1, k, i)));
        out.at(0, i, b * f + k) = static_cast<T>(std::log1p(mx));
        out.at(0, i, half + b * f + k) = static_cast<T>(std::log1p(my));
      }
    }
  }
  return out;
}

template <typename T>
SnrModule<T>::SnrModule(ParamStore<T>& store, const std::string& path, int features, int layers, int hidden, Rng& rng)
    : hidden_(hidden) {
  if (layers < 1 || hidden < 1 || features < 1) throw ConfigError("SNR module: layers, units and features must be positive");
  for (int l = 0; l < layers; ++l) {
    gru_.emplace_back(store, path + "gru." + std::to_string(l), l == 0 ? features : hidden, hidden, rng);
  }
  nn::LayerSpec s;
  s.kind = nn::LayerKind::conv2d;
  s.c_in = 1;
  s.c_out = 2;
  s.kf = 3;
  s.kt = 3;
  conv_ = nn::Conv2dLayer<T>(store, path + "conv", s, rng);
}

template <typename T>
SnrState<T> SnrModule<T>::initial_state() const {
  SnrState<T> s;
  for (std::size_t l = 0; l < gru_.size(); ++l) s.hidden.emplace_back(nn::Shape{1, hidden_});
  s.context = Tensor<T>({1, hidden_, 2});
  return s;
}

template <typename T>
Var<T> SnrModule<T>::operator()(Graph<T>& g, const Var<T>& features, SnrState<T>* state) const {
  nn::require_rank(features->value, 3, "SNR module features");
  const int t = features->value.dim(1);
  if (t < 1) throw ValidationError("SNR module: no frames");
  SnrState<T> zero = initial_state();
  SnrState<T>& st = state ? *state : zero;
  if (st.hidden.size() != gru_.size()) throw StateError("SNR module: state does not match the layer count");

  Var<T> h = features;
  for (std::size_t l = 0; l < gru_.size(); ++l) {
    h = gru_[l](g, h, g.constant(st.hidden[l]));
    if (state) {
      Tensor<T> last({1, hidden_});
      for (int j = 0; j < hidden_; ++j) last[static_cast<std::size_t>(j)] = h->value.at(0, t - 1, j);
      st.hidden[l] = std::move(last);
    }
  }
  const Var<T> plane = nn::permute3(g, h, {0, 2, 1});  // [1, H, T]
  const Var<T> padded = nn::concat_last(g, std::vector<Var<T>>{g.constant(st.context), plane});
  if (state) {
    Tensor<T> ctx({1, hidden_, 2});
    const auto& pv = padded->value;
    for (int j = 0; j < hidden_; ++j) {
      ctx.at(0, j, 0) = pv.at(0, j, t);
      ctx.at(0, j, 1) = pv.at(0, j, t + 1);
    }
    st.context = std::move(ctx);
  }
  nn::ConvGeometry geo;
  geo.kf = 3;
  geo.kt = 3;
  geo.pf_lo = geo.pf_hi = 1;
  const Var<T> c = nn::conv2d(g, padded, conv_.weight(), conv_.bias(), geo);  // [2, H, T]

  nn::ConvGeometry red;
  red.kf = hidden_;
  Tensor<T> w({1, 2, hidden_, 1});
  w.fill(static_cast<T>(1.0 / (2.0 * hidden_)));
  return nn::conv2d(g, c, g.constant(std::move(w)), Var<T>(), red);  // [1, 1, T]
}

double snr_probability(double logit) {
  const double x = std::clamp(logit, -30.0, 30.0);
  return 1.0 / (1.0 + std::exp(-x));
}

template <typename T>
std::vector<double> snr_probabilities(const Tensor<T>& logits) {
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = snr_probability(static_cast<double>(logits[i]));
  return p;
}

template <typename T>
Tensor<T> embedding_tensor(const SpeakerEmbedding& e) {
  e.validate();
  Tensor<T> t({1, kEmbeddingDim});
  for (int i = 0; i < kEmbeddingDim; ++i) t[static_cast<std::size_t>(i)] = static_cast<T>(e.values[static_cast<std::size_t>(i)]);
  return t;
}

template <typename T>
EmbedToMap<T>::EmbedToMap(ParamStore<T>& store, const std::string& path, int n, int k, Rng& rng, bool bias)
    : n_(n), k_(k), proj_(store, path, kEmbeddingDim, n * k, rng, bias) {}

template <typename T>
Var<T> EmbedToMap<T>::operator()(Graph<T>& g, const SpeakerEmbedding& e) const {
  return (*this)(g, g.constant(embedding_tensor<T>(e)));
}

template <typename T>
Var<T> EmbedToMap<T>::operator()(Graph<T>& g, const Var<T>& e) const {
  nn::require_shape(e->value, {1, kEmbeddingDim}, "speaker embedding");
  return nn::reshape(g, proj_(g, e), {n_, k_});
}

template <typename T>
IpeNet<T>::IpeNet(ParamStore<T>& store, const mbtfnet::MbtfConfig& cfg, Rng& rng, const std::string& prefix)
    : snr_(store, prefix + "snr.", 2 * cfg.num_bands * cfg.freq_bins(), cfg.snr_gru_layers, cfg.snr_rnn_units, rng),
      embed_(store, prefix + "embed", cfg.latent_n(), cfg.latent_k(), rng),
      pem_(store, prefix + "pem.", cfg, rng) {
  if (cfg.embed_dim != kEmbeddingDim) {
    throw ConfigError("embed_dim must be " + std::to_string(kEmbeddingDim) + ", got " + std::to_string(cfg.embed_dim));
  }
}

template <typename T>
Var<T> IpeNet<T>::condition(Graph<T>& g, const Var<T>& a, const Var<T>& z) const {
  return nn::mul_broadcast_last(g, a, z);
}

template <typename T>
Var<T> IpeNet<T>::pem(Graph<T>& g, const Var<T>& x_s, const Var<T>& cond, bool training) const {
  return pem_(g, x_s, cond, training);
}

template <typename T>
Var<T> IpeNet<T>::pem(Graph<T>& g, const Var<T>& x_s, const Var<T>& z, const SpeakerEmbedding& e, bool training) const {
  return pem(g, x_s, condition(g, embed_(g, e), z), training);
}

#define MBTF_INSTANTIATE(T)                                                      \
  template Tensor<T> snr_features(const Tensor<T>&, const Tensor<T>&);           \
  template std::vector<double> snr_probabilities(const Tensor<T>&);              \
  template Tensor<T> embedding_tensor<T>(const SpeakerEmbedding&);               \
  template class SnrModule<T>;                                                   \
  template class EmbedToMap<T>;                                                  \
  template class IpeNet<T>;

MBTF_INSTANTIATE(float)
MBTF_INSTANTIATE(double)
#undef MBTF_INSTANTIATE

}  // namespace mbtf::ipe
