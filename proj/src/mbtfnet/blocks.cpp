#include "mbtf/mbtfnet/blocks.hpp"

namespace mbtf::mbtfnet {

using nn::LayerKind;
using nn::LayerSpec;

namespace {

LayerSpec make_spec(int c_in, int c_out, int kf, int kt, int sf, int df, int dt, bool causal, int groups = 1) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.c_in = c_in;
  s.c_out = c_out;
  s.kf = kf;
  s.kt = kt;
  s.sf = sf;
  s.df = df;
  s.dt = dt;
  s.causal = causal;
  s.groups = groups;
  return s;
}

std::string idx(const std::string& base, std::size_t i) { return base + "." + std::to_string(i); }

}  // namespace

template <typename T>
DilatedBlock<T>::DilatedBlock(ParamStore<T>& store, const std::string& path, int channels, int kf, int kt, int df,
                              int dt, bool causal, Rng& rng)
    : conv_(store, path + ".conv", make_spec(channels, channels, kf, kt, 1, df, dt, causal), rng),
      bn_(store, path + ".bn", channels),
      act_(store, path + ".act", channels) {}

template <typename T>
Var<T> DilatedBlock<T>::operator()(Graph<T>& g, const Var<T>& x, bool training) const {
  return nn::add(g, x, act_(g, bn_(g, conv_(g, x), training)));
}

template <typename T>
Dpcb<T>::Dpcb(ParamStore<T>& store, const std::string& path, int channels, int fdbs, int tdbs, int kf, int kt,
              bool causal, Rng& rng) {
  for (int n = 1; n <= fdbs; ++n) fdbs_.push_back(make_fdb(store, idx(path + ".fdb", n - 1), channels, kf, kt, n, causal, rng));
  for (int n = 1; n <= tdbs; ++n) tdbs_.push_back(make_tdb(store, idx(path + ".tdb", n - 1), channels, kf, kt, n, causal, rng));
}

template <typename T>
Var<T> Dpcb<T>::operator()(Graph<T>& g, const Var<T>& x, bool training) const {
  Var<T> h = x;
  for (const auto& b : fdbs_) h = b(g, h, training);
  for (const auto& b : tdbs_) h = b(g, h, training);
  return h;
}

template <typename T>
EncoderBlock<T>::EncoderBlock(ParamStore<T>& store, const std::string& path, int c_in, int c_out, int kf, int kt,
                              int stride_f, int tdbs, int tdb_kf, int tdb_kt, bool causal, Rng& rng)
    : conv_(store, path + ".conv", make_spec(c_in, c_out, kf, kt, stride_f, 1, 1, causal), rng),
      bn_(store, path + ".bn", c_out),
      act_(store, path + ".act", c_out) {
  for (int n = 1; n <= tdbs; ++n) {
    tdbs_.push_back(make_tdb(store, idx(path + ".tdb", n - 1), c_out, tdb_kf, tdb_kt, n, causal, rng));
  }
}

template <typename T>
Var<T> EncoderBlock<T>::operator()(Graph<T>& g, const Var<T>& x, bool training) const {
  Var<T> h = act_(g, bn_(g, conv_(g, x), training));
  for (const auto& b : tdbs_) h = b(g, h, training);
  return h;
}

template <typename T>
DecoderBlock<T>::DecoderBlock(ParamStore<T>& store, const std::string& path, int c_in, int c_out, int kf, int kt,
                              int stride_f, int tdbs, int tdb_kf, int tdb_kt, bool causal, Rng& rng) {
  LayerSpec s = make_spec(c_in, c_out, kf, kt, stride_f, 1, 1, causal);
  s.kind = LayerKind::conv_transpose2d;
  conv_ = nn::ConvTranspose2dLayer<T>(store, path + ".deconv", s, rng);
  bn_ = nn::BatchNormLayer<T>(store, path + ".bn", c_out);
  act_ = nn::PReluLayer<T>(store, path + ".act", c_out);
  for (int n = 1; n <= tdbs; ++n) {
    tdbs_.push_back(make_tdb(store, idx(path + ".tdb", n - 1), c_out, tdb_kf, tdb_kt, n, causal, rng));
  }
}

template <typename T>
Var<T> DecoderBlock<T>::operator()(Graph<T>& g, const Var<T>& x, int out_f, bool training) const {
  Var<T> h = act_(g, bn_(g, conv_(g, x, out_f, x->value.dim(2)), training));
  for (const auto& b : tdbs_) h = b(g, h, training);
  return h;
}

template <typename T>
DprnnLayer<T>::DprnnLayer(ParamStore<T>& store, const std::string& path, int channels, int units, bool causal,
                          Rng& rng)
    : causal_(causal),
      freq_fwd_(store, path + ".freq_fwd", channels, units, rng),
      freq_bwd_(store, path + ".freq_bwd", channels, units, rng),
      freq_proj_(store, path + ".freq_proj", 2 * units, channels, rng) {
  time_fwd_ = nn::GruLayer<T>(store, path + ".time_fwd", channels, units, rng);
  if (!causal) time_bwd_ = nn::GruLayer<T>(store, path + ".time_bwd", channels, units, rng);
  time_proj_ = nn::LinearLayer<T>(store, path + ".time_proj", causal ? units : 2 * units, channels, rng);
}

template <typename T>
Var<T> DprnnLayer<T>::operator()(Graph<T>& g, const Var<T>& z) const {
  const int n = z->value.dim(0), k = z->value.dim(1), t = z->value.dim(2);
  // Across frequency: batch over frames, sequence over K.
  Var<T> seq = nn::permute3(g, z, {2, 1, 0});
  Var<T> h = nn::concat_last(g, std::vector<Var<T>>{freq_fwd_(g, seq), freq_bwd_(g, seq, nullptr, true)});
  h = nn::reshape(g, h, {t * k, h->value.dim(2)});
  h = nn::reshape(g, freq_proj_(g, h), {t, k, n});
  Var<T> z1 = nn::add(g, z, nn::permute3(g, h, {2, 1, 0}));
  // Across time: batch over frequency positions, sequence over T.
  seq = nn::permute3(g, z1, {1, 2, 0});
  h = causal_ ? time_fwd_(g, seq)
              : nn::concat_last(g, std::vector<Var<T>>{time_fwd_(g, seq), time_bwd_(g, seq, nullptr, true)});
  h = nn::reshape(g, h, {k * t, h->value.dim(2)});
  h = nn::reshape(g, time_proj_(g, h), {k, t, n});
  return nn::add(g, z1, nn::permute3(g, h, {2, 0, 1}));
}

template <typename T>
Stcm<T>::Stcm(ParamStore<T>& store, const std::string& path, int features, int channels, int depth, bool causal,
              Rng& rng)
    : squeeze_(store, path + ".squeeze", make_spec(features, channels, 1, 1, 1, 1, 1, causal), rng),
      expand_(store, path + ".expand", make_spec(channels, features, 1, 1, 1, 1, 1, causal), rng),
      act_in_(store, path + ".act_in", channels) {
  for (int d = 0; d < depth; ++d) {
    dw_.emplace_back(store, idx(path + ".dw", d), make_spec(channels, channels, 1, 3, 1, 1, 1 << d, causal, channels),
                     rng);
    dw_act_.emplace_back(store, idx(path + ".dw_act", d), channels);
  }
}

template <typename T>
Var<T> Stcm<T>::operator()(Graph<T>& g, const Var<T>& z) const {
  const auto shape = z->value.shape();
  Var<T> h = nn::reshape(g, z, {shape[0] * shape[1], 1, shape[2]});
  h = act_in_(g, squeeze_(g, h));
  for (std::size_t i = 0; i < dw_.size(); ++i) h = nn::add(g, h, dw_act_[i](g, dw_[i](g, h)));
  h = nn::reshape(g, expand_(g, h), shape);
  return nn::add(g, z, h);
}

#define MBTF_INSTANTIATE(T)      \
  template class DilatedBlock<T>; \
  template class Dpcb<T>;         \
  template class EncoderBlock<T>; \
  template class DecoderBlock<T>; \
  template class DprnnLayer<T>;   \
  template class Stcm<T>;

MBTF_INSTANTIATE(float)
MBTF_INSTANTIATE(double)
#undef MBTF_INSTANTIATE

}  // namespace mbtf::mbtfnet
