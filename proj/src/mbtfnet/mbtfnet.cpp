#include "mbtf/mbtfnet/mbtfnet.hpp"

#include "mbtf/error.hpp"

namespace mbtf::mbtfnet {

using nn::LayerKind;
using nn::LayerSpec;

namespace {

LayerSpec pointwise(int c_in, int c_out) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.c_in = c_in;
  s.c_out = c_out;
  return s;
}

std::string idx(const std::string& base, std::size_t i) { return base + "." + std::to_string(i); }

}  // namespace

template <typename T>
void zero_layer(nn::Conv2dLayer<T>& layer) {
  layer.weight()->value.fill(T(0));
  if (layer.bias()) layer.bias()->value.fill(T(0));
}

template <typename T>
InterBand<T>::InterBand(ParamStore<T>& store, const std::string& path, const MbtfConfig& cfg, Rng& rng)
    : cfg_(cfg), freqs_(cfg.encoder_freqs()) {
  cfg.validate();
  const auto& ch = cfg.encoder_channels;
  const std::size_t blocks = ch.size();
  for (std::size_t i = 0; i < blocks; ++i) {
    const int c_in = i == 0 ? cfg.input_channels() : ch[i - 1];
    enc_.emplace_back(store, idx(path + "enc", i), c_in, ch[i], cfg.encoder_kf, cfg.encoder_kt, cfg.freq_strides[i],
                      cfg.tdb_per_block, cfg.tdb_kf, cfg.tdb_kt, cfg.causal, rng);
  }
  const int n = cfg.latent_n();
  for (int l = 0; l < cfg.dprnn_layers; ++l) {
    dprnn_.emplace_back(store, idx(path + "dprnn", l), n, cfg.rnn_units, cfg.causal, rng);
  }
  for (int l = 0; l < cfg.stcm_layers; ++l) {
    stcm_.emplace_back(store, idx(path + "stcm", l), n * cfg.latent_k(), cfg.stcm_channels, cfg.stcm_depth, cfg.causal,
                       rng);
  }
  for (std::size_t j = 0; j < blocks; ++j) {
    const int c_out = j == 0 ? cfg.input_channels() : ch[j - 1];
    dec_.emplace_back(store, idx(path + "dec", j), 2 * ch[j], c_out, cfg.encoder_kf, cfg.encoder_kt,
                      cfg.freq_strides[j], cfg.tdb_per_block, cfg.tdb_kf, cfg.tdb_kt, cfg.causal, rng);
  }
  head_ = nn::Conv2dLayer<T>(store, path + "mask_head", pointwise(cfg.input_channels(), cfg.input_channels()), rng);
  zero_layer(head_);
}

template <typename T>
Var<T> InterBand<T>::bottleneck(Graph<T>& g, const Var<T>& z) const {
  Var<T> h = z;
  for (const auto& l : dprnn_) h = l(g, h);
  for (const auto& s : stcm_) h = s(g, h);
  return h;
}

template <typename T>
typename InterBand<T>::Output InterBand<T>::operator()(Graph<T>& g, const Var<T>& y, bool training,
                                                       bool force_unit_mask) const {
  const auto& shape = y->value.shape();
  if (shape.size() != 3 || shape[0] != cfg_.input_channels() || shape[1] != cfg_.freq_bins()) {
    throw ValidationError("inter-band input: expected [" + std::to_string(cfg_.input_channels()) + ", " +
                          std::to_string(cfg_.freq_bins()) + ", T] for " + std::to_string(cfg_.num_bands) +
                          " bands, got " + nn::shape_str(shape));
  }
  std::vector<Var<T>> skips;
  Var<T> h = y;
  for (const auto& e : enc_) {
    h = e(g, h, training);
    skips.push_back(h);
  }
  Output out;
  out.z = h;
  Var<T> d = bottleneck(g, h);
  for (std::size_t j = dec_.size(); j-- > 0;) {
    d = dec_[j](g, nn::concat0(g, std::vector<Var<T>>{d, skips[j]}), freqs_[j], training);
  }
  out.x_r = force_unit_mask ? y : nn::apply_complex_mask(g, head_(g, d), y);
  return out;
}

template <typename T>
IntraBand<T>::IntraBand(ParamStore<T>& store, const std::string& path, const MbtfConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const int nk = cfg.latent_n() * cfg.latent_k();
  const int p = cfg.z_adapter_channels;
  const int w = cfg.dpcb_width;
  for (int i = 0; i < cfg.num_bands; ++i) {
    const std::string b = idx(path + "band", i);
    adapter_.emplace_back(store, b + ".adapter", pointwise(nk, p * cfg.freq_bins()), rng);
    in_.emplace_back(store, b + ".in", pointwise(2 + p, w), rng);
    dpcb_.emplace_back(store, b + ".dpcb", w, cfg.fdb_per_dpcb, cfg.tdb_per_dpcb, cfg.dpcb_kf, cfg.dpcb_kt, cfg.causal,
                       rng);
    head_.emplace_back(store, b + ".mask_head", pointwise(w, 2), rng);
    zero_layer(head_.back());
  }
  const int c2 = cfg.input_channels();
  merge_in_ = nn::Conv2dLayer<T>(store, path + "merge.in", pointwise(c2, w), rng);
  merge_ = Dpcb<T>(store, path + "merge.dpcb", w, cfg.fdb_per_dpcb, cfg.tdb_per_dpcb, cfg.dpcb_kf, cfg.dpcb_kt,
                   cfg.causal, rng);
  merge_head_ = nn::Conv2dLayer<T>(store, path + "merge.mask_head", pointwise(w, c2), rng);
  zero_layer(merge_head_);
}

template <typename T>
Var<T> IntraBand<T>::operator()(Graph<T>& g, const Var<T>& x, const Var<T>& cond, bool training) const {
  const int f = x->value.dim(1), t = x->value.dim(2);
  const int n = cond->value.dim(0), k = cond->value.dim(1);
  if (cond->value.dim(2) != t) {
    throw ValidationError("intra-band: latent has " + std::to_string(cond->value.dim(2)) + " frames, input has " +
                          std::to_string(t));
  }
  const Var<T> flat = nn::reshape(g, cond, {n * k, 1, t});
  std::vector<Var<T>> bands;
  for (int i = 0; i < cfg_.num_bands; ++i) {
    const auto& a = adapter_[static_cast<std::size_t>(i)];
    const Var<T> zi = nn::reshape(g, a(g, flat), {cfg_.z_adapter_channels, f, t});
    const Var<T> xi = nn::slice0(g, x, 2 * i, 2 * i + 2);
    Var<T> h = in_[static_cast<std::size_t>(i)](g, nn::concat0(g, std::vector<Var<T>>{xi, zi}));
    h = dpcb_[static_cast<std::size_t>(i)](g, h, training);
    bands.push_back(nn::apply_complex_mask(g, head_[static_cast<std::size_t>(i)](g, h), xi));
  }
  const Var<T> xc = nn::concat0(g, bands);
  Var<T> h = merge_(g, merge_in_(g, xc), training);
  return nn::apply_complex_mask(g, merge_head_(g, h), xc);
}

template <typename T>
SveNet<T>::SveNet(ParamStore<T>& store, const MbtfConfig& cfg, Rng& rng, const std::string& prefix)
    : cfg_(cfg), inter_(store, prefix + "inter.", cfg, rng), intra_(store, prefix + "intra.", cfg, rng) {}

template <typename T>
SveVars<T> SveNet<T>::operator()(Graph<T>& g, const Var<T>& y, bool training, bool force_unit_mask) const {
  auto ib = inter_(g, y, training, force_unit_mask);
  SveVars<T> out;
  out.x_r = ib.x_r;
  out.z = ib.z;
  out.x_s = intra_(g, ib.x_r, ib.z, training);
  return out;
}

#define MBTF_INSTANTIATE(T)                                 \
  template void zero_layer(nn::Conv2dLayer<T>&);            \
  template class InterBand<T>;                              \
  template class IntraBand<T>;                              \
  template class SveNet<T>;

MBTF_INSTANTIATE(float)
MBTF_INSTANTIATE(double)
#undef MBTF_INSTANTIATE

}  // namespace mbtf::mbtfnet
