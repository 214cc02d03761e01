#include "mbtf/nn/layers.hpp"

namespace mbtf::nn {

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv_transpose2d: return "conv_transpose2d";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::prelu: return "prelu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::gru: return "gru";
    case LayerKind::linear: return "linear";
  }
  return "?";
}

void LayerSpec::validate() const {
  if (kf < 1 || kt < 1 || sf < 1 || st < 1 || df < 1 || dt < 1 || groups < 1) {
    throw ValidationError(std::string(to_string(kind)) + ": kernel, stride and dilation must be positive");
  }
  if (c_in < 1 || c_out < 1) throw ValidationError(std::string(to_string(kind)) + ": channels must be positive");
  if (kind == LayerKind::gru && hidden < 1) throw ValidationError("gru: hidden size must be positive");
}

ConvGeometry LayerSpec::geometry() const {
  validate();
  ConvGeometry g = kind == LayerKind::conv_transpose2d ? ConvGeometry::transposed_same(kf, kt, sf, df, dt, causal)
                                                       : ConvGeometry::same(kf, kt, sf, df, dt, causal, groups);
  g.st = st;
  return g;
}

template <typename T>
Conv2dLayer<T>::Conv2dLayer(ParamStore<T>& store, const std::string& path, const LayerSpec& spec, Rng& rng)
    : spec_(spec), geom_(spec.geometry()) {
  const int cig = spec.c_in / spec.groups;
  w_ = store.add(path + ".weight", init_uniform<T>({spec.c_out, cig, spec.kf, spec.kt}, cig * spec.kf * spec.kt, rng));
  if (spec.bias) b_ = store.add(path + ".bias", Tensor<T>({spec.c_out}));
}

template <typename T>
Var<T> Conv2dLayer<T>::operator()(Graph<T>& g, const Var<T>& x) const {
  if (x->value.rank() != 3 || x->value.dim(0) != spec_.c_in) {
    throw ValidationError("conv2d: expected " + std::to_string(spec_.c_in) + " input channels, got shape " +
                          shape_str(x->value.shape()));
  }
  return conv2d(g, x, w_, b_, geom_);
}

template <typename T>
ConvTranspose2dLayer<T>::ConvTranspose2dLayer(ParamStore<T>& store, const std::string& path, const LayerSpec& spec,
                                              Rng& rng)
    : spec_(spec), geom_(spec.geometry()) {
  w_ = store.add(path + ".weight", init_uniform<T>({spec.c_in, spec.c_out, spec.kf, spec.kt},
                                                   spec.c_in * spec.kf * spec.kt / std::max(1, spec.sf * spec.st), rng));
  if (spec.bias) b_ = store.add(path + ".bias", Tensor<T>({spec.c_out}));
}

template <typename T>
Var<T> ConvTranspose2dLayer<T>::operator()(Graph<T>& g, const Var<T>& x, int out_f, int out_t) const {
  return conv_transpose2d(g, x, w_, b_, geom_, out_f, out_t);
}

template <typename T>
BatchNormLayer<T>::BatchNormLayer(ParamStore<T>& store, const std::string& path, int channels) {
  gamma_ = store.add(path + ".gamma", Tensor<T>({channels}, T(1)));
  beta_ = store.add(path + ".beta", Tensor<T>({channels}));
  running_mean_ = &store.add_buffer(path + ".running_mean", Tensor<T>({channels}));
  running_var_ = &store.add_buffer(path + ".running_var", Tensor<T>({channels}, T(1)));
}

template <typename T>
Var<T> BatchNormLayer<T>::operator()(Graph<T>& g, const Var<T>& x, bool training) const {
  BatchNormOptions opt;
  opt.training = training;
  return batch_norm(g, x, gamma_, beta_, *running_mean_, *running_var_, opt);
}

template <typename T>
PReluLayer<T>::PReluLayer(ParamStore<T>& store, const std::string& path, int channels) {
  slope_ = store.add(path + ".slope", Tensor<T>({channels}, static_cast<T>(kInitSlope)));
}

template <typename T>
LinearLayer<T>::LinearLayer(ParamStore<T>& store, const std::string& path, int in, int out, Rng& rng, bool bias) {
  w_ = store.add(path + ".weight", init_uniform<T>({out, in}, in, rng));
  if (bias) b_ = store.add(path + ".bias", Tensor<T>({out}));
}

template <typename T>
GruLayer<T>::GruLayer(ParamStore<T>& store, const std::string& path, int input, int hidden, Rng& rng) {
  // PyTorch-style U(-1/sqrt(H), 1/sqrt(H))
  const double gain = 1.0 / std::sqrt(3.0);
  w_.w_ih = store.add(path + ".w_ih", init_uniform<T>({3 * hidden, input}, hidden, rng, gain));
  w_.w_hh = store.add(path + ".w_hh", init_uniform<T>({3 * hidden, hidden}, hidden, rng, gain));
  w_.b_ih = store.add(path + ".b_ih", Tensor<T>({3 * hidden}));
  w_.b_hh = store.add(path + ".b_hh", Tensor<T>({3 * hidden}));
}

template class Conv2dLayer<float>;
template class Conv2dLayer<double>;
template class ConvTranspose2dLayer<float>;
template class ConvTranspose2dLayer<double>;
template class BatchNormLayer<float>;
template class BatchNormLayer<double>;
template class PReluLayer<float>;
template class PReluLayer<double>;
template class LinearLayer<float>;
template class LinearLayer<double>;
template class GruLayer<float>;
template class GruLayer<double>;

}  // namespace mbtf::nn
