#pragma once

#include <string>
#include <vector>

#include "mbtf/nn/layers.hpp"

namespace mbtf::mbtfnet {

using nn::Graph;
using nn::ParamStore;
using nn::Var;

// Dilated conv + batch norm + PReLU with a residual connection. With
// dilation along time this is a TDB, along frequency an FDB.
template <typename T>
class DilatedBlock {
 public:
  DilatedBlock() = default;
  DilatedBlock(ParamStore<T>& store, const std::string& path, int channels, int kf, int kt, int df, int dt,
               bool causal, Rng& rng);
  Var<T> operator()(Graph<T>& g, const Var<T>& x, bool training) const;
  const nn::LayerSpec& spec() const { return conv_.spec(); }

 private:
  nn::Conv2dLayer<T> conv_;
  nn::BatchNormLayer<T> bn_;
  nn::PReluLayer<T> act_;
};

// Time dilation for the n-th stacked block (n counted from 1).
inline int block_dilation(int n) { return 1 << n; }

template <typename T>
DilatedBlock<T> make_tdb(ParamStore<T>& store, const std::string& path, int channels, int kf, int kt, int n,
                         bool causal, Rng& rng) {
  return DilatedBlock<T>(store, path, channels, kf, kt, 1, block_dilation(n), causal, rng);
}

template <typename T>
DilatedBlock<T> make_fdb(ParamStore<T>& store, const std::string& path, int channels, int kf, int kt, int n,
                         bool causal, Rng& rng) {
  return DilatedBlock<T>(store, path, channels, kf, kt, block_dilation(n), 1, causal, rng);
}

// Dual-path convolution block: stacked FDBs then stacked TDBs.
template <typename T>
class Dpcb {
 public:
  Dpcb() = default;
  Dpcb(ParamStore<T>& store, const std::string& path, int channels, int fdbs, int tdbs, int kf, int kt, bool causal,
       Rng& rng);
  Var<T> operator()(Graph<T>& g, const Var<T>& x, bool training) const;
  const std::vector<DilatedBlock<T>>& fdbs() const { return fdbs_; }
  const std::vector<DilatedBlock<T>>& tdbs() const { return tdbs_; }

 private:
  std::vector<DilatedBlock<T>> fdbs_, tdbs_;
};

// Strided conv block followed by TDBs.
template <typename T>
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(ParamStore<T>& store, const std::string& path, int c_in, int c_out, int kf, int kt, int stride_f,
               int tdbs, int tdb_kf, int tdb_kt, bool causal, Rng& rng);
  Var<T> operator()(Graph<T>& g, const Var<T>& x, bool training) const;
  const nn::LayerSpec& conv_spec() const { return conv_.spec(); }
  const std::vector<DilatedBlock<T>>& tdbs() const { return tdbs_; }

 private:
  nn::Conv2dLayer<T> conv_;
  nn::BatchNormLayer<T> bn_;
  nn::PReluLayer<T> act_;
  std::vector<DilatedBlock<T>> tdbs_;
};

// Transposed-conv block restoring the paired encoder input extent.
template <typename T>
class DecoderBlock {
 public:
  DecoderBlock() = default;
  DecoderBlock(ParamStore<T>& store, const std::string& path, int c_in, int c_out, int kf, int kt, int stride_f,
               int tdbs, int tdb_kf, int tdb_kt, bool causal, Rng& rng);
  Var<T> operator()(Graph<T>& g, const Var<T>& x, int out_f, bool training) const;

 private:
  nn::ConvTranspose2dLayer<T> conv_;
  nn::BatchNormLayer<T> bn_;
  nn::PReluLayer<T> act_;
  std::vector<DilatedBlock<T>> tdbs_;
};

// Recurrence across frequency (bidirectional) then across time
// (unidirectional when causal), each with a projection and residual.
template <typename T>
class DprnnLayer {
 public:
  DprnnLayer() = default;
  DprnnLayer(ParamStore<T>& store, const std::string& path, int channels, int units, bool causal, Rng& rng);
  Var<T> operator()(Graph<T>& g, const Var<T>& z) const;

 private:
  bool causal_ = false;
  nn::GruLayer<T> freq_fwd_, freq_bwd_, time_fwd_, time_bwd_;
  nn::LinearLayer<T> freq_proj_, time_proj_;
};

// Squeezed temporal convolution module over the flattened [N*K] feature
// axis: pointwise squeeze, dilated depthwise temporal convs, pointwise expand.
template <typename T>
class Stcm {
 public:
  Stcm() = default;
  Stcm(ParamStore<T>& store, const std::string& path, int features, int channels, int depth, bool causal, Rng& rng);
  Var<T> operator()(Graph<T>& g, const Var<T>& z) const;

 private:
  nn::Conv2dLayer<T> squeeze_, expand_;
  nn::PReluLayer<T> act_in_;
  std::vector<nn::Conv2dLayer<T>> dw_;
  std::vector<nn::PReluLayer<T>> dw_act_;
};

}  // namespace mbtf::mbtfnet
