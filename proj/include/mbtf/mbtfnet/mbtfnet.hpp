#pragma once

#include <string>
#include <vector>

#include "mbtf/mbtfnet/blocks.hpp"
#include "mbtf/mbtfnet/config.hpp"

namespace mbtf::mbtfnet {

// U-Net over the stacked sub-band spectrograms [2C, F, T] (real/imag pairs on
// the channel axis) producing a complex ratio mask.
template <typename T>
class InterBand {
 public:
  struct Output {
    Var<T> x_r;  // [2C, F, T]
    Var<T> z;    // [N, K, T], encoder stack output
  };

  InterBand() = default;
  InterBand(ParamStore<T>& store, const std::string& path, const MbtfConfig& cfg, Rng& rng);
  Output operator()(Graph<T>& g, const Var<T>& y, bool training, bool force_unit_mask = false) const;
  Var<T> bottleneck(Graph<T>& g, const Var<T>& z) const;
  const std::vector<EncoderBlock<T>>& encoder() const { return enc_; }

 private:
  MbtfConfig cfg_;
  std::vector<int> freqs_;
  std::vector<EncoderBlock<T>> enc_;
  std::vector<DprnnLayer<T>> dprnn_;
  std::vector<Stcm<T>> stcm_;
  std::vector<DecoderBlock<T>> dec_;  // dec_[j] pairs with enc_[j]
  nn::Conv2dLayer<T> head_;
};

// One DPCB per sub-band over [X_i, adapter_i(cond)] followed by a merge DPCB
// across all bands. Serves as the intra-band module and as the PEM.
template <typename T>
class IntraBand {
 public:
  IntraBand() = default;
  IntraBand(ParamStore<T>& store, const std::string& path, const MbtfConfig& cfg, Rng& rng);
  // x: [2C, F, T]; cond: [N, K, T]. Output has the shape of x.
  Var<T> operator()(Graph<T>& g, const Var<T>& x, const Var<T>& cond, bool training) const;
  const Dpcb<T>& band_dpcb(int i) const { return dpcb_[static_cast<std::size_t>(i)]; }

 private:
  MbtfConfig cfg_;
  std::vector<nn::Conv2dLayer<T>> adapter_, in_, head_;
  std::vector<Dpcb<T>> dpcb_;
  nn::Conv2dLayer<T> merge_in_, merge_head_;
  Dpcb<T> merge_;
};

template <typename T>
struct SveVars {
  Var<T> x_r;
  Var<T> z;
  Var<T> x_s;
};

// SVE stage: inter-band module then the intra-band module. Parameters live
// under "<prefix>inter." and "<prefix>intra.".
template <typename T>
class SveNet {
 public:
  SveNet() = default;
  SveNet(ParamStore<T>& store, const MbtfConfig& cfg, Rng& rng, const std::string& prefix = "sve/");
  SveVars<T> operator()(Graph<T>& g, const Var<T>& y, bool training, bool force_unit_mask = false) const;
  const InterBand<T>& inter() const { return inter_; }
  const IntraBand<T>& intra() const { return intra_; }
  const MbtfConfig& config() const { return cfg_; }

 private:
  MbtfConfig cfg_;
  InterBand<T> inter_;
  IntraBand<T> intra_;
};

// Zero-initializes a 1x1 conv head so the mask it produces starts as identity.
template <typename T>
void zero_layer(nn::Conv2dLayer<T>& layer);

}  // namespace mbtf::mbtfnet
