#include <cmath>

#include "doctest.h"
#include "mbtf/error.hpp"
#include "mbtf/mbtfnet/mbtfnet.hpp"
#include "mbtf/mbtfnet/signal_path.hpp"
#include "support/model_helpers.hpp"
#include "support/signals.hpp"

using namespace mbtf;
using namespace mbtf::mbtfnet;
using nn::Tensor;
using helpers::random_input;
using helpers::randomize_buffers;
using helpers::randomize_params;

namespace {

// Largest |a - b| over frames [0, t_end] relative to the largest |a|.
template <typename T>
double prefix_change(const Tensor<T>& a, const Tensor<T>& b, int t_end) {
  double diff = 0.0, ref = 0.0;
  for (int c = 0; c < a.dim(0); ++c) {
    for (int f = 0; f < a.dim(1); ++f) {
      for (int t = 0; t <= t_end; ++t) {
        diff = std::max(diff, static_cast<double>(std::abs(a.at(c, f, t) - b.at(c, f, t))));
        ref = std::max(ref, static_cast<double>(std::abs(a.at(c, f, t))));
      }
    }
  }
  return diff / std::max(ref, 1e-30);
}

template <typename T>
Tensor<T> perturb_after(Tensor<T> x, int t0, std::uint64_t seed) {
  Rng rng(seed);
  for (int c = 0; c < x.dim(0); ++c) {
    for (int f = 0; f < x.dim(1); ++f) {
      for (int t = t0 + 1; t < x.dim(2); ++t) x.at(c, f, t) += static_cast<T>(rng.uniform(-1.0, 1.0));
    }
  }
  return x;
}

}  // namespace

TEST_CASE("config defaults mirror the published topology") {
  const auto cfg = MbtfConfig::paper_default();
  CHECK(cfg.num_bands == 4);
  CHECK(cfg.encoder_channels == std::vector<int>{8, 64, 64, 64, 128, 128});
  CHECK(cfg.encoder_kf == 5);
  CHECK(cfg.encoder_kt == 2);
  CHECK(cfg.tdb_per_block == 6);
  CHECK(cfg.tdb_kf == 3);
  CHECK(cfg.tdb_kt == 3);
  CHECK(cfg.dprnn_layers == 2);
  CHECK(cfg.rnn_units == 256);
  CHECK(cfg.stcm_layers == 1);
  CHECK(cfg.dpcb_count == 4);
  CHECK(cfg.fdb_per_dpcb == 5);
  CHECK(cfg.tdb_per_dpcb == 5);
  CHECK(cfg.freq_bins() == 129);
  CHECK(cfg.encoder_freqs() == std::vector<int>{129, 65, 33, 17, 9, 5, 3});
  CHECK(cfg.latent_k() == 3);
  CHECK(cfg.latent_n() == 128);
  CHECK(cfg.input_channels() == 8);
}

TEST_CASE("config text round trip and validation") {
  auto cfg = MbtfConfig::toy(true);
  cfg.alpha = 0.75;
  const auto back = MbtfConfig::parse(cfg.to_text());
  CHECK(back == cfg);
  CHECK(back.causal);
  CHECK(back.alpha == 0.75);
  CHECK_THROWS_AS(MbtfConfig::parse("num_bands = 4\nbogus_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(MbtfConfig::parse("num_bands = four\n"), ConfigError);
  CHECK_THROWS_AS(MbtfConfig::parse("dpcb_count = 2\n"), ConfigError);
  CHECK_THROWS_AS(MbtfConfig::parse("alpha = 1.5\n"), ConfigError);
  const auto commented = MbtfConfig::parse("# comment\n\ncausal = true   # trailing\n");
  CHECK(commented.causal);
}

TEST_CASE("TDB dilation grows as 2^n") {
  nn::ParamStore<double> store;
  Rng rng(1);
  CHECK(make_tdb(store, "a", 4, 3, 3, 1, false, rng).spec().dt == 2);
  CHECK(make_tdb(store, "b", 4, 3, 3, 3, false, rng).spec().dt == 8);
  CHECK(make_fdb(store, "c", 4, 3, 3, 2, false, rng).spec().df == 4);
  CHECK(make_fdb(store, "c2", 4, 3, 3, 2, false, rng).spec().dt == 1);
  const MbtfConfig cfg = MbtfConfig::paper_default();
  InterBand<float> ib;
  nn::ParamStore<float> fs;
  ib = InterBand<float>(fs, "x.", cfg, rng);
  const auto& tdbs = ib.encoder()[0].tdbs();
  REQUIRE(tdbs.size() == 6);
  for (int n = 1; n <= 6; ++n) CHECK(tdbs[static_cast<std::size_t>(n - 1)].spec().dt == (1 << n));
  for (std::size_t i = 0; i < ib.encoder().size(); ++i) {
    CHECK(ib.encoder()[i].conv_spec().c_out == cfg.encoder_channels[i]);
    CHECK(ib.encoder()[i].conv_spec().sf == 2);
    CHECK(ib.encoder()[i].conv_spec().st == 1);
  }
}

TEST_CASE("TDB: zero path and causality") {
  nn::ParamStore<double> store;
  Rng rng(2);
  auto tdb = make_tdb(store, "t", 3, 3, 3, 2, true, rng);
  nn::Graph<double> g;
  store.zero_all();
  auto x0 = g.constant(Tensor<double>({3, 7, 12}));
  for (double v : tdb(g, x0, false)->value.vec()) CHECK(v == 0.0);

  randomize_params(store, "", 3, 0.5);
  randomize_buffers(store, 4);
  const auto x = random_input<double>({3, 7, 12}, 5);
  const auto y = tdb(g, g.constant(x), false)->value;
  for (int t0 = 0; t0 < 11; ++t0) {
    const auto yp = tdb(g, g.constant(perturb_after(x, t0, 6 + t0)), false)->value;
    CHECK(prefix_change(y, yp, t0) == 0.0);
  }
}

TEST_CASE("encoder shapes: channels, frequency reduction, time preserved") {
  const auto cfg = MbtfConfig::toy();
  nn::ParamStore<float> store;
  Rng rng(3);
  InterBand<float> ib(store, "i.", cfg, rng);
  nn::Graph<float> g;
  Var<float> h = g.constant(random_input<float>({8, 129, 10}, 7));
  const auto freqs = cfg.encoder_freqs();
  for (std::size_t i = 0; i < ib.encoder().size(); ++i) {
    h = ib.encoder()[i](g, h, false);
    CHECK(h->value.dim(0) == cfg.encoder_channels[i]);
    CHECK(h->value.dim(1) == freqs[i + 1]);
    CHECK(h->value.dim(2) == 10);
  }
}

TEST_CASE("bottleneck: shape, zero-projection identity, causality") {
  for (bool causal : {false, true}) {
    auto cfg = MbtfConfig::toy(causal);
    nn::ParamStore<double> store;
    Rng rng(4);
    InterBand<double> ib(store, "i.", cfg, rng);
    nn::Graph<double> g;
    const auto z = random_input<double>({24, 9, 16}, 8);
    const auto out = ib.bottleneck(g, g.constant(z))->value;
    CHECK(out.shape() == z.shape());
    if (causal) {
      for (int t0 : {0, 5, 14}) {
        const auto p = ib.bottleneck(g, g.constant(perturb_after(z, t0, 9)))->value;
        CHECK(prefix_change(out, p, t0) < 1e-12);
      }
    }
    for (const auto& [path, v] : store.params()) {
      if (path.find("_proj.") != std::string::npos || path.find(".expand.") != std::string::npos) v->value.fill(0.0);
    }
    CHECK(ib.bottleneck(g, g.constant(z))->value == z);
  }
}

TEST_CASE("inter-band: latent shape, forced unit mask, band-count check") {
  const auto cfg = MbtfConfig::paper_default();
  nn::ParamStore<float> store;
  Rng rng(5);
  InterBand<float> ib(store, "i.", cfg, rng);
  nn::Graph<float> g;
  const auto y = random_input<float>({8, 129, 6}, 10);
  const auto out = ib(g, g.constant(y), false, true);
  CHECK(out.z->value.shape() == nn::Shape{128, 3, 6});
  CHECK(out.x_r->value == y);
  const auto masked = ib(g, g.constant(y), false);
  CHECK(masked.x_r->value.shape() == y.shape());
  // The mask head starts at zero, so the initial mask is exactly 1.
  CHECK(masked.x_r->value == y);
  CHECK_THROWS_AS(ib(g, g.constant(random_input<float>({6, 129, 6}, 11)), false), ValidationError);
}

TEST_CASE("DPCB: shape, zero-init identity, frequency receptive field") {
  nn::ParamStore<double> store;
  Rng rng(6);
  const int fdbs = 3;
  Dpcb<double> fd(store, "d", 4, fdbs, 0, 3, 3, false, rng);
  Dpcb<double> full(store, "e", 4, 2, 2, 3, 3, false, rng);
  randomize_params(store, "", 12, 0.5);
  randomize_buffers(store, 13);
  nn::Graph<double> g;
  const auto x = random_input<double>({4, 61, 9}, 14);
  const auto y = fd(g, g.constant(x), false)->value;
  CHECK(y.shape() == x.shape());
  CHECK(full(g, g.constant(x), false)->value.shape() == x.shape());

  // Perturb one bin; the output moves exactly within the stacked radius.
  const int f0 = 30;
  int radius = 0;
  for (int n = 1; n <= fdbs; ++n) radius += (3 - 1) / 2 * (1 << n);
  CHECK(1 + 2 * radius == 1 + 2 * (2 + 4 + 8));
  auto xp = x;
  for (int c = 0; c < 4; ++c) {
    for (int t = 0; t < 9; ++t) xp.at(c, f0, t) += 1.0;
  }
  const auto yp = fd(g, g.constant(xp), false)->value;
  int lo = 61, hi = -1;
  for (int f = 0; f < 61; ++f) {
    double d = 0.0;
    for (int c = 0; c < 4; ++c) {
      for (int t = 0; t < 9; ++t) d = std::max(d, std::abs(y.at(c, f, t) - yp.at(c, f, t)));
    }
    if (d > 0.0) {
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
  }
  CHECK(lo == f0 - radius);
  CHECK(hi == f0 + radius);

  store.zero_all();
  CHECK(full(g, g.constant(x), false)->value == x);
}

TEST_CASE("SVE network: shapes, determinism, identity at init") {
  const auto cfg = MbtfConfig::toy();
  nn::ParamStore<float> store;
  Rng rng(7);
  SveNet<float> net(store, cfg, rng);
  nn::Graph<float> g;
  const auto y = random_input<float>({8, 129, 20}, 15);
  const auto a = net(g, g.constant(y), false);
  CHECK(a.x_s->value.shape() == y.shape());
  CHECK(a.z->value.shape() == nn::Shape{24, 9, 20});
  // Mask heads start at zero: both stages pass the input through.
  CHECK(a.x_s->value == y);
  randomize_params(store, "", 16, 0.05);
  const auto b1 = net(g, g.constant(y), false).x_s->value;
  const auto b2 = net(g, g.constant(y), false).x_s->value;
  CHECK(b1 == b2);
  CHECK_FALSE(b1 == y);
}

TEST_CASE("default SVE parameter count") {
  nn::ParamStore<float> store;
  Rng rng(8);
  SveNet<float> net(store, MbtfConfig::paper_default(), rng);
  const std::size_t n = store.parameter_count();
  MESSAGE("default SVE parameters: " << n);
  CHECK(n >= 7'500'000);
  CHECK(n <= 9'500'000);
  CHECK(n == 8'215'888);
}

TEST_CASE("weights topology mismatch names the first offending path") {
  nn::ParamStore<float> store;
  Rng rng(9);
  SveNet<float> net(store, MbtfConfig::toy(), rng);
  auto tensors = store.export_tensors();
  const std::string victim = tensors.begin()->first;
  tensors[victim] = Tensor<float>({1});
  const nn::ModelWeights w(tensors, {});
  try {
    store.load(w);
    FAIL("expected a topology error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(victim) != std::string::npos);
  }
}

TEST_CASE("causal SVE: output frames ignore future input frames") {
  for (bool causal : {true, false}) {
    const auto cfg = MbtfConfig::toy(causal);
    nn::ParamStore<float> store;
    Rng rng(10);
    SveNet<float> net(store, cfg, rng);
    randomize_params(store, "", 17, 0.1);
    randomize_buffers(store, 18);
    nn::Graph<float> g;
    const auto y = random_input<float>({8, 129, 24}, 19);
    const auto base = net(g, g.constant(y), false).x_s->value;
    double worst = 0.0;
    for (int t0 : {0, 7, 15, 22}) {
      const auto p = net(g, g.constant(perturb_after(y, t0, 20 + t0)), false).x_s->value;
      worst = std::max(worst, prefix_change(base, p, t0));
    }
    if (causal) {
      CHECK(worst <= 1e-6);
    } else {
      CHECK(worst > 1e-3);
    }
  }
}

TEST_CASE("signal path: aligned reconstruction and adjoint") {
  const auto cfg = MbtfConfig::toy();
  const SignalPath path(cfg);
  Rng rng(11);
  dsp::AudioBuffer x{sig::vocal(dsp::kNativeRate, 30000), dsp::kNativeRate};
  const auto spec = path.analyze(x);
  CHECK(spec.bands.size() == 4);
  CHECK(spec.bins() == 129);
  CHECK(spec.frames() == 1 + static_cast<int>(spec.band_length) / cfg.hop);
  const auto y = path.synthesize(spec);
  REQUIRE(y.size() == x.size());
  CHECK(sig::snr_db(x.samples, y.samples) >= 40.0);

  const auto op = path.reconstruction<double>(spec);
  const auto t = random_input<double>({8, 129, spec.frames()}, 21);
  nn::Tensor<double> gr({static_cast<int>(x.size())});
  for (auto& e : gr.vec()) e = rng.uniform(-1.0, 1.0);
  const double lhs = nn::dot(op.forward(t), gr);
  const double rhs = nn::dot(t, op.adjoint(gr));
  CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, std::abs(lhs)));
}
