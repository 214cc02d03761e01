// Acceptance suite: one line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion ids...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mbtf/dsp/pqmf.hpp"
#include "mbtf/dsp/resample.hpp"
#include "mbtf/dsp/stft.hpp"
#include "mbtf/ipe/pipeline.hpp"
#include "mbtf/nn/layers.hpp"
#include "mbtf/sim/simulate.hpp"
#include "mbtf/train/trainer.hpp"
#include "support/model_helpers.hpp"
#include "support/oracles.hpp"
#include "support/signals.hpp"

using namespace mbtf;
using nn::ConvGeometry;
using nn::Graph;
using nn::Tensor;
using nn::Var;

namespace {

constexpr int kRate = dsp::kNativeRate;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

dsp::AudioBuffer buffer(std::vector<double> x) { return {std::move(x), kRate}; }

std::vector<double> add(std::vector<double> a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

double mean_power(const std::vector<double>& x) { return sig::energy(x) / static_cast<double>(x.size()); }

// `x` rescaled so that ref sits `snr_db` above it.
std::vector<double> at_snr(const std::vector<double>& ref, std::vector<double> x, double snr_db) {
  const double g = std::sqrt(mean_power(ref) / (mean_power(x) * std::pow(10.0, snr_db / 10.0)));
  for (auto& v : x) v *= g;
  return x;
}

double si_snr_db(const std::vector<double>& est, const std::vector<double>& ref) {
  return train::si_snr(est, ref);
}

// ------------------------------------------------------------------ 1

Outcome pqmf_round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  const dsp::PqmfBank& bank = dsp::default_bank(4);
  Rng rng(3);
  const std::size_t n = 2 * kRate;
  Outcome o{true, ""};
  for (const auto& [name, x] : {std::pair{"white", sig::white(n, rng)},
                                std::pair{"sweep", sig::sweep(20.0, 20000.0, kRate, n)},
                                std::pair{"vocal", sig::vocal(kRate, n)}}) {
    std::vector<double> padded = x;
    padded.resize(n + static_cast<std::size_t>(bank.delay()) + 4, 0.0);
    const auto y = bank.synthesis(bank.analysis(buffer(padded))).samples;
    const std::vector<double> aligned(y.begin() + bank.delay(), y.begin() + bank.delay() + static_cast<long>(n));
    const double snr = sig::snr_db(x, aligned);
    o.pass = o.pass && snr >= 40.0;
    o.detail += std::string(name) + " " + fmt(snr, 1) + " dB, ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.pass = o.pass && secs < 5.0;
  o.detail += "runtime " + fmt(secs) + " s";
  return o;
}

// ------------------------------------------------------------------ 2

Outcome stft_round_trip() {
  Rng rng(6);
  const int rate = kRate / 4;
  const auto x = sig::white(static_cast<std::size_t>(rate), rng);
  const auto x2 = sig::vocal(rate, x.size(), 9, 150.0);
  const auto y = dsp::istft(dsp::stft(x, rate)).samples;
  const double snr = sig::snr_db(x, y, 256, x.size() - 256);

  std::vector<double> mix(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) mix[i] = 1.3 * x[i] - 0.7 * x2[i];
  const auto s1 = dsp::stft(x, rate), s2 = dsp::stft(x2, rate), sm = dsp::stft(mix, rate);
  double ferr = 0.0, fref = 0.0;
  for (std::size_t i = 0; i < sm.bins.size(); ++i) {
    const auto e = 1.3 * s1.bins[i] - 0.7 * s2.bins[i];
    ferr = std::max(ferr, std::abs(sm.bins[i] - e));
    fref = std::max(fref, std::abs(e));
  }
  dsp::ComplexSpectrogram r1 = s1, r2 = s1, r3 = s1;
  for (std::size_t i = 0; i < s1.bins.size(); ++i) {
    r1.bins[i] = {rng.normal(), rng.normal()};
    r2.bins[i] = {rng.normal(), rng.normal()};
    r3.bins[i] = 0.4 * r1.bins[i] - 2.1 * r2.bins[i];
  }
  const auto y1 = dsp::istft(r1).samples, y2 = dsp::istft(r2).samples, y3 = dsp::istft(r3).samples;
  double ierr = 0.0, iref = 0.0;
  for (std::size_t i = 0; i < y3.size(); ++i) {
    ierr = std::max(ierr, std::abs(y3[i] - (0.4 * y1[i] - 2.1 * y2[i])));
    iref = std::max(iref, std::abs(y3[i]));
  }
  const double fl = ferr / fref, il = ierr / iref;
  return {snr >= 50.0 && fl <= 1e-10 && il <= 1e-10,
          "interior SNR " + fmt(snr, 1) + " dB, stft linearity " + sci(fl) + ", istft linearity " + sci(il)};
}

// ------------------------------------------------------------------ 3

Var<double> leaf(Tensor<double> t) { return nn::make_leaf(std::move(t), true); }

Var<double> probe(Graph<double>& g, const Var<double>& out, const Tensor<double>& r) {
  return nn::sum(g, nn::mul(g, out, g.constant(r)));
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(11);
  struct Result {
    std::string name;
    double err;
  };
  std::vector<Result> results;
  auto run = [&](const std::string& name, const std::vector<Var<double>>& leaves,
                 const std::function<Var<double>(Graph<double>&)>& build) {
    auto loss = [&] {
      Graph<double> g;
      return build(g)->value[0];
    };
    auto analytic = [&] {
      Graph<double> g;
      g.backward(build(g));
    };
    results.push_back({name, oracle::grad_check(leaves, loss, analytic).max_rel_err});
  };

  const std::vector<std::pair<std::string, ConvGeometry>> convs = {
      {"conv2d causal dilated", ConvGeometry::same(3, 3, 1, 1, 2, true)},
      {"conv2d strided", ConvGeometry::same(5, 2, 2, 1, 1, false)},
      {"conv2d freq-dilated", ConvGeometry::same(3, 3, 1, 2, 1, false)},
      {"conv2d grouped", ConvGeometry::same(1, 3, 1, 1, 2, true, 2)}};
  for (const auto& [name, geo] : convs) {
    auto x = leaf(oracle::random_tensor({2, 7, 6}, rng));
    auto w = leaf(oracle::random_tensor({2, 2 / geo.groups, geo.kf, geo.kt}, rng));
    auto b = leaf(oracle::random_tensor({2}, rng));
    auto r = oracle::random_tensor({2, geo.out_f(7), geo.out_t(6)}, rng);
    run(name, {x, w, b}, [&, geo = geo](Graph<double>& g) { return probe(g, nn::conv2d(g, x, w, b, geo), r); });
  }
  for (bool causal : {true, false}) {
    const auto geo = ConvGeometry::transposed_same(5, 2, 2, 1, 1, causal);
    auto x = leaf(oracle::random_tensor({3, 4, 5}, rng));
    auto w = leaf(oracle::random_tensor({3, 2, 5, 2}, rng));
    auto b = leaf(oracle::random_tensor({2}, rng));
    auto r = oracle::random_tensor({2, 7, 5}, rng);
    run(causal ? "conv-transpose causal" : "conv-transpose", {x, w, b},
        [&](Graph<double>& g) { return probe(g, nn::conv_transpose2d(g, x, w, b, geo, 7, 5), r); });
  }
  for (bool reverse : {false, true}) {
    nn::GruWeights<double> w{leaf(oracle::random_tensor({9, 2}, rng, 0.5)), leaf(oracle::random_tensor({9, 3}, rng, 0.5)),
                             leaf(oracle::random_tensor({9}, rng, 0.5)), leaf(oracle::random_tensor({9}, rng, 0.5))};
    auto x = leaf(oracle::random_tensor({2, 5, 2}, rng));
    auto h0 = leaf(oracle::random_tensor({2, 3}, rng));
    auto r = oracle::random_tensor({2, 5, 3}, rng);
    run(reverse ? "gru reverse" : "gru", {x, h0, w.w_ih, w.w_hh, w.b_ih, w.b_hh},
        [&](Graph<double>& g) { return probe(g, nn::gru(g, x, w, h0, reverse), r); });
  }
  for (bool training : {true, false}) {
    auto x = leaf(oracle::random_tensor({2, 3, 4}, rng));
    auto gm = leaf(oracle::random_tensor({2}, rng));
    auto bt = leaf(oracle::random_tensor({2}, rng));
    auto r = oracle::random_tensor({2, 3, 4}, rng);
    run(training ? "batch norm (train)" : "batch norm (eval)", {x, gm, bt}, [&](Graph<double>& g) {
      Tensor<double> m({2}, 0.1), v({2}, 1.5);
      nn::BatchNormOptions opt;
      opt.training = training;
      return probe(g, nn::batch_norm(g, x, gm, bt, m, v, opt), r);
    });
  }
  {
    auto x = leaf(oracle::random_tensor({2, 3, 4}, rng));
    auto a = leaf(Tensor<double>({2}, {0.25, -0.1}));
    auto r = oracle::random_tensor({2, 3, 4}, rng);
    run("prelu", {x, a}, [&](Graph<double>& g) { return probe(g, nn::prelu(g, x, a), r); });
    run("sigmoid", {x}, [&](Graph<double>& g) { return probe(g, nn::sigmoid(g, x), r); });
  }
  {
    nn::ParamStore<double> store;
    Rng init(4);
    const ipe::EmbedToMap<double> embed(store, "embed", 2, 3, init);
    auto e = leaf(oracle::random_tensor({1, ipe::kEmbeddingDim}, rng));
    std::vector<Var<double>> leaves{e};
    for (const auto& [_, p] : store.params()) leaves.push_back(p);
    auto r = oracle::random_tensor({2, 3}, rng);
    run("embed_to_map", leaves, [&](Graph<double>& g) { return probe(g, embed(g, e), r); });
  }
  {
    const auto ref = oracle::random_tensor({48}, rng);
    auto est = leaf(oracle::random_tensor({48}, rng));
    for (std::size_t i = 0; i < 48; ++i) est->value[i] += 0.8 * ref[i];
    run("loss si-snr", {est}, [&](Graph<double>& g) { return train::si_snr(g, est, ref); });
    const auto x = oracle::random_tensor({4, 3, 5}, rng);
    auto xh = leaf(oracle::random_tensor({4, 3, 5}, rng));
    run("loss cmse", {xh}, [&](Graph<double>& g) { return train::cmse(g, xh, x); });
    const auto target = oracle::random_tensor({1, 1, 6}, rng, 0.5);
    auto logits = leaf(oracle::random_tensor({1, 1, 6}, rng, 2.0));
    run("loss snr-mse", {logits},
        [&](Graph<double>& g) { return nn::mse(g, nn::sigmoid(g, logits), g.constant(target)); });
  }

  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : results) {
    if (r.err >= worst) {
      worst = r.err;
      worst_name = r.name;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < 1e-4 && secs < 60.0, std::to_string(results.size()) + " checks, max rel err " + sci(worst) + " (" +
                                           worst_name + "), runtime " + fmt(secs) + " s"};
}

// ------------------------------------------------------------------ 4

Outcome conv_oracle() {
  Rng rng(21);
  double worst = 0.0;
  const int combos = 32;
  for (int k = 0; k < combos; ++k) {
    ConvGeometry geo;
    geo.kf = 1 + static_cast<int>(rng.index(4));
    geo.kt = 1 + static_cast<int>(rng.index(4));
    geo.sf = 1 + static_cast<int>(rng.index(3));
    geo.st = 1 + static_cast<int>(rng.index(2));
    geo.df = 1 + static_cast<int>(rng.index(3));
    geo.dt = 1 + static_cast<int>(rng.index(4));
    geo.pf_lo = static_cast<int>(rng.index(3));
    geo.pf_hi = static_cast<int>(rng.index(3));
    geo.pt_lo = static_cast<int>(rng.index(4));
    geo.pt_hi = static_cast<int>(rng.index(2));
    geo.groups = 1 + static_cast<int>(rng.index(2));
    const int ci = geo.groups * (1 + static_cast<int>(rng.index(3)));
    const int co = geo.groups * (1 + static_cast<int>(rng.index(3)));
    const int f = 6 + geo.df * geo.kf + static_cast<int>(rng.index(6));
    const int t = 5 + geo.dt * geo.kt + static_cast<int>(rng.index(6));
    const auto x = oracle::random_tensor({ci, f, t}, rng);
    const auto w = oracle::random_tensor({co, ci / geo.groups, geo.kf, geo.kt}, rng);
    const auto b = oracle::random_tensor({co}, rng);
    const auto fast = nn::conv2d_forward(x, w, &b, geo);
    const auto ref = oracle::direct_conv2d(x, w, &b, geo);
    if (fast.shape() != ref.shape()) return {false, "shape mismatch for " + geo.str()};
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(fast[i] - ref[i]));
  }
  return {worst <= 1e-12, std::to_string(combos) + " random geometries, max abs diff " + sci(worst)};
}

// ------------------------------------------------------------------ 5

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

Outcome causality() {
  double worst[2] = {0.0, 0.0};
  for (bool causal : {true, false}) {
    const auto cfg = mbtfnet::MbtfConfig::toy(causal);
    nn::ParamStore<float> store;
    Rng rng(10);
    const mbtfnet::SveNet<float> net(store, cfg, rng);
    helpers::randomize_params(store, "", 17, 0.1);
    helpers::randomize_buffers(store, 18);
    Graph<float> g;
    g.set_grad_enabled(false);
    const auto y = helpers::random_input<float>({cfg.input_channels(), cfg.freq_bins(), 24}, 19);
    const auto base = net(g, g.constant(y), false).x_s->value;
    for (int t0 = 0; t0 < 23; t0 += 3) {
      auto p = y;
      Rng prng(100 + static_cast<std::uint64_t>(t0));
      for (int c = 0; c < p.dim(0); ++c) {
        for (int f = 0; f < p.dim(1); ++f) {
          for (int t = t0 + 1; t < p.dim(2); ++t) p.at(c, f, t) += static_cast<float>(prng.uniform(-1.0, 1.0));
        }
      }
      const auto out = net(g, g.constant(p), false).x_s->value;
      worst[causal ? 0 : 1] = std::max(worst[causal ? 0 : 1], prefix_change(base, out, t0));
      g.clear();
    }
  }
  return {worst[0] <= 1e-6 && worst[1] > 1e-3,
          "causal max rel change " + sci(worst[0]) + ", non-causal " + sci(worst[1]) + " (must exceed 1e-3)"};
}

// ------------------------------------------------------------------ 6

Outcome schedule() {
  // Independent evaluation of the formula with the published constants.
  auto direct = [](double step) {
    return std::pow(1e-3, -0.5) * std::min(std::pow(step, -0.5), step * std::pow(5000.0, -1.5));
  };
  struct Point {
    long step;
    double printed;
  };
  const Point pts[] = {{1, 8.9443e-5}, {5000, 0.44721}, {20000, 0.22361}};
  bool ok = true;
  std::string detail;
  for (const auto& p : pts) {
    const double lr = train::lr_schedule(p.step);
    const double rel = std::abs(lr - direct(static_cast<double>(p.step))) / direct(static_cast<double>(p.step));
    const double printed_rel = std::abs(lr - p.printed) / p.printed;
    ok = ok && rel <= 1e-9 && printed_rel <= 5e-5;
    char buf[128];
    std::snprintf(buf, sizeof buf, "lr(%ld)=%.5g ", p.step, lr);
    detail += buf;
  }
  return {ok, detail + "(rel. tol 1e-9 vs direct evaluation)"};
}

// ------------------------------------------------------------------ 7

Outcome algorithm1() {
  ipe::Model model(mbtfnet::MbtfConfig::toy(), 24);
  helpers::randomize_params(model.store(), "ipe/", 25, 0.05);
  const auto audio = buffer(sig::vocal(kRate, static_cast<std::size_t>(3.6 * kRate), 7, 220.0));
  const auto& sem = ipe::default_speaker_encoder();
  const auto sve = ipe::run_sve(model, audio);
  const int frames = ipe::chunk_frames(model.config(), sve.spectra.band_rate, 1.0);

  // lambda = 1: no update, output equals the SVE output bit for bit.
  ipe::EnhanceOptions sve_only;
  ipe::EnhanceOptions gate_closed;
  gate_closed.mode = ipe::EnhanceMode::ipe;
  gate_closed.lambda = 1.0;
  ipe::EnhanceReport closed;
  const auto y_sve = ipe::enhance(model, audio, sve_only);
  const auto y_closed = ipe::enhance(model, audio, gate_closed, &closed);
  const bool degenerate = y_sve.samples == y_closed.samples && closed.state.e == ipe::SpeakerEmbedding::ones() &&
                          closed.state.updated_count == 0;

  // lambda = 0: every full chunk updates; replay the recurrence from the
  // speaker encoder applied to each chunk of the X_s waveform.
  ipe::IpeStreamState open;
  open.lambda = 0.0;
  std::vector<ipe::ChunkDecision> decisions;
  ipe::run_ipe(model, sve, open, frames, sem, &decisions);
  const auto xs_audio = model.signal_path().synthesize(mbtfnet::from_tensor(sve.x_s, sve.spectra));
  const std::size_t spf = static_cast<std::size_t>(model.config().hop * model.config().num_bands);
  const double a = open.alpha;
  std::vector<double> replay(ipe::kEmbeddingDim, 1.0), closed_form(ipe::kEmbeddingDim, 0.0);
  std::vector<std::vector<double>> embeddings;
  for (const auto& d : decisions) {
    const std::size_t s0 = std::min(xs_audio.size(), static_cast<std::size_t>(d.begin_frame) * spf);
    const std::size_t s1 = std::min(xs_audio.size(), static_cast<std::size_t>(d.end_frame) * spf);
    if (s1 - s0 < static_cast<std::size_t>(kRate)) continue;
    const auto e = sem.encode(buffer({xs_audio.samples.begin() + static_cast<long>(s0),
                                      xs_audio.samples.begin() + static_cast<long>(s1)}));
    embeddings.push_back(e.values);
    for (std::size_t i = 0; i < replay.size(); ++i) replay[i] = a * replay[i] + (1.0 - a) * e.values[i];
  }
  const auto k = embeddings.size();
  double closed_err = 0.0;
  for (std::size_t i = 0; i < closed_form.size(); ++i) {
    double v = std::pow(a, static_cast<double>(k));
    for (std::size_t j = 0; j < k; ++j) v += (1.0 - a) * std::pow(a, static_cast<double>(k - 1 - j)) * embeddings[j][i];
    closed_err = std::max(closed_err, std::abs(v - open.e.values[i]));
  }
  const bool unrolled = static_cast<int>(k) == open.updated_count && k >= 2 && replay == open.e.values &&
                        closed_err < 1e-12;

  // Monotone gate: raising lambda never adds updates on this stream.
  std::vector<double> thresholds{0.0, 1.0};
  for (const auto& d : decisions) thresholds.push_back(d.score);
  std::sort(thresholds.begin(), thresholds.end());
  bool monotone = true;
  int prev = 1 << 30;
  std::string counts;
  for (double l : thresholds) {
    ipe::IpeStreamState st;
    st.lambda = l;
    ipe::run_ipe(model, sve, st, frames, sem);
    monotone = monotone && st.updated_count <= prev;
    prev = st.updated_count;
    counts += std::to_string(st.updated_count) + " ";
  }
  monotone = monotone && prev == 0;
  return {degenerate && unrolled && monotone,
          std::string("lambda=1 ") + (degenerate ? "bit-identical to SVE" : "DIFFERS") + "; lambda=0 " +
              std::to_string(k) + " updates, closed form err " + sci(closed_err) +
              (unrolled ? ", recurrence exact" : ", MISMATCH") + "; updates over lambda sweep: " + counts};
}

// ------------------------------------------------------------------ 8

std::vector<double> sine_voice(double f0, std::size_t n) {
  std::vector<double> v(n, 0.0);
  for (int h = 1; h <= 4; ++h) v = add(v, sig::sine(f0 * h, kRate, n, 0.2 / h));
  return v;
}

Outcome toy_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = static_cast<std::size_t>(0.5 * kRate);
  const double f0s[4] = {220.0, 261.63, 329.63, 392.0};
  std::vector<train::TrainItem> items;
  std::vector<double> input_si;
  for (int k = 0; k < 4; ++k) {
    Rng rng(100 + static_cast<std::uint64_t>(k));
    const auto vocal = buffer(sine_voice(f0s[k], n));
    const auto accomp = buffer(sig::band_noise(n, rng));
    const auto noise = buffer(sig::white(n, rng, 0.1));
    const auto pair = sim::simulate_pair(vocal, &accomp, &noise, rng);
    items.push_back({pair.noisy, pair.clean, {}, {}});
    input_si.push_back(si_snr_db(pair.noisy.samples, pair.clean.samples));
  }
  ipe::Model model(mbtfnet::MbtfConfig::toy(), 1);
  train::TrainConfig cfg;
  cfg.steps = 300;
  cfg.seed = 1;
  cfg.schedule = train::ScheduleConfig::with_peak(2e-3, 50);
  const auto result = train::train_toy(model, items, cfg);

  bool ok = result.curve.size() <= 2000;
  double worst = 1e9;
  std::string detail;
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto y = ipe::enhance(model, items[k].noisy);
    const double out = si_snr_db(y.samples, items[k].clean.samples);
    worst = std::min(worst, out - input_si[k]);
    detail += fmt(input_si[k], 1) + "->" + fmt(out, 1) + " ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && worst >= 5.0 && secs < 600.0;
  return {ok, std::to_string(result.curve.size()) + " steps, SI-SNR dB " + detail + "(min gain " + fmt(worst, 1) +
                  " dB), runtime " + fmt(secs, 0) + " s"};
}

// ------------------------------------------------------------------ 9

// Harmonic tones: singer 0 below 1 kHz (sub-band 0), singer 1 at 6-8 kHz (sub-band 1).
std::vector<double> singer(int who, int note, std::size_t n, double vib_phase) {
  std::vector<double> x(n, 0.0);
  const double base = who == 0 ? 196.0 * std::pow(2.0, note / 12.0) : 6000.0 * std::pow(2.0, note / 24.0);
  double ph[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kRate;
    const double vib = 1.0 + 0.01 * std::sin(2.0 * M_PI * 5.0 * t + vib_phase);
    for (int h = 0; h < 4; ++h) {
      const double f = who == 0 ? base * (h + 1) : base * (1.0 + 0.1 * h);
      ph[h] += 2.0 * M_PI * f * vib / kRate;
      x[i] += 0.15 / (h + 1) * std::sin(ph[h]);
    }
  }
  return x;
}

Outcome toy_ipe() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = static_cast<std::size_t>(0.5 * kRate);
  std::vector<train::TrainItem> sve_items, ipe_items;
  for (int k = 0; k < 4; ++k) {
    const int lead = k % 2;
    const auto l = singer(lead, k, n, k);
    const auto backing = at_snr(l, singer(1 - lead, k + 1, n, k + 10.0), -5.0);
    Rng rng(50 + static_cast<std::uint64_t>(k));
    const auto noise = at_snr(l, sig::white(n, rng), 15.0);
    // SVE phase: keep every voice, remove the noise.
    const auto voices = add(l, backing);
    sve_items.push_back({buffer(add(voices, noise)), buffer(voices), {}, {}});
    // IPE phase: keep the lead only; backing added with probability 0.5.
    train::TrainItem it;
    it.clean = buffer(l);
    it.noisy = buffer(add(l, noise));
    it.backing = buffer(backing);
    it.enroll = buffer(singer(lead, k + 3, static_cast<std::size_t>(1.01 * kRate), k + 20.0));
    ipe_items.push_back(std::move(it));
  }

  ipe::Model sve_model(mbtfnet::MbtfConfig::toy(), 1);
  train::TrainConfig cfg;
  cfg.steps = 100;
  cfg.seed = 1;
  cfg.schedule = train::ScheduleConfig::with_peak(2e-3, 50);
  train::train_toy(sve_model, sve_items, cfg);

  ipe::Model model = ipe::Model::from_weights(sve_model.weights());
  const auto before = model.weights();
  cfg.stage = train::Stage::ipe;
  cfg.steps = 200;
  const auto result = train::train_toy(model, ipe_items, cfg);
  bool frozen = true;
  for (const auto& [path, t] : before.tensors()) {
    if (path.rfind("sve/", 0) == 0) frozen = frozen && model.weights().at(path) == t;
  }

  bool separation = true;
  double s_clean = 0.0, s_mixed = 0.0;
  std::string detail;
  for (const auto& it : ipe_items) {
    const auto mixture = buffer(add(it.noisy.samples, it.backing.samples));
    ipe::EnhanceOptions pe;
    pe.mode = ipe::EnhanceMode::pe;
    pe.enrollment = ipe::default_speaker_encoder().encode(it.enroll);
    const double si_s = si_snr_db(ipe::enhance(model, mixture).samples, it.clean.samples);
    const double si_p = si_snr_db(ipe::enhance(model, mixture, pe).samples, it.clean.samples);
    separation = separation && si_p > si_s;
    detail += fmt(si_s, 1) + "->" + fmt(si_p, 1) + " ";
    for (int mixed = 0; mixed < 2; ++mixed) {
      const auto sve = ipe::run_sve(model, mixed ? mixture : it.noisy);
      Graph<float> g;
      g.set_grad_enabled(false);
      const auto logits = model.ipe().snr()(g, g.constant(ipe::snr_features(sve.x_s, sve.y)))->value;
      (mixed ? s_mixed : s_clean) += ipe::chunk_score(ipe::snr_probabilities(logits)) / 4.0;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ordering = s_clean > s_mixed;
  return {separation && ordering && frozen,
          "SI-SNR X_s->X_p dB " + detail + "; mean S clean " + fmt(s_clean, 3) + " vs -5 dB " + fmt(s_mixed, 3) +
              "; lambda_t " + fmt(result.lambda_t.value_or(-1.0), 3) + (frozen ? "; SVE frozen" : "; SVE CHANGED") +
              ", runtime " + fmt(secs, 0) + " s"};
}

// ------------------------------------------------------------------ 10

Outcome simulation() {
  // Achieved SNRs.
  Rng rng(9);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t n = 1000 + rng.index(3000);
    const auto s = sig::white(n, rng, rng.uniform(0.01, 1.0));
    const auto i = sig::white(n, rng, rng.uniform(0.01, 1.0));
    const double target = rng.uniform(-10.0, 20.0);
    const auto mix = sim::mix_at_snr(s, i, target);
    std::vector<double> scaled(n);
    for (std::size_t j = 0; j < n; ++j) scaled[j] = mix.mixture[j] - s[j];
    worst = std::max(worst, std::abs(10.0 * std::log10(sig::energy(s) / sig::energy(scaled)) - target));
  }
  Rng prng(10);
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = kRate / 4;
    const auto vocal = buffer(sig::vocal(kRate, n, 40 + static_cast<std::uint64_t>(k)));
    const auto acc = buffer(sig::band_noise(n + 500, prng));
    const auto noise = buffer(sig::white(n / 2, prng));
    const auto p = sim::simulate_pair(vocal, &acc, &noise, prng);
    const auto a_part = sim::fit_length(acc.samples, n, p.draw.accomp_offset);
    std::vector<double> a_scaled(n), m(n), n_scaled(n);
    for (std::size_t j = 0; j < n; ++j) {
      a_scaled[j] = p.accomp_scale * a_part[j];
      m[j] = vocal.samples[j] + a_scaled[j];
      n_scaled[j] = p.noise_scale * sim::fit_length(noise.samples, n, p.draw.noise_offset)[j];
    }
    worst = std::max(worst, std::abs(10.0 * std::log10(sig::energy(vocal.samples) / sig::energy(a_scaled)) -
                                     p.draw.snr_accomp_db));
    worst = std::max(worst, std::abs(10.0 * std::log10(sig::energy(m) / sig::energy(n_scaled)) - p.draw.snr_noise_db));
  }

  // 5 mixtures per vocal.
  sim::Sources sources;
  Rng srng(5);
  for (int v = 0; v < 50; ++v) {
    sources.vocals.push_back({"v" + std::to_string(v) + ".wav", buffer(sig::vocal(kRate, 4000, 100 + v, 150.0 + 7.0 * v))});
  }
  sources.accomps.push_back({"a0.wav", buffer(sig::band_noise(7000, srng))});
  sources.noises.push_back({"n0.wav", buffer(sig::white(2000, srng))});
  const auto set = sim::build_test_set(sim::TestSetKind::without_backing, sources, 5, 77);

  // Selected backing prefers the transposed lead over noise.
  const auto lead = buffer(sig::vocal(kRate, 3 * kRate, 31, 196.0));
  Rng nrng(3);
  const auto noise = buffer(sig::white(3 * kRate, nrng, 0.2));
  const auto octave = dsp::pitch_shift_semitones(lead, -12);
  bool picks = true;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng r(seed);
    picks = picks && sim::select_backing(lead, {noise, octave}, r).index == 1;
  }

  // Manifests regenerate bit-exactly for every kind.
  sim::Sources small;
  for (int v = 0; v < 4; ++v) {
    small.vocals.push_back({"s" + std::to_string(v) + ".wav",
                            buffer(sig::vocal(kRate, 3 * kRate / 2, 60 + v, 170.0 + 20.0 * v))});
  }
  small.accomps = sources.accomps;
  small.noises = sources.noises;
  bool regen = true;
  std::size_t regen_items = 0;
  for (auto kind : {sim::TestSetKind::without_backing, sim::TestSetKind::random_backing,
                    sim::TestSetKind::selected_backing}) {
    const auto items = sim::build_test_set(kind, small, 2, 13);
    sim::Manifest m;
    for (const auto& it : items) m.rows.push_back(it.row);
    const auto parsed = sim::Manifest::parse(m.to_tsv());
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto again = sim::regenerate(parsed.rows[i], small);
      regen = regen && again.noisy.samples == items[i].noisy.samples && again.clean.samples == items[i].clean.samples;
      ++regen_items;
    }
  }
  return {worst <= 0.01 && set.size() == 250 && picks && regen,
          "max SNR error " + sci(worst) + " dB, " + std::to_string(set.size()) + " items from 50 vocals, " +
              (picks ? "transposed copy chosen" : "WRONG candidate") + ", " + std::to_string(regen_items) +
              " items regenerated " + (regen ? "bit-exactly" : "WITH DIFFERENCES")};
}

// ------------------------------------------------------------------ 11

Outcome cleanliness() {
  const auto y = helpers::random_input<double>({8, 33, 6}, 1);
  double eq = 0.0;
  for (double v : ipe::cleanliness_score(y, y)) eq = std::max(eq, std::abs(v));
  auto x = y;
  for (auto& v : x.vec()) v *= 0.1;
  double tenth = 0.0;
  for (double v : ipe::cleanliness_score(x, y)) tenth = std::max(tenth, std::abs(v + 1.0));
  const Tensor<double> zero({8, 33, 6});
  bool clamp = true;
  for (double v : ipe::cleanliness_score(zero, y)) clamp = clamp && v == ipe::kCleanlinessFloor;
  return {eq == 0.0 && tenth < 1e-12 && clamp,
          "X=Y max |S| " + sci(eq) + ", |X|=0.1|Y| max |S+1| " + sci(tenth) + ", X=0 gives " +
              fmt(ipe::kCleanlinessFloor, 0) + (clamp ? " on every frame" : " NOT on every frame")};
}

// ------------------------------------------------------------------ 12

Outcome weights_round_trip() {
  ipe::Model model(mbtfnet::MbtfConfig::toy(), 5);
  helpers::randomize_params(model.store(), "", 6, 0.1);
  helpers::randomize_buffers(model.store(), 7);
  model.lambda_t = 0.6180339887498949;
  model.stats = ipe::CleanlinessStats{-0.3183098861837907, 0.7071067811865476};
  const auto w = model.weights();
  const auto path = std::filesystem::temp_directory_path() / "mbtf_acceptance_weights.bin";
  w.save(path);
  const auto bytes = nn::read_file_bytes(path);
  const auto back = nn::ModelWeights::load(path);
  std::filesystem::remove(path);
  const auto reloaded = ipe::Model::from_weights(back);
  const bool exact = back == w && back.serialize() == bytes;
  const bool meta = reloaded.lambda_t == model.lambda_t && reloaded.stats == model.stats;
  const bool same_model = reloaded.weights() == w;
  return {exact && meta && same_model, std::to_string(w.tensors().size()) + " tensors, " +
                                           std::to_string(bytes.size()) + " bytes; " +
                                           (exact ? "bit-exact" : "NOT bit-exact") + ", lambda_t and statistics " +
                                           (meta ? "preserved" : "LOST")};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "PQMF round trip", pqmf_round_trip},
      {2, "STFT/iSTFT round trip and linearity", stft_round_trip},
      {3, "gradient suite", gradient_suite},
      {4, "convolution oracle equivalence", conv_oracle},
      {5, "causality of the causal toy network", causality},
      {6, "learning-rate schedule", schedule},
      {7, "embedding update state machine", algorithm1},
      {8, "toy SVE overfit", toy_overfit},
      {9, "toy IPE separation", toy_ipe},
      {10, "simulation fidelity", simulation},
      {11, "cleanliness score", cleanliness},
      {12, "weights round trip", weights_round_trip},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s  %2d  %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
