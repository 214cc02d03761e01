#include "mbtf/train/trainer.hpp"

#include <array>
#include <map>
#include <numeric>

#include "mbtf/error.hpp"
#include "mbtf/rng.hpp"
#include "mbtf/util/text.hpp"

namespace mbtf::train {

namespace {

using mbtfnet::BandSpectra;

constexpr const char* kOptimPrefix = "optim/";

struct Target {
  BandSpectra spectra;
  Tensor<float> x;     // clean spectrogram
  Tensor<float> wave;  // clean waveform
};

struct IpeInput {
  ipe::SveResult sve;
  Tensor<float> features;
  Tensor<float> snr_target;  // [1, 1, T]
};

void check_items(const std::vector<TrainItem>& items, Stage stage) {
  if (items.empty()) throw DataError("training needs at least one item");
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    const std::string tag = "training item " + std::to_string(i);
    it.noisy.validate();
    it.clean.validate();
    if (it.noisy.empty()) throw LengthError(tag + ": empty mixture");
    if (it.noisy.sample_rate != dsp::kNativeRate || it.clean.sample_rate != dsp::kNativeRate) {
      throw DataError(tag + ": audio must be at " + std::to_string(dsp::kNativeRate) + " Hz");
    }
    if (it.noisy.size() != it.clean.size()) throw LengthError(tag + ": mixture and target lengths differ");
    if (!it.backing.empty()) {
      it.backing.validate();
      if (it.backing.size() != it.noisy.size() || it.backing.sample_rate != dsp::kNativeRate) {
        throw LengthError(tag + ": backing must match the mixture length and rate");
      }
    }
    if (stage == Stage::ipe && it.enroll.empty()) throw DataError(tag + ": ipe stage needs an enrollment recording");
  }
}

Tensor<float> waveform_tensor(const std::vector<double>& s) {
  Tensor<float> t({static_cast<int>(s.size())});
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = static_cast<float>(s[i]);
  return t;
}

dsp::AudioBuffer with_backing(const TrainItem& it) {
  dsp::AudioBuffer y = it.noisy;
  for (std::size_t i = 0; i < y.size(); ++i) y.samples[i] += it.backing.samples[i];
  return y;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

}  // namespace

TrainResult train_toy(ipe::Model& model, const std::vector<TrainItem>& items, const TrainConfig& cfg,
                      const TrainState* resume) {
  cfg.schedule.validate();
  if (cfg.steps < 0) throw ConfigError("training steps must be non-negative");
  if (!(cfg.backing_probability >= 0.0 && cfg.backing_probability <= 1.0)) {
    throw ConfigError("backing probability must lie in [0, 1]");
  }
  if (cfg.stage == Stage::ipe && !model.sve_trained) {
    throw ConfigError("ipe stage needs trained SVE weights (load a checkpoint from the sve stage)");
  }
  check_items(items, cfg.stage);

  auto& store = model.store();
  const auto& path = model.signal_path();
  store.set_trainable("", true);
  if (cfg.stage == Stage::sve) {
    store.set_trainable("ipe/", false);
  } else {
    store.set_trainable("sve/", false);
  }

  TrainResult result;
  result.state = resume ? *resume : TrainState{nn::Adam<float>(cfg.adam), 0};

  std::vector<Target> targets;
  std::vector<nn::LinearOperator<float>> recon;
  std::vector<Tensor<float>> mixtures;
  for (const auto& it : items) {
    if (cfg.stage == Stage::sve) mixtures.push_back(mbtfnet::to_tensor<float>(path.analyze(it.noisy)));
    Target t;
    t.spectra = path.analyze(it.clean);
    t.x = mbtfnet::to_tensor<float>(t.spectra);
    t.wave = waveform_tensor(it.clean.samples);
    recon.push_back(path.reconstruction<float>(t.spectra));
    targets.push_back(std::move(t));
  }

  // ipe stage: frozen-SVE outputs per (item, with backing), speaker
  // embeddings, and the normalized cleanliness targets.
  std::vector<std::array<std::optional<IpeInput>, 2>> ipe_inputs(items.size());
  std::vector<ipe::SpeakerEmbedding> embeddings;
  if (cfg.stage == Stage::ipe) {
    std::vector<std::vector<double>> raw;
    std::vector<std::pair<std::size_t, int>> keys;
    for (std::size_t i = 0; i < items.size(); ++i) {
      for (int b = 0; b < (items[i].backing.empty() ? 1 : 2); ++b) {
        IpeInput in;
        in.sve = ipe::run_sve(model, b ? with_backing(items[i]) : items[i].noisy);
        in.features = ipe::snr_features(in.sve.x_s, in.sve.y);
        raw.push_back(ipe::cleanliness_score(targets[i].x, in.sve.y));
        keys.emplace_back(i, b);
        ipe_inputs[i][static_cast<std::size_t>(b)] = std::move(in);
      }
      embeddings.push_back(ipe::default_speaker_encoder().encode(items[i].enroll));
    }
    std::vector<double> all;
    for (const auto& r : raw) all.insert(all.end(), r.begin(), r.end());
    result.stats = ipe::normalize_stats(all);
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const auto tg = result.stats->targets(raw[k]);
      Tensor<float> t({1, 1, static_cast<int>(tg.size())});
      for (std::size_t j = 0; j < tg.size(); ++j) t[j] = static_cast<float>(tg[j]);
      ipe_inputs[keys[k].first][static_cast<std::size_t>(keys[k].second)]->snr_target = std::move(t);
    }
  }

  const std::size_t n = items.size();
  const long final_epoch_start = cfg.steps - static_cast<long>(std::min<std::size_t>(n, static_cast<std::size_t>(cfg.steps)));
  std::vector<double> final_chunk_scores;
  std::vector<std::size_t> order;
  long order_epoch = -1;
  Graph<float> g;

  for (long s = 0; s < cfg.steps; ++s) {
    const long step = ++result.state.step;
    const long epoch = (step - 1) / static_cast<long>(n);
    if (epoch != order_epoch) {
      Rng order_rng(derive_seed(cfg.seed, 2 * static_cast<std::uint64_t>(epoch)));
      order = shuffled(n, order_rng);
      order_epoch = epoch;
    }
    const std::size_t i = order[static_cast<std::size_t>((step - 1) % static_cast<long>(n))];
    const double lr = lr_schedule(step, cfg.schedule);
    store.zero_grad();
    g.clear();

    LossReport rep;
    if (cfg.stage == Stage::sve) {
      const auto out = model.sve()(g, g.constant(mixtures[i]), true);
      const auto wave = nn::apply_linear(g, out.x_s, recon[i]);
      const auto si = si_snr(g, wave, targets[i].wave);
      const auto cm = cmse(g, out.x_s, targets[i].x);
      const auto total = nn::sub(g, cm, si);
      g.backward(total);
      rep = composite_loss(Stage::sve, si->value[0], cm->value[0]);
    } else {
      Rng draw(derive_seed(cfg.seed, 2 * static_cast<std::uint64_t>(step) + 1));
      const bool use_backing = !items[i].backing.empty() && draw.bernoulli(cfg.backing_probability);
      const IpeInput& in = *ipe_inputs[i][use_backing ? 1 : 0];
      const auto a = model.ipe().embed()(g, embeddings[i]);
      const auto cond = model.ipe().condition(g, a, g.constant(in.sve.z));
      const auto x_p = model.ipe().pem(g, g.constant(in.sve.x_s), cond, true);
      const auto wave = nn::apply_linear(g, x_p, recon[i]);
      const auto si = si_snr(g, wave, targets[i].wave);
      const auto cm = cmse(g, x_p, targets[i].x);
      const auto s_hat = nn::sigmoid(g, model.ipe().snr()(g, g.constant(in.features)));
      const auto sm = nn::mse(g, s_hat, g.constant(in.snr_target));
      const auto total = nn::add(g, nn::sub(g, cm, si), nn::scale(g, sm, static_cast<float>(kSnrLossWeight)));
      g.backward(total);
      rep = composite_loss(Stage::ipe, si->value[0], cm->value[0], sm->value[0]);

      if (s >= final_epoch_start) {
        const int frames = ipe::chunk_frames(model.config(), in.sve.spectra.band_rate, model.config().chunk_seconds);
        const int t_total = s_hat->value.dim(2);
        for (int b = 0; b < t_total; b += frames) {
          const int e = std::min(t_total, b + frames);
          double acc = 0.0;
          for (int t = b; t < e; ++t) acc += s_hat->value[static_cast<std::size_t>(t)];
          final_chunk_scores.push_back(acc / (e - b));
        }
      }
    }
    result.state.optimizer.step(store, lr);
    rep.step = step;
    rep.lr = lr;
    result.curve.push_back(rep);
    if (cfg.on_step) cfg.on_step(rep);
  }
  g.clear();
  store.zero_grad();
  store.set_trainable("", true);

  if (cfg.stage == Stage::sve) {
    model.sve_trained = true;
  } else {
    model.stats = result.stats;
    if (!final_chunk_scores.empty()) {
      result.lambda_t = ipe::estimate_lambda_t(final_chunk_scores);
      model.lambda_t = result.lambda_t;
    }
  }
  return result;
}

nn::ModelWeights checkpoint(const ipe::Model& model, const TrainState& state, Stage stage) {
  auto w = model.weights({{"train_step", std::to_string(state.step)}, {"train_stage", to_string(stage)}});
  auto tensors = w.tensors();
  for (const auto& [p, mom] : state.optimizer.state()) {
    tensors[kOptimPrefix + p + ".m"] = mom.m;
    tensors[kOptimPrefix + p + ".v"] = mom.v;
  }
  std::map<std::string, std::string> meta = w.metadata();
  for (const auto& [p, mom] : state.optimizer.state()) meta["optim_step:" + p] = std::to_string(mom.step);
  return nn::ModelWeights(std::move(tensors), std::move(meta));
}

TrainState restore_state(const nn::ModelWeights& ck) {
  TrainState st;
  const auto step = ck.meta("train_step");
  if (!step) throw DataError("checkpoint has no train_step metadata");
  const auto v = util::to_int64(*step);
  if (!v || *v < 0) throw DataError("malformed train_step metadata '" + *step + "'");
  st.step = static_cast<long>(*v);
  const std::string key = "optim_step:";
  for (const auto& [k, val] : ck.metadata()) {
    if (k.rfind(key, 0) != 0) continue;
    const std::string p = k.substr(key.size());
    const auto m = ck.tensors().find(kOptimPrefix + p + ".m");
    const auto vv = ck.tensors().find(kOptimPrefix + p + ".v");
    const auto count = util::to_int64(val);
    if (m == ck.tensors().end() || vv == ck.tensors().end() || !count) {
      throw DataError("checkpoint optimizer state for '" + p + "' is incomplete");
    }
    st.optimizer.state()[p] = nn::AdamMoments<float>{m->second, vv->second, static_cast<long>(*count)};
  }
  return st;
}

std::vector<double> window_means(const std::vector<LossReport>& curve, std::size_t window) {
  if (window == 0) throw ValidationError("window must be positive");
  std::vector<double> out;
  for (std::size_t b = 0; b + window <= curve.size(); b += window) {
    double acc = 0.0;
    for (std::size_t k = b; k < b + window; ++k) acc += curve[k].total;
    out.push_back(acc / static_cast<double>(window));
  }
  return out;
}

}  // namespace mbtf::train
