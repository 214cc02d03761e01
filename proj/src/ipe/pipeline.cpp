#include "mbtf/ipe/pipeline.hpp"

#include <cmath>

#include "mbtf/dsp/resample.hpp"
#include "mbtf/error.hpp"
#include "mbtf/util/text.hpp"

namespace mbtf::ipe {

Model::Model(const mbtfnet::MbtfConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), store_(std::make_unique<ParamStore<float>>()), path_(cfg) {
  cfg.validate();
  Rng rng(seed);
  sve_ = mbtfnet::SveNet<float>(*store_, cfg, rng, "sve/");
  ipe_ = IpeNet<float>(*store_, cfg, rng, "ipe/");
}

Model Model::from_weights(const nn::ModelWeights& w) {
  const auto topo = w.meta("topology");
  if (!topo) throw DataError("weights carry no topology description");
  Model m(mbtfnet::MbtfConfig::parse(*topo));
  m.store().load(w);
  if (const auto l = w.meta("lambda_t")) {
    const auto v = util::to_double(*l);
    if (!v) throw DataError("malformed lambda_t in weights metadata");
    m.lambda_t = *v;
  }
  m.sve_trained = w.meta("sve_trained").value_or("0") == "1";
  if (w.meta("cleanliness_mean")) m.stats = CleanlinessStats::from_metadata(w.metadata());
  return m;
}

Model Model::load(const std::filesystem::path& path) { return from_weights(nn::ModelWeights::load(path)); }

nn::ModelWeights Model::weights(const std::map<std::string, std::string>& extra_metadata) const {
  std::map<std::string, std::string> meta = extra_metadata;
  meta["topology"] = cfg_.to_text();
  if (sve_trained) meta["sve_trained"] = "1";
  if (lambda_t) meta["lambda_t"] = util::format_double(*lambda_t);
  if (stats) {
    for (const auto& [k, v] : stats->to_metadata()) meta[k] = v;
  }
  return nn::ModelWeights(store_->export_tensors(), meta);
}

const char* to_string(EnhanceMode m) {
  switch (m) {
    case EnhanceMode::sve: return "sve";
    case EnhanceMode::ipe: return "sve+ipe";
    case EnhanceMode::pe: return "pe";
  }
  return "?";
}

EnhanceMode parse_mode(const std::string& s) {
  if (s == "sve") return EnhanceMode::sve;
  if (s == "sve+ipe" || s == "ipe") return EnhanceMode::ipe;
  if (s == "pe") return EnhanceMode::pe;
  throw ConfigError("unknown enhancement mode '" + s + "' (expected sve, sve+ipe or pe)");
}

SveResult run_sve(const Model& model, const dsp::AudioBuffer& audio) {
  SveResult r;
  r.spectra = model.signal_path().analyze(audio);
  r.y = mbtfnet::to_tensor<float>(r.spectra);
  Graph<float> g;
  g.set_grad_enabled(false);
  const auto out = model.sve()(g, g.constant(r.y), false);
  r.x_s = out.x_s->value;
  r.z = out.z->value;
  return r;
}

int chunk_frames(const mbtfnet::MbtfConfig& cfg, int band_rate, double seconds) {
  if (!(seconds > 0.0) || band_rate <= 0) throw ConfigError("chunk length must be positive");
  return static_cast<int>(std::ceil(seconds * band_rate / cfg.hop - 1e-9));
}

Tensor<float> run_ipe(const Model& model, const SveResult& sve, IpeStreamState& state, int frames_per_chunk,
                      const SpeakerEncoder& sem, std::vector<ChunkDecision>* decisions) {
  state.validate();
  if (frames_per_chunk < 1) throw ConfigError("chunk must hold at least one frame");
  const auto& cfg = model.config();
  const int t_total = sve.x_s.dim(2);
  const std::size_t samples_per_frame = static_cast<std::size_t>(cfg.hop) * static_cast<std::size_t>(cfg.num_bands);
  const auto x_s_audio = model.signal_path().synthesize(mbtfnet::from_tensor(sve.x_s, sve.spectra));
  const std::size_t min_samples = static_cast<std::size_t>(std::ceil(SpeakerEncoder::kMinSeconds * dsp::kNativeRate));

  Graph<float> g;
  g.set_grad_enabled(false);
  const Tensor<float> feats = snr_features(sve.x_s, sve.y);
  SnrState<float> snr_state = model.ipe().snr().initial_state();

  struct Segment {
    int begin, end;
    SpeakerEmbedding e;
    bool enhance;
  };
  std::vector<Segment> segments;
  for (int b = 0; b < t_total; b += frames_per_chunk) {
    const int e = std::min(t_total, b + frames_per_chunk);
    segments.push_back({b, e, state.e, state.updated_count > 0});

    Tensor<float> chunk_feats({1, e - b, feats.dim(2)});
    for (int t = b; t < e; ++t) {
      for (int j = 0; j < feats.dim(2); ++j) chunk_feats.at(0, t - b, j) = feats.at(0, t, j);
    }
    const auto logits = model.ipe().snr()(g, g.constant(std::move(chunk_feats)), &snr_state)->value;
    g.clear();
    ChunkDecision d;
    d.begin_frame = b;
    d.end_frame = e;
    d.score = chunk_score(snr_probabilities(logits));
    const std::size_t s0 = std::min(x_s_audio.size(), static_cast<std::size_t>(b) * samples_per_frame);
    const std::size_t s1 = std::min(x_s_audio.size(), static_cast<std::size_t>(e) * samples_per_frame);
    d.too_short = s1 - s0 < min_samples;
    if (!d.too_short) {
      d.accepted = update_embedding(state, d.score, [&] {
        dsp::AudioBuffer piece{std::vector<double>(x_s_audio.samples.begin() + static_cast<long>(s0),
                                                   x_s_audio.samples.begin() + static_cast<long>(s1)),
                               dsp::kNativeRate};
        return sem.encode(piece);
      });
    }
    if (decisions) decisions->push_back(d);
  }

  bool any = false;
  for (const auto& s : segments) any = any || s.enhance;
  if (!any) return sve.x_s;

  const Var<float> z = g.constant(sve.z);
  std::vector<Var<float>> parts;
  for (const auto& s : segments) {
    const Var<float> zs = nn::slice_last(g, z, s.begin, s.end);
    parts.push_back(model.ipe().condition(g, model.ipe().embed()(g, s.e), zs));
  }
  const Var<float> cond = parts.size() == 1 ? parts[0] : nn::concat_last(g, parts);
  const Tensor<float> x_p = model.ipe().pem(g, g.constant(sve.x_s), cond, false)->value;

  Tensor<float> out = sve.x_s;
  for (const auto& s : segments) {
    if (!s.enhance) continue;
    for (int c = 0; c < out.dim(0); ++c) {
      for (int f = 0; f < out.dim(1); ++f) {
        for (int t = s.begin; t < s.end; ++t) out.at(c, f, t) = x_p.at(c, f, t);
      }
    }
  }
  return out;
}

const SpeakerEncoder& default_speaker_encoder() {
  static const ToySpeakerEncoder enc;
  return enc;
}

dsp::AudioBuffer enhance(const Model& model, const dsp::AudioBuffer& input, const EnhanceOptions& opts,
                         EnhanceReport* report, const SpeakerEncoder* sem) {
  input.validate();
  if (input.empty()) throw LengthError("enhance: empty input");
  dsp::AudioBuffer audio = input;
  if (audio.sample_rate != dsp::kNativeRate) {
    if (!opts.resample) {
      throw DataError("input sample rate " + std::to_string(audio.sample_rate) + " Hz differs from " +
                      std::to_string(dsp::kNativeRate) + " Hz; enable resampling to convert");
    }
    audio = dsp::resample(audio, dsp::kNativeRate);
  }
  const auto& cfg = model.config();
  const SveResult sve = run_sve(model, audio);
  Tensor<float> out;
  switch (opts.mode) {
    case EnhanceMode::sve:
      out = sve.x_s;
      break;
    case EnhanceMode::pe: {
      if (!opts.enrollment) throw ConfigError("PE mode needs an enrollment embedding");
      Graph<float> g;
      g.set_grad_enabled(false);
      out = model.ipe().pem(g, g.constant(sve.x_s), g.constant(sve.z), *opts.enrollment, false)->value;
      break;
    }
    case EnhanceMode::ipe: {
      IpeStreamState state;
      const auto lambda = opts.lambda ? opts.lambda : model.lambda_t;
      if (!lambda) throw ConfigError("IPE mode needs a threshold: the weights carry no trained lambda_t");
      state.lambda = *lambda;
      state.alpha = opts.alpha.value_or(cfg.alpha);
      const double seconds = opts.chunk_seconds.value_or(cfg.chunk_seconds);
      if (seconds < SpeakerEncoder::kMinSeconds) {
        throw ConfigError("chunk length must be at least " + std::to_string(SpeakerEncoder::kMinSeconds) + " s");
      }
      std::vector<ChunkDecision> decisions;
      out = run_ipe(model, sve, state, chunk_frames(cfg, sve.spectra.band_rate, seconds),
                    sem ? *sem : default_speaker_encoder(), &decisions);
      if (report) {
        report->chunks = std::move(decisions);
        report->state = state;
      }
      break;
    }
  }
  return model.signal_path().synthesize(mbtfnet::from_tensor(out, sve.spectra));
}

}  // namespace mbtf::ipe
