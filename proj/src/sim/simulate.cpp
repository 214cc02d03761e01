#include "mbtf/sim/simulate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "mbtf/dsp/chroma.hpp"
#include "mbtf/dsp/resample.hpp"
#include "mbtf/dsp/stft.hpp"
#include "mbtf/dsp/wav.hpp"
#include "mbtf/error.hpp"
#include "mbtf/util/text.hpp"

namespace mbtf::sim {

namespace {

constexpr int kChromaFrame = 4096;
constexpr int kChromaHop = 2048;

double mean_power(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

dsp::Chroma chroma_of(const dsp::AudioBuffer& a) {
  dsp::StftConfig cfg;
  cfg.frame_len = kChromaFrame;
  cfg.hop = kChromaHop;
  cfg.fft_size = kChromaFrame;
  return dsp::chroma(dsp::stft(a, cfg));
}

double pearson_at_lag(const dsp::Chroma& a, const dsp::Chroma& b, int lag) {
  // Frames a[t] against b[t + lag].
  const int t0 = std::max(0, -lag);
  const int t1 = std::min(a.frames, b.frames - lag);
  if (t1 <= t0) return -1.0;
  const double n = 12.0 * (t1 - t0);
  double sa = 0, sb = 0;
  for (int pc = 0; pc < 12; ++pc) {
    for (int t = t0; t < t1; ++t) {
      sa += a.at(pc, t);
      sb += b.at(pc, t + lag);
    }
  }
  const double ma = sa / n, mb = sb / n;
  double ab = 0, aa = 0, bb = 0;
  for (int pc = 0; pc < 12; ++pc) {
    for (int t = t0; t < t1; ++t) {
      const double x = a.at(pc, t) - ma, y = b.at(pc, t + lag) - mb;
      ab += x * y;
      aa += x * x;
      bb += y * y;
    }
  }
  if (aa <= 0.0 || bb <= 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

const NamedAudio& find_source(const std::vector<NamedAudio>& pool, const std::string& name, const char* what) {
  for (const auto& s : pool) {
    if (s.name == name) return s;
  }
  throw DataError(std::string("manifest refers to unknown ") + what + " '" + name + "'");
}

std::vector<NamedAudio> load_dir(const std::filesystem::path& dir) {
  std::vector<NamedAudio> out;
  if (!std::filesystem::is_directory(dir)) return out;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  dsp::WavReadOptions opt;
  opt.resample = true;
  for (const auto& f : files) out.push_back({f.filename().string(), dsp::read_wav(f.string(), opt)});
  return out;
}

// Assembles an item from fully specified draws.
SimItem compose(const ManifestRow& row, const Sources& sources) {
  const auto& vocal = find_source(sources.vocals, row.vocal, "vocal").audio;
  PairDraw d;
  d.has_accomp = !row.accomp.empty();
  d.has_noise = !row.noise.empty();
  d.snr_accomp_db = row.snr_accomp_db;
  d.snr_noise_db = row.snr_noise_db;
  d.accomp_offset = row.accomp_offset;
  d.noise_offset = row.noise_offset;
  const dsp::AudioBuffer* accomp = d.has_accomp ? &find_source(sources.accomps, row.accomp, "accompaniment").audio : nullptr;
  const dsp::AudioBuffer* noise = d.has_noise ? &find_source(sources.noises, row.noise, "noise").audio : nullptr;
  SimPair pair = apply_pair(vocal, accomp, noise, d);
  if (!row.backing.empty()) {
    const auto& b = find_source(sources.vocals, row.backing, "backing vocal").audio;
    const auto m = backing_mix(vocal, b, row.shift, row.backing_offset, row.snr_backing_db);
    for (std::size_t i = 0; i < pair.noisy.size(); ++i) pair.noisy.samples[i] += m.scale * m.backing[i];
  }
  SimItem item;
  item.row = row;
  double peak = 0.0;
  for (double v : pair.noisy.samples) peak = std::max(peak, std::abs(v));
  const double limit = std::pow(10.0, kPeakDbfs / 20.0);
  item.row.gain = peak > limit ? limit / peak : 1.0;
  for (auto& v : pair.noisy.samples) v *= item.row.gain;
  for (auto& v : pair.clean.samples) v *= item.row.gain;
  item.noisy = std::move(pair.noisy);
  item.clean = std::move(pair.clean);
  return item;
}

std::string field(const std::string& s) { return s.empty() ? "-" : s; }
std::string unfield(const std::string& s) { return s == "-" ? "" : s; }

}  // namespace

MixResult mix_at_snr(const std::vector<double>& signal, const std::vector<double>& interference, double snr_db) {
  if (signal.size() != interference.size()) {
    throw ValidationError("mix: signal has " + std::to_string(signal.size()) + " samples, interference " +
                          std::to_string(interference.size()));
  }
  if (!std::isfinite(snr_db)) throw ValidationError("mix: SNR must be finite");
  const double ps = mean_power(signal), pi = mean_power(interference);
  if (!(ps > 0.0)) throw ValidationError("mix: signal has zero power");
  if (!(pi > 0.0)) throw ValidationError("mix: interference has zero power");
  MixResult r;
  r.scale = std::sqrt(ps / (pi * std::pow(10.0, snr_db / 10.0)));
  r.mixture.resize(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) r.mixture[i] = signal[i] + r.scale * interference[i];
  return r;
}

double measured_snr_db(const std::vector<double>& signal, const std::vector<double>& noise) {
  return 10.0 * std::log10(mean_power(signal) / mean_power(noise));
}

std::vector<double> fit_length(const std::vector<double>& x, std::size_t n, std::size_t offset) {
  if (x.empty()) throw ValidationError("fit_length: empty source");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[(offset + i) % x.size()];
  return out;
}

std::size_t draw_offset(std::size_t source_len, std::size_t n, Rng& rng) {
  if (source_len == 0) throw ValidationError("draw_offset: empty source");
  if (source_len >= n) return static_cast<std::size_t>(rng.index(source_len - n + 1));
  return static_cast<std::size_t>(rng.index(source_len));
}

SimPair apply_pair(const dsp::AudioBuffer& vocal, const dsp::AudioBuffer* accomp, const dsp::AudioBuffer* noise,
                   const PairDraw& draw) {
  vocal.validate();
  SimPair p;
  p.draw = draw;
  p.clean = vocal;
  p.noisy = vocal;
  const std::size_t n = vocal.size();
  if (accomp) {
    auto r = mix_at_snr(vocal.samples, fit_length(accomp->samples, n, draw.accomp_offset), draw.snr_accomp_db);
    p.noisy.samples = std::move(r.mixture);
    p.accomp_scale = r.scale;
  }
  if (noise) {
    auto r = mix_at_snr(p.noisy.samples, fit_length(noise->samples, n, draw.noise_offset), draw.snr_noise_db);
    p.noisy.samples = std::move(r.mixture);
    p.noise_scale = r.scale;
  }
  return p;
}

SimPair simulate_pair(const dsp::AudioBuffer& vocal, const dsp::AudioBuffer* accomp, const dsp::AudioBuffer* noise,
                      Rng& rng) {
  PairDraw d;
  const std::size_t n = vocal.size();
  if (accomp) {
    d.has_accomp = true;
    d.snr_accomp_db = rng.uniform(kPairSnrLo, kPairSnrHi);
    d.accomp_offset = draw_offset(accomp->size(), n, rng);
  }
  if (noise) {
    d.has_noise = true;
    d.snr_noise_db = rng.uniform(kPairSnrLo, kPairSnrHi);
    d.noise_offset = draw_offset(noise->size(), n, rng);
  }
  return apply_pair(vocal, accomp, noise, d);
}

double chroma_similarity(const dsp::AudioBuffer& a, const dsp::AudioBuffer& b) {
  const auto ca = chroma_of(a), cb = chroma_of(b);
  const int max_lag = static_cast<int>(std::lround(kChromaMaxLagSeconds * a.sample_rate / kChromaHop));
  const int min_overlap = std::max(1, std::min(ca.frames, cb.frames) / 2);
  double best = -1.0;
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    const int overlap = std::min(ca.frames, cb.frames - lag) - std::max(0, -lag);
    if (overlap < min_overlap) continue;
    best = std::max(best, pearson_at_lag(ca, cb, lag));
  }
  return best;
}

BackingMix backing_mix(const dsp::AudioBuffer& lead, const dsp::AudioBuffer& backing, int shift, std::size_t offset,
                       double snr_db) {
  const auto shifted = dsp::pitch_shift_semitones(backing, shift);
  BackingMix m;
  m.backing = fit_length(shifted.samples, lead.size(), offset);
  m.scale = mix_at_snr(lead.samples, m.backing, snr_db).scale;
  return m;
}

BackingChoice select_backing(const dsp::AudioBuffer& lead, const std::vector<dsp::AudioBuffer>& candidates, Rng& rng) {
  if (candidates.empty()) throw ValidationError("select_backing: no candidates");
  BackingChoice c;
  for (const auto& cand : candidates) c.scores.push_back(chroma_similarity(lead, cand));
  c.index = static_cast<std::size_t>(std::max_element(c.scores.begin(), c.scores.end()) - c.scores.begin());
  c.shift = rng.bernoulli(0.5) ? kBackingShift : -kBackingShift;
  c.snr_db = rng.uniform(kBackingSnrLo, kBackingSnrHi);
  const auto shifted = dsp::pitch_shift_semitones(candidates[c.index], c.shift);
  c.offset = draw_offset(shifted.size(), lead.size(), rng);
  c.shifted = {fit_length(shifted.samples, lead.size(), c.offset), lead.sample_rate};
  auto r = mix_at_snr(lead.samples, c.shifted.samples, c.snr_db);
  c.mixture = std::move(r.mixture);
  c.scale = r.scale;
  return c;
}

const char* to_string(TestSetKind k) {
  switch (k) {
    case TestSetKind::without_backing: return "without_backing";
    case TestSetKind::random_backing: return "random_backing";
    case TestSetKind::selected_backing: return "selected_backing";
  }
  return "?";
}

TestSetKind parse_kind(const std::string& s) {
  if (s == "without" || s == "without_backing") return TestSetKind::without_backing;
  if (s == "random" || s == "random_backing") return TestSetKind::random_backing;
  if (s == "selected" || s == "selected_backing") return TestSetKind::selected_backing;
  throw ConfigError("unknown test-set kind '" + s + "' (expected without, random or selected)");
}

Sources Sources::load(const std::filesystem::path& dir) {
  Sources s;
  s.vocals = load_dir(dir / "vocals");
  s.accomps = load_dir(dir / "accompaniment");
  s.noises = load_dir(dir / "noise");
  if (s.vocals.empty()) throw DataError("no vocal WAV files under '" + (dir / "vocals").string() + "'");
  return s;
}

const std::vector<std::string>& Manifest::columns() {
  static const std::vector<std::string> c = {
      "id",     "kind",          "seed",          "vocal",          "accomp",         "noise",
      "backing", "accomp_offset", "noise_offset", "backing_offset", "snr_accomp_db", "snr_noise_db",
      "snr_backing_db", "shift", "candidate_index", "gain"};
  return c;
}

std::string Manifest::to_tsv() const {
  std::ostringstream os;
  const auto& cols = columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "\t" : "") << cols[i];
  os << '\n';
  for (const auto& r : rows) {
    os << r.id << '\t' << to_string(r.kind) << '\t' << r.seed << '\t' << field(r.vocal) << '\t' << field(r.accomp)
       << '\t' << field(r.noise) << '\t' << field(r.backing) << '\t' << r.accomp_offset << '\t' << r.noise_offset
       << '\t' << r.backing_offset << '\t' << util::format_double(r.snr_accomp_db) << '\t'
       << util::format_double(r.snr_noise_db) << '\t' << util::format_double(r.snr_backing_db) << '\t' << r.shift
       << '\t' << r.candidate_index << '\t' << util::format_double(r.gain) << '\n';
  }
  return os.str();
}

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = util::split(line, '\t');
    if (!header) {
      if (f != columns()) throw DataError("manifest header does not match the expected column order");
      header = true;
      continue;
    }
    if (f.size() != columns().size()) {
      throw DataError("manifest line " + std::to_string(lineno) + ": expected " + std::to_string(columns().size()) +
                      " fields, got " + std::to_string(f.size()));
    }
    auto bad = [&](const char* what) {
      return DataError("manifest line " + std::to_string(lineno) + ": malformed " + what);
    };
    auto num = [&](const std::string& s, const char* what) {
      const auto v = util::to_double(s);
      if (!v) throw bad(what);
      return *v;
    };
    auto count = [&](const std::string& s, const char* what) {
      const auto v = util::to_int64(s);
      if (!v || *v < 0) throw bad(what);
      return static_cast<std::size_t>(*v);
    };
    ManifestRow r;
    r.id = f[0];
    r.kind = parse_kind(f[1]);
    std::uint64_t seed = 0;
    const auto [p, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), seed);
    if (ec != std::errc() || p != f[2].data() + f[2].size()) throw bad("seed");
    r.seed = seed;
    r.vocal = unfield(f[3]);
    r.accomp = unfield(f[4]);
    r.noise = unfield(f[5]);
    r.backing = unfield(f[6]);
    r.accomp_offset = count(f[7], "accomp_offset");
    r.noise_offset = count(f[8], "noise_offset");
    r.backing_offset = count(f[9], "backing_offset");
    r.snr_accomp_db = num(f[10], "snr_accomp_db");
    r.snr_noise_db = num(f[11], "snr_noise_db");
    r.snr_backing_db = num(f[12], "snr_backing_db");
    const auto shift = util::to_int(f[13]);
    const auto cand = util::to_int(f[14]);
    if (!shift) throw bad("shift");
    if (!cand) throw bad("candidate_index");
    r.shift = *shift;
    r.candidate_index = *cand;
    r.gain = num(f[15], "gain");
    m.rows.push_back(std::move(r));
  }
  if (!header) throw DataError("manifest is empty");
  return m;
}

void Manifest::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write manifest '" + path.string() + "'");
  f << to_tsv();
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read manifest '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::vector<SimItem> build_test_set(TestSetKind kind, const Sources& sources, int count_per_vocal, std::uint64_t seed) {
  if (count_per_vocal < 1) throw ConfigError("count per vocal must be positive");
  if (sources.vocals.empty()) throw ValidationError("build_test_set: no vocals");
  if (kind != TestSetKind::without_backing && sources.vocals.size() < 2) {
    throw ValidationError("backing test sets need at least two vocals");
  }
  std::vector<SimItem> items;
  std::size_t index = 0;
  for (std::size_t v = 0; v < sources.vocals.size(); ++v) {
    const auto& vocal = sources.vocals[v];
    for (int j = 0; j < count_per_vocal; ++j, ++index) {
      ManifestRow row;
      row.kind = kind;
      row.seed = derive_seed(seed, index);
      char id[32];
      std::snprintf(id, sizeof id, "item%05zu", index);
      row.id = id;
      row.vocal = vocal.name;
      Rng rng(row.seed);
      const std::size_t n = vocal.audio.size();
      if (!sources.accomps.empty()) {
        const auto& a = sources.accomps[rng.index(sources.accomps.size())];
        row.accomp = a.name;
        row.snr_accomp_db = rng.uniform(kPairSnrLo, kPairSnrHi);
        row.accomp_offset = draw_offset(a.audio.size(), n, rng);
      }
      if (!sources.noises.empty()) {
        const auto& z = sources.noises[rng.index(sources.noises.size())];
        row.noise = z.name;
        row.snr_noise_db = rng.uniform(kPairSnrLo, kPairSnrHi);
        row.noise_offset = draw_offset(z.audio.size(), n, rng);
      }
      std::vector<std::size_t> others;
      for (std::size_t o = 0; o < sources.vocals.size(); ++o) {
        if (o != v) others.push_back(o);
      }
      if (kind == TestSetKind::random_backing) {
        const std::size_t b = others[rng.index(others.size())];
        row.backing = sources.vocals[b].name;
        row.snr_backing_db = rng.uniform(kBackingSnrLo, kBackingSnrHi);
        row.backing_offset = draw_offset(sources.vocals[b].audio.size(), n, rng);
      } else if (kind == TestSetKind::selected_backing) {
        // Partial Fisher-Yates draw of up to ten candidates.
        const std::size_t k = std::min<std::size_t>(kBackingCandidates, others.size());
        for (std::size_t i = 0; i < k; ++i) std::swap(others[i], others[i + rng.index(others.size() - i)]);
        std::vector<dsp::AudioBuffer> cands;
        for (std::size_t i = 0; i < k; ++i) cands.push_back(sources.vocals[others[i]].audio);
        const auto choice = select_backing(vocal.audio, cands, rng);
        row.backing = sources.vocals[others[choice.index]].name;
        row.candidate_index = static_cast<int>(choice.index);
        row.shift = choice.shift;
        row.snr_backing_db = choice.snr_db;
        row.backing_offset = choice.offset;
      }
      items.push_back(compose(row, sources));
    }
  }
  return items;
}

SimItem regenerate(const ManifestRow& row, const Sources& sources) { return compose(row, sources); }

void write_test_set(const std::filesystem::path& dir, const std::vector<SimItem>& items) {
  std::filesystem::create_directories(dir / "noisy");
  std::filesystem::create_directories(dir / "clean");
  Manifest m;
  for (const auto& it : items) {
    dsp::write_wav((dir / "noisy" / (it.row.id + ".wav")).string(), it.noisy);
    dsp::write_wav((dir / "clean" / (it.row.id + ".wav")).string(), it.clean);
    m.rows.push_back(it.row);
  }
  m.save(dir / "manifest.tsv");
}

}  // namespace mbtf::sim
