#include "mbtf/mbtfnet/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mbtf/error.hpp"
#include "mbtf/util/text.hpp"

namespace mbtf::mbtfnet {

namespace {

using util::trim;

int parse_int(const std::string& key, const std::string& v) {
  const auto out = util::to_int(v);
  if (!out) throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return *out;
}

double parse_double(const std::string& key, const std::string& v) {
  const auto out = util::to_double(v);
  if (!out) throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return *out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<int> parse_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
  return out;
}

std::string list_str(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::function<void(MbtfConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const MbtfConfig&)> get;
};

template <typename M>
Field int_field(M MbtfConfig::*m) {
  return {[m](MbtfConfig& c, const std::string& k, const std::string& v) { c.*m = parse_int(k, v); },
          [m](const MbtfConfig& c) { return std::to_string(c.*m); }};
}

Field double_field(double MbtfConfig::*m) {
  return {[m](MbtfConfig& c, const std::string& k, const std::string& v) { c.*m = parse_double(k, v); },
          [m](const MbtfConfig& c) { return util::format_double(c.*m); }};
}

Field list_field(std::vector<int> MbtfConfig::*m) {
  return {[m](MbtfConfig& c, const std::string& k, const std::string& v) { c.*m = parse_list(k, v); },
          [m](const MbtfConfig& c) { return list_str(c.*m); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f = {
      {"num_bands", int_field(&MbtfConfig::num_bands)},
      {"encoder_channels", list_field(&MbtfConfig::encoder_channels)},
      {"freq_strides", list_field(&MbtfConfig::freq_strides)},
      {"encoder_kf", int_field(&MbtfConfig::encoder_kf)},
      {"encoder_kt", int_field(&MbtfConfig::encoder_kt)},
      {"tdb_per_block", int_field(&MbtfConfig::tdb_per_block)},
      {"tdb_kf", int_field(&MbtfConfig::tdb_kf)},
      {"tdb_kt", int_field(&MbtfConfig::tdb_kt)},
      {"dprnn_layers", int_field(&MbtfConfig::dprnn_layers)},
      {"rnn_units", int_field(&MbtfConfig::rnn_units)},
      {"stcm_layers", int_field(&MbtfConfig::stcm_layers)},
      {"stcm_channels", int_field(&MbtfConfig::stcm_channels)},
      {"stcm_depth", int_field(&MbtfConfig::stcm_depth)},
      {"dpcb_count", int_field(&MbtfConfig::dpcb_count)},
      {"fdb_per_dpcb", int_field(&MbtfConfig::fdb_per_dpcb)},
      {"tdb_per_dpcb", int_field(&MbtfConfig::tdb_per_dpcb)},
      {"dpcb_kf", int_field(&MbtfConfig::dpcb_kf)},
      {"dpcb_kt", int_field(&MbtfConfig::dpcb_kt)},
      {"dpcb_width", int_field(&MbtfConfig::dpcb_width)},
      {"z_adapter_channels", int_field(&MbtfConfig::z_adapter_channels)},
      {"causal",
       {[](MbtfConfig& c, const std::string& k, const std::string& v) { c.causal = parse_bool(k, v); },
        [](const MbtfConfig& c) { return std::string(c.causal ? "true" : "false"); }}},
      {"frame_len", int_field(&MbtfConfig::frame_len)},
      {"hop", int_field(&MbtfConfig::hop)},
      {"fft_size", int_field(&MbtfConfig::fft_size)},
      {"embed_dim", int_field(&MbtfConfig::embed_dim)},
      {"snr_gru_layers", int_field(&MbtfConfig::snr_gru_layers)},
      {"snr_rnn_units", int_field(&MbtfConfig::snr_rnn_units)},
      {"alpha", double_field(&MbtfConfig::alpha)},
      {"chunk_seconds", double_field(&MbtfConfig::chunk_seconds)},
  };
  return f;
}

}  // namespace

std::vector<int> MbtfConfig::encoder_freqs() const {
  std::vector<int> f{freq_bins()};
  for (int s : freq_strides) {
    const int pad = encoder_kf - 1;
    f.push_back((f.back() + pad - encoder_kf) / s + 1);
  }
  return f;
}

void MbtfConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(num_bands >= 2, "num_bands must be >= 2");
  need(!encoder_channels.empty(), "encoder_channels must not be empty");
  need(encoder_channels.size() == freq_strides.size(), "freq_strides needs one entry per encoder block");
  for (int c : encoder_channels) need(c >= 1, "encoder channels must be positive");
  for (int s : freq_strides) need(s >= 1, "frequency strides must be positive");
  need(encoder_kf >= 1 && encoder_kt >= 1 && tdb_kf >= 1 && tdb_kt >= 1 && dpcb_kf >= 1 && dpcb_kt >= 1,
       "kernel sizes must be positive");
  need(tdb_per_block >= 0 && fdb_per_dpcb >= 0 && tdb_per_dpcb >= 0, "block counts must be non-negative");
  need(dprnn_layers >= 0 && stcm_layers >= 0, "bottleneck layer counts must be non-negative");
  need(rnn_units >= 1 && stcm_channels >= 1 && stcm_depth >= 1, "bottleneck sizes must be positive");
  need(dpcb_count == num_bands, "dpcb_count must equal num_bands (one intra-band DPCB per sub-band)");
  need(dpcb_width >= 1 && z_adapter_channels >= 1, "DPCB width and adapter channels must be positive");
  need(hop >= 1 && hop <= frame_len && frame_len <= fft_size, "STFT needs 1 <= hop <= frame_len <= fft_size");
  need(embed_dim >= 1 && snr_gru_layers >= 1 && snr_rnn_units >= 1, "IPE sizes must be positive");
  need(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  need(chunk_seconds >= 1.0, "chunk_seconds must be at least 1 (the speaker encoder needs 1 s of audio)");
  for (int f : encoder_freqs()) need(f >= 1, "encoder reduces the frequency axis below one bin");
}

std::string MbtfConfig::to_text() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
  return out;
}

MbtfConfig MbtfConfig::parse(const std::string& text) {
  MbtfConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& [k, field] : fields()) {
      if (k == key) {
        field.set(cfg, key, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

MbtfConfig MbtfConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

MbtfConfig MbtfConfig::toy(bool causal) {
  MbtfConfig c;
  c.encoder_channels = {8, 16, 16, 24};
  c.freq_strides = {2, 2, 2, 2};
  c.tdb_per_block = 2;
  c.rnn_units = 32;
  c.stcm_channels = 16;
  c.stcm_depth = 3;
  c.fdb_per_dpcb = 2;
  c.tdb_per_dpcb = 2;
  c.dpcb_width = 8;
  c.snr_rnn_units = 32;
  c.causal = causal;
  return c;
}

bool operator==(const MbtfConfig& a, const MbtfConfig& b) { return a.to_text() == b.to_text(); }

}  // namespace mbtf::mbtfnet
