#include "mbtf/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mbtf/dsp/wav.hpp"
#include "mbtf/error.hpp"
#include "mbtf/ipe/pipeline.hpp"
#include "mbtf/sim/simulate.hpp"
#include "mbtf/train/trainer.hpp"
#include "mbtf/util/text.hpp"

namespace mbtf::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Reported SI-SNR is capped so identical signals give a finite number.
constexpr double kMaxReportedSiSnr = 100.0;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// Applies a --config file on top of the parsed flags of `cmd`.
void apply_config(CLI::App& cmd, const std::string& path) {
  for (const auto& [key, value] : read_command_config(path)) {
    if (key == "config") throw UsageError("config file '" + path + "' may not name another config file");
    CLI::Option* opt = cmd.get_option_no_throw("--" + key);
    if (!opt) throw UsageError("unknown key '" + key + "' in config file '" + path + "'");
    opt->clear();
    opt->add_result(value);
    opt->run_callback();
  }
}

std::set<std::string> wav_names(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") names.insert(e.path().filename().string());
  }
  return names;
}

ipe::SpeakerEmbedding enrollment_embedding(const std::string& path, bool resample) {
  if (fs::path(path).extension() == ".wav") {
    dsp::WavReadOptions opt;
    opt.resample = resample;
    return ipe::default_speaker_encoder().encode(dsp::read_wav(path, opt));
  }
  return ipe::load_embedding(path);
}

// ---------------------------------------------------------------- enhance

struct EnhanceArgs {
  std::string input, output, weights, mode, lambda, enroll;
  std::optional<double> alpha, chunk_seconds;
  std::uint64_t seed = 0;
  bool resample = false, verbose = false;
};

int cmd_enhance(const EnhanceArgs& a, std::ostream& out) {
  if (a.input.empty() || a.output.empty() || a.weights.empty()) {
    throw UsageError("enhance needs --input, --output and --weights");
  }
  ipe::EnhanceOptions opts;
  opts.resample = a.resample;
  opts.alpha = a.alpha;
  opts.chunk_seconds = a.chunk_seconds;
  if (!a.mode.empty()) {
    try {
      opts.mode = ipe::parse_mode(a.mode);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  } else if (!a.enroll.empty()) {
    opts.mode = ipe::EnhanceMode::pe;
  } else if (!a.lambda.empty()) {
    opts.mode = ipe::EnhanceMode::ipe;
  }
  if (!a.lambda.empty() && opts.mode != ipe::EnhanceMode::ipe) {
    throw UsageError("--lambda applies to sve+ipe mode only");
  }
  if (!a.enroll.empty() && opts.mode != ipe::EnhanceMode::pe) throw UsageError("--enroll selects pe mode");
  if (opts.mode == ipe::EnhanceMode::pe && a.enroll.empty()) throw UsageError("pe mode needs --enroll");
  if (!a.lambda.empty() && a.lambda != "trained") {
    const auto v = util::to_double(a.lambda);
    if (!v || *v < 0.0 || *v > 1.0) throw UsageError("--lambda must be 'trained' or a number in [0, 1]");
    opts.lambda = *v;
  }

  const ipe::Model model = ipe::Model::load(a.weights);
  dsp::WavReadOptions ro;
  ro.resample = a.resample;
  const dsp::AudioBuffer audio = dsp::read_wav(a.input, ro);
  if (!a.enroll.empty()) opts.enrollment = enrollment_embedding(a.enroll, a.resample);

  ipe::EnhanceReport report;
  const dsp::AudioBuffer y = ipe::enhance(model, audio, opts, &report);
  dsp::write_wav(a.output, y);

  if (a.verbose) {
    out << "mode " << ipe::to_string(opts.mode) << ", " << audio.size() << " samples\n";
    if (opts.mode == ipe::EnhanceMode::ipe) {
      out << "lambda " << report.state.lambda << ", alpha " << report.state.alpha << "\n";
      for (std::size_t k = 0; k < report.chunks.size(); ++k) {
        const auto& c = report.chunks[k];
        out << "chunk " << k << " frames " << c.begin_frame << "-" << c.end_frame << " score " << fixed(c.score, 4)
            << ' ' << (c.too_short ? "too-short" : c.accepted ? "update" : "keep") << "\n";
      }
      out << "updates " << report.state.updated_count << "\n";
    }
  }
  return kSuccess;
}

// --------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string sources, out_dir, kind = "without", regenerate;
  int count = 5;
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  if (a.sources.empty() || a.out_dir.empty()) throw UsageError("simulate needs --sources and --out");
  if (a.count < 1) throw UsageError("--count must be at least 1");
  sim::TestSetKind kind;
  try {
    kind = sim::parse_kind(a.kind);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto sources = sim::Sources::load(a.sources);
  std::vector<sim::SimItem> items;
  if (!a.regenerate.empty()) {
    for (const auto& row : sim::Manifest::load(a.regenerate).rows) items.push_back(sim::regenerate(row, sources));
  } else {
    items = sim::build_test_set(kind, sources, a.count, a.seed);
  }
  sim::write_test_set(a.out_dir, items);
  out << "wrote " << items.size() << " items to " << a.out_dir << "\n";
  return kSuccess;
}

// -------------------------------------------------------------- train-toy

struct TrainArgs {
  std::string data, stage = "sve", sve_weights, topology, out_path, log_path, resume;
  long steps = 200;
  std::uint64_t seed = 0;
  std::optional<double> peak_lr;
  long warmup = 5000;
  long print_every = 50;
};

std::vector<train::TrainItem> load_train_items(const fs::path& dir, bool need_enroll) {
  const auto noisy = wav_names(dir / "noisy");
  const auto clean = wav_names(dir / "clean");
  std::vector<train::TrainItem> items;
  for (const auto& name : noisy) {
    if (!clean.count(name)) continue;
    train::TrainItem it;
    it.noisy = dsp::read_wav((dir / "noisy" / name).string());
    it.clean = dsp::read_wav((dir / "clean" / name).string());
    if (fs::exists(dir / "backing" / name)) it.backing = dsp::read_wav((dir / "backing" / name).string());
    if (fs::exists(dir / "enroll" / name)) {
      it.enroll = dsp::read_wav((dir / "enroll" / name).string());
    } else if (need_enroll) {
      throw DataError("ipe stage: missing enroll/" + name + " under '" + dir.string() + "'");
    }
    items.push_back(std::move(it));
  }
  if (items.empty()) throw DataError("no matching noisy/ and clean/ WAV files under '" + dir.string() + "'");
  return items;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.data.empty() || a.out_path.empty()) throw UsageError("train-toy needs --data and --out");
  if (a.steps < 0) throw UsageError("--steps must be non-negative");
  train::Stage stage;
  try {
    stage = train::parse_stage(a.stage);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (stage == train::Stage::ipe && a.sve_weights.empty() && a.resume.empty()) {
    throw ConfigError("ipe stage requires --sve-weights from a finished sve stage");
  }

  train::TrainConfig cfg;
  cfg.stage = stage;
  cfg.steps = a.steps;
  cfg.seed = a.seed;
  cfg.schedule.warmup_steps = a.warmup;
  if (a.peak_lr) cfg.schedule = train::ScheduleConfig::with_peak(*a.peak_lr, a.warmup);

  std::optional<train::TrainState> resume;
  std::optional<ipe::Model> model;
  if (!a.resume.empty()) {
    const auto ck = nn::ModelWeights::load(a.resume);
    model.emplace(ipe::Model::from_weights(ck));
    resume = train::restore_state(ck);
  } else if (stage == train::Stage::ipe) {
    model.emplace(ipe::Model::load(a.sve_weights));
  } else {
    const auto topo = a.topology.empty() ? mbtfnet::MbtfConfig::toy() : mbtfnet::MbtfConfig::load(a.topology);
    model.emplace(topo, a.seed);
  }

  const auto items = load_train_items(a.data, stage == train::Stage::ipe);
  std::ofstream log;
  if (!a.log_path.empty()) {
    log.open(a.log_path);
    if (!log) throw DataError("cannot write loss log '" + a.log_path + "'");
    log << train::loss_log_header() << "\n";
  }
  cfg.on_step = [&](const train::LossReport& r) {
    if (log.is_open()) log << train::loss_log_line(r) << "\n";
    if (a.print_every > 0 && r.step % a.print_every == 0) {
      out << "step " << r.step << " lr " << r.lr << " si_snr " << fixed(r.si_snr_db, 3) << " total "
          << fixed(r.total, 4) << "\n";
    }
  };

  const auto result = train::train_toy(*model, items, cfg, resume ? &*resume : nullptr);
  train::checkpoint(*model, result.state, stage).save(a.out_path);
  out << "trained " << result.curve.size() << " steps (" << train::to_string(stage) << ", " << items.size()
      << " items); checkpoint " << a.out_path << "\n";
  if (model->lambda_t) out << "lambda_t " << util::format_double(*model->lambda_t) << "\n";
  if (model->stats) {
    out << "cleanliness mean " << util::format_double(model->stats->mean) << " std "
        << util::format_double(model->stats->std) << "\n";
  }
  return kSuccess;
}

// --------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string est, ref, format = "table";
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (a.est.empty() || a.ref.empty()) throw UsageError("evaluate needs --est and --ref");
  if (a.format != "table" && a.format != "tsv" && a.format != "json") {
    throw UsageError("--format must be table, tsv or json");
  }
  const auto est = wav_names(a.est);
  const auto ref = wav_names(a.ref);
  std::vector<std::string> common;
  std::set_intersection(est.begin(), est.end(), ref.begin(), ref.end(), std::back_inserter(common));
  if (common.empty()) throw DataError("no WAV file names shared by '" + a.est + "' and '" + a.ref + "'");

  std::vector<double> scores;
  for (const auto& name : common) {
    const auto e = dsp::read_wav((fs::path(a.est) / name).string());
    const auto r = dsp::read_wav((fs::path(a.ref) / name).string());
    if (e.size() != r.size()) throw DataError(name + ": estimate and reference lengths differ");
    scores.push_back(std::min(kMaxReportedSiSnr, train::si_snr(e.samples, r.samples)));
  }
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());

  if (a.format == "json") {
    json j;
    j["items"] = json::array();
    for (std::size_t k = 0; k < common.size(); ++k) j["items"].push_back({{"name", common[k]}, {"si_snr_db", scores[k]}});
    j["mean_si_snr_db"] = mean;
    j["count"] = common.size();
    out << j.dump(2) << "\n";
  } else if (a.format == "tsv") {
    out << "name\tsi_snr_db\n";
    for (std::size_t k = 0; k < common.size(); ++k) out << common[k] << '\t' << util::format_double(scores[k]) << "\n";
    out << "mean\t" << util::format_double(mean) << "\n";
  } else {
    std::size_t w = 4;
    for (const auto& n : common) w = std::max(w, n.size());
    out << std::left << std::setw(static_cast<int>(w)) << "item" << "  SI-SNR (dB)\n";
    for (std::size_t k = 0; k < common.size(); ++k) {
      out << std::left << std::setw(static_cast<int>(w)) << common[k] << "  " << std::right << std::setw(11)
          << fixed(scores[k], 2) << "\n";
    }
    out << std::left << std::setw(static_cast<int>(w)) << "mean" << "  " << std::right << std::setw(11)
        << fixed(mean, 2) << "\n";
  }
  return kSuccess;
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  std::string weights, wav;
  bool as_json = false;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  if (a.weights.empty() == a.wav.empty()) throw UsageError("inspect needs exactly one of --weights or --wav");
  json j;
  if (!a.wav.empty()) {
    const auto audio = dsp::read_wav(a.wav);
    double peak = 0.0;
    for (double v : audio.samples) peak = std::max(peak, std::abs(v));
    j = {{"file", a.wav},
         {"sample_rate", audio.sample_rate},
         {"samples", audio.size()},
         {"seconds", audio.duration()},
         {"peak_dbfs", peak > 0.0 ? 20.0 * std::log10(peak) : -std::numeric_limits<double>::infinity()}};
  } else {
    const auto w = nn::ModelWeights::load(a.weights);
    const auto model = ipe::Model::from_weights(w);
    const auto& store = model.store();
    j["file"] = a.weights;
    j["tensors"] = w.tensors().size();
    j["parameters"] = {{"sve", store.parameter_count("sve/")},
                       {"ipe", store.parameter_count("ipe/")},
                       {"total", store.parameter_count("")}};
    j["sve_trained"] = model.sve_trained;
    if (model.lambda_t) j["lambda_t"] = *model.lambda_t;
    if (model.stats) j["cleanliness"] = {{"mean", model.stats->mean}, {"std", model.stats->std}};
    json meta = json::object();
    for (const auto& [k, v] : w.metadata()) {
      if (k != "topology") meta[k] = v;
    }
    j["metadata"] = meta;
    j["topology"] = model.config().to_text();
  }
  if (a.as_json) {
    out << j.dump(2) << "\n";
    return kSuccess;
  }
  for (const auto& [k, v] : j.items()) {
    if (k == "topology") {
      out << "topology:\n";
      std::istringstream ts(v.get<std::string>());
      for (std::string line; std::getline(ts, line);) out << "  " << line << "\n";
    } else if (v.is_string()) {
      out << k << ": " << v.get<std::string>() << "\n";
    } else {
      out << k << ": " << v.dump() << "\n";
    }
  }
  return kSuccess;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_command_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = util::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    out.emplace_back(util::trim(line.substr(0, eq)), util::trim(line.substr(eq + 1)));
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage singing voice enhancement toolkit", args.empty() ? "mbtf" : args[0]};
  app.require_subcommand(1);
  std::map<CLI::App*, std::string> config_paths;
  auto with_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_paths[cmd], "key = value file; its entries override flags");
  };

  EnhanceArgs ea;
  auto* enh = app.add_subcommand("enhance", "Enhance a WAV file");
  enh->add_option("-i,--input", ea.input, "Input WAV");
  enh->add_option("-o,--output", ea.output, "Output WAV (float32)");
  enh->add_option("-w,--weights", ea.weights, "Model weights");
  enh->add_option("--mode", ea.mode, "sve | sve+ipe | pe");
  enh->add_option("--lambda", ea.lambda, "IPE threshold: 'trained' or a value in [0, 1]");
  enh->add_option("--enroll", ea.enroll, "Enrollment WAV or embedding file (pe mode)");
  enh->add_option("--alpha", ea.alpha, "Embedding smoothing factor");
  enh->add_option("--chunk-seconds", ea.chunk_seconds, "IPE chunk length");
  enh->add_option("--seed", ea.seed, "Seed (the pipeline itself is deterministic)");
  enh->add_flag("--resample", ea.resample, "Convert other sample rates to 44.1 kHz");
  enh->add_flag("-v,--verbose", ea.verbose, "Print per-chunk scores and update decisions");
  with_config(enh);

  SimulateArgs sa;
  auto* simc = app.add_subcommand("simulate", "Generate a simulated test set");
  simc->add_option("--sources", sa.sources, "Directory with vocals/, accompaniment/, noise/");
  simc->add_option("--out", sa.out_dir, "Output directory");
  simc->add_option("--kind", sa.kind, "without | random | selected");
  simc->add_option("--count", sa.count, "Mixtures per vocal");
  simc->add_option("--seed", sa.seed, "Master seed");
  simc->add_option("--regenerate", sa.regenerate, "Rebuild the items of an existing manifest");
  with_config(simc);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train-toy", "Train a toy model on a small data directory");
  tr->add_option("--data", ta.data, "Directory with noisy/, clean/ and optional backing/, enroll/");
  tr->add_option("--stage", ta.stage, "sve | ipe");
  tr->add_option("--sve-weights", ta.sve_weights, "Checkpoint of a finished sve stage (ipe stage)");
  tr->add_option("--topology", ta.topology, "Model configuration file (default: toy topology)");
  tr->add_option("--out", ta.out_path, "Checkpoint to write");
  tr->add_option("--log", ta.log_path, "Loss log (tab separated)");
  tr->add_option("--resume", ta.resume, "Continue from a checkpoint");
  tr->add_option("--steps", ta.steps, "Optimizer steps");
  tr->add_option("--seed", ta.seed, "Seed");
  tr->add_option("--peak-lr", ta.peak_lr, "Rescale the schedule so it peaks at this rate");
  tr->add_option("--warmup", ta.warmup, "Warmup steps");
  tr->add_option("--print-every", ta.print_every, "Progress line interval (0 = quiet)");
  with_config(tr);

  EvaluateArgs va;
  auto* ev = app.add_subcommand("evaluate", "SI-SNR of estimates against references");
  ev->add_option("--est", va.est, "Directory of estimates");
  ev->add_option("--ref", va.ref, "Directory of references");
  ev->add_option("--format", va.format, "table | tsv | json");
  with_config(ev);

  InspectArgs ia;
  auto* ins = app.add_subcommand("inspect", "Describe a weights file or a WAV file");
  ins->add_option("--weights", ia.weights, "Weights or checkpoint");
  ins->add_option("--wav", ia.wav, "WAV file");
  ins->add_flag("--json", ia.as_json, "Machine-readable output");
  with_config(ins);

  std::vector<const char*> argv;
  std::vector<std::string> storage = args.empty() ? std::vector<std::string>{"mbtf"} : args;
  for (const auto& s : storage) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kSuccess;
    }
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsageError;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    if (!config_paths[cmd].empty()) apply_config(*cmd, config_paths[cmd]);
    if (cmd == enh) return cmd_enhance(ea, out);
    if (cmd == simc) return cmd_simulate(sa, out);
    if (cmd == tr) return cmd_train(ta, out);
    if (cmd == ev) return cmd_evaluate(va, out);
    return cmd_inspect(ia, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kUsageError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ValidationError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
}

}  // namespace mbtf::cli
