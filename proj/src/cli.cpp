#include "deepma/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "deepma/checkpoint.hpp"
#include "deepma/config.hpp"
#include "deepma/data.hpp"
#include "deepma/scenario.hpp"
#include "deepma/training.hpp"

namespace deepma {

namespace fs = std::filesystem;

LogLevel log_level_from_env() {
  const char* v = std::getenv("DEEPMA_LOG");
  if (!v) return LogLevel::info;
  const std::string s(v);
  if (s == "quiet") return LogLevel::quiet;
  if (s == "debug") return LogLevel::debug;
  return LogLevel::info;
}

const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys = {
      "seed", "out",
      "data.source", "data.path", "data.test_path", "data.size", "data.train_count", "data.val_count",
      "data.test_count", "data.seed",
      "model.edps", "model.channels", "model.hidden_channels", "model.strides", "model.afb_reduction",
      "model.power", "model.checkpoint",
      "train.epochs", "train.max_iterations", "train.batch_size", "train.lr_schedule", "train.snr_policy",
      "train.snr_low_db", "train.snr_high_db", "train.snr_fixed_db", "train.channel", "train.val_every",
      "train.val_snr_db", "train.history", "train.state", "train.resume",
      "eval.snr_db", "eval.draws", "eval.channel", "eval.gating", "eval.threshold", "eval.references",
      "eval.calibration_trials",
      "scenario.mode", "scenario.snr_db", "scenario.draws", "scenario.channel", "scenario.images",
      "scenario.gating", "scenario.threshold", "scenario.references", "scenario.export_images",
      "scenario.calibration_trials",
      "detect.snr_db", "detect.trials", "detect.channel", "detect.threshold", "detect.references",
  };
  return keys;
}

namespace {

class Logger {
 public:
  Logger(std::ostream& os, LogLevel level) : os_(os), level_(level) {}
  void info(const std::string& msg) const {
    if (level_ != LogLevel::quiet) os_ << "[info] " << msg << '\n';
  }
  void debug(const std::string& msg) const {
    if (level_ == LogLevel::debug) os_ << "[debug] " << msg << '\n';
  }
  void error(const std::string& msg) const { os_ << "[error] " << msg << '\n'; }

 private:
  std::ostream& os_;
  LogLevel level_;
};

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fixed4(v[i]);
  return s;
}

struct Datasets {
  ImageSet train, val, test, refs;
};

struct Experiment {
  Config cfg;
  std::uint64_t seed = 1;
  fs::path out;
};

bool is_synthetic(const std::string& source) {
  return source == "shapes" || source == "noise" || source == "gradients";
}

ImageSet load_source(const std::string& source, const fs::path& path, Index size) {
  ImageSet set = source == "cifar10" ? load_cifar10(path) : load_cifar100(path);
  if (size != set.height) set = center_crop(set, size);
  return set;
}

Datasets load_data(const Experiment& ex, Index size, int refs_needed, bool need_train) {
  const Config& c = ex.cfg;
  const std::string source = need_train ? c.required("data.source") : c.str("data.source", "shapes");
  const std::uint64_t seed = c.u64("data.seed", ex.seed);
  const long train_count = c.integer("data.train_count", 4096);
  const long val_count = c.integer("data.val_count", 100);
  const long test_count = c.integer("data.test_count", 100);
  if (train_count < 0 || val_count < 0 || test_count < 0) throw ConfigError("data: counts must be non-negative");
  Datasets d;
  if (is_synthetic(source)) {
    const auto kind = parse_synthetic_kind(source);
    if (need_train) {
      d.train = synthetic_set(train_count, size, size, derive_seed(seed, 0), kind);
      d.val = synthetic_set(val_count, size, size, derive_seed(seed, 1), kind);
    }
    d.test = synthetic_set(test_count, size, size, derive_seed(seed, 2), kind);
    d.refs = synthetic_set(refs_needed, size, size, derive_seed(seed, 3), kind);
  } else if (source == "cifar10" || source == "cifar100") {
    const fs::path path = c.required("data.path");
    if (need_train) {
      const ImageSet all = load_source(source, path, size);
      if (train_count + val_count > all.count) {
        throw ConfigError("data: " + path.string() + " holds " + std::to_string(all.count) +
                          " images, fewer than train_count + val_count");
      }
      d.train = all.subset(0, train_count);
      d.val = all.subset(train_count, val_count);
    }
    const ImageSet test_file = load_source(source, c.str("data.test_path", path.string()), size);
    if (test_count + refs_needed > test_file.count) {
      throw ConfigError("data: test file holds " + std::to_string(test_file.count) +
                        " images, need test_count plus " + std::to_string(refs_needed) + " reference images");
    }
    d.test = test_file.subset(0, test_count);
    d.refs = test_file.subset(test_count, refs_needed);
  } else {
    throw ConfigError("data.source: unknown source '" + source + "' (expected shapes, noise, gradients, cifar10, cifar100)");
  }
  return d;
}

ArchConfig arch_from_config(const Config& c) {
  ArchConfig arch;
  const long size = c.integer("data.size", 16);
  arch.height = arch.width = int(size);
  arch.edp_count = int(c.integer("model.edps", 2));
  std::vector<long> hidden = c.integers("model.hidden_channels", {32, 64, 64});
  hidden.push_back(c.integer("model.channels", 16));
  arch.block_channels.assign(hidden.begin(), hidden.end());
  const auto strides = c.integers("model.strides", {1, 2, 2, 2});
  arch.strides.assign(strides.begin(), strides.end());
  arch.afb_reduction = int(c.integer("model.afb_reduction", 2));
  arch.power = c.real("model.power", 2.0);
  try {
    arch.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return arch;
}

std::vector<LrStep> parse_schedule(const Config& c) {
  if (!c.has("train.lr_schedule")) return TrainConfig{}.lr_schedule;
  const std::string text = c.str("train.lr_schedule", "");
  std::vector<LrStep> steps;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    const auto epoch = colon == std::string::npos ? std::nullopt : parse_long(item.substr(0, colon));
    const auto lr = colon == std::string::npos ? std::nullopt : parse_double(item.substr(colon + 1));
    if (!epoch || !lr) {
      throw ConfigError(c.origin() + ": train.lr_schedule: expected 'epoch:lr, ...', got '" + text + "'");
    }
    steps.push_back({int(*epoch), *lr});
  }
  return steps;
}

TrainConfig train_config(const Experiment& ex) {
  const Config& c = ex.cfg;
  TrainConfig t;
  c.required("train.epochs");
  t.max_epochs = int(c.integer("train.epochs", 0));
  t.max_iterations = c.integer("train.max_iterations", 0);
  t.batch_size = int(c.integer("train.batch_size", 64));
  t.lr_schedule = parse_schedule(c);
  const std::string policy = c.str("train.snr_policy", "uniform");
  if (policy == "uniform") {
    t.snr.kind = SnrPolicy::Kind::uniform;
    t.snr.low_db = c.real("train.snr_low_db", 0.0);
    t.snr.high_db = c.real("train.snr_high_db", 20.0);
  } else if (policy == "fixed") {
    t.snr.kind = SnrPolicy::Kind::fixed;
    t.snr.fixed_db = c.reals("train.snr_fixed_db", {});
  } else {
    throw ConfigError(c.origin() + ": train.snr_policy: expected uniform or fixed, got '" + policy + "'");
  }
  t.channel = parse_scenario_kind(c.str("train.channel", "d2d"));
  t.seed = ex.seed;
  t.val_every = int(c.integer("train.val_every", 1));
  t.val_snr_db = c.real("train.val_snr_db", 10.0);
  t.checkpoint_path = c.str("model.checkpoint", (ex.out / "model.dmn").string());
  t.history_path = c.str("train.history", (ex.out / "history.csv").string());
  t.state_path = c.str("train.state", (ex.out / "train_state.bin").string());
  t.validate();
  return t;
}

void log_defaults(const Config& c, const Logger& log) {
  std::vector<std::string> keys = c.defaulted();
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  for (const auto& k : keys) log.info("default used for " + k);
}

DmaNetF load_model(const Experiment& ex) {
  const fs::path path = ex.cfg.required("model.checkpoint");
  DmaNetF net = load_checkpoint(path);
  if (ex.cfg.has("model.edps")) {
    const long want = ex.cfg.integer("model.edps", 0);
    if (want != long(net.edps.size())) {
      throw ConfigError("model.edps = " + std::to_string(want) + " but checkpoint " + path.string() + " holds " +
                        std::to_string(net.edps.size()) + " EDPs");
    }
  }
  if (ex.cfg.has("data.size") && ex.cfg.integer("data.size", 0) != net.arch.height) {
    throw ConfigError("data.size does not match the checkpoint's " + std::to_string(net.arch.height) + "x" +
                      std::to_string(net.arch.width) + " images");
  }
  return net;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

int cmd_train(const Experiment& ex, std::ostream& out, const Logger& log) {
  const Config& c = ex.cfg;
  c.required("data.source");
  TrainConfig tc = train_config(ex);
  const ArchConfig arch = arch_from_config(c);
  const Datasets data = load_data(ex, arch.height, 0, true);
  log_defaults(c, log);

  DmaNetF net = DmaNetF::create(arch, derive_seed(ex.seed, 0x696e6974));
  TrainState state = initial_train_state(tc);
  if (c.boolean("train.resume", false) && fs::exists(tc.state_path)) {
    state = load_train_state(tc.state_path, net);
    if (!(net.arch == arch)) throw ConfigError("train.resume: saved state was trained with a different model config");
    log.info("resuming at epoch " + std::to_string(state.epoch));
  }
  log.info("training " + std::to_string(arch.edp_count) + " EDPs, K = " + std::to_string(arch.symbol_count()) +
           ", " + std::to_string(net.parameter_count()) + " parameters, " + std::to_string(data.train.count) +
           " training images");
  const TrainResult result = train_loop(net, data.train, data.val, tc, state, [&](const HistoryRow& row) {
    log.info("epoch " + std::to_string(row.epoch) + " iteration " + std::to_string(row.iteration) + " loss " +
             std::to_string(row.loss) + (std::isnan(row.val_psnr_db) ? "" : " val PSNR " + fixed4(row.val_psnr_db)));
  });
  out << "best_val_psnr_db " << fixed4(state.best_val_psnr) << "\ncheckpoint " << tc.checkpoint_path.string()
      << "\nhistory " << tc.history_path.string() << '\n';
  log.debug("checkpoints written: " + std::to_string(result.checkpoints_written));
  return kExitOk;
}

// Per-SNR gate thresholds: configured, or calibrated from paired/unpaired trials.
GateConfig gate_for(const Config& c, const std::string& section, DmaNetF& net, const Datasets& data,
                    const std::vector<ReferenceBank>& banks, ScenarioKind channel, double snr, std::uint64_t seed,
                    const Logger& log) {
  GateConfig g;
  g.references = int(c.integer(section + ".references", 2));
  if (const auto th = c.optional_real(section + ".threshold")) {
    g.threshold = *th;
  } else {
    DetectionConfig dc;
    dc.channel = channel;
    dc.snr_db = {snr};
    dc.trials = int(c.integer(section + ".calibration_trials", 100));
    dc.seed = derive_seed(seed, 0x63616c);
    const auto point = run_detection(net, data.test, banks, dc).front();
    g.threshold = point.calibration.threshold;
    log.info(section + ": calibrated gate threshold " + std::to_string(g.threshold) + " at " + fixed4(snr) +
             " dB (calibration accuracy " + fixed4(point.accuracy) + ")");
  }
  g.validate();
  return g;
}

int cmd_eval(const Experiment& ex, std::ostream& out, const Logger& log) {
  const Config& c = ex.cfg;
  DmaNetF net = load_model(ex);
  const int refs = int(c.integer("eval.references", 2));
  if (refs < 1) throw ConfigError("eval.references must be at least 1");
  const Datasets data = load_data(ex, net.arch.height, refs * int(net.edps.size()), false);
  if (data.test.count < 1) throw ConfigError("eval: empty dataset");
  const auto snrs = c.reals("eval.snr_db", {1, 4, 7, 10, 13, 16, 19, 22, 25});
  const int draws = int(c.integer("eval.draws", 10));
  if (draws < 1) throw ConfigError("eval.draws must be at least 1");
  const bool gating = c.boolean("eval.gating", true);
  const ScenarioKind channel = parse_scenario_kind(c.str("eval.channel", "awgn"));
  log_defaults(c, log);

  const auto banks = gating ? build_reference_banks(net, data.refs, refs) : std::vector<ReferenceBank>{};
  std::string csv = "snr_db,edp,psnr_db,avg_psnr_db\n";
  for (double snr : snrs) {
    ScenarioConfig sc;
    sc.mode = ScenarioMode::multiplex;
    sc.channel = channel;
    sc.snr_db = {snr};
    sc.draws = draws;
    sc.seed = derive_seed(ex.seed, 0x6576616c);
    sc.gating = gating;
    if (gating) sc.gate = gate_for(c, "eval", net, data, banks, channel, snr, ex.seed, log);
    const auto outcomes = run_scenario(net, data.test, sc, banks);
    std::vector<TransmissionReport> all;
    std::map<int, std::vector<TransmissionReport>> by_edp;
    for (const auto& o : outcomes) {
      all.push_back(o.report);
      by_edp[o.report.edp].push_back(o.report);
    }
    const bool any = std::any_of(all.begin(), all.end(), [](const auto& r) { return r.psnr_db.has_value(); });
    const std::string avg = any ? fixed4(avg_psnr(all)) : "";
    for (auto& [edp, reports] : by_edp) {
      const bool some = std::any_of(reports.begin(), reports.end(), [](const auto& r) { return r.psnr_db.has_value(); });
      csv += fixed4(snr) + "," + std::to_string(edp) + "," + (some ? fixed4(avg_psnr(reports)) : "") + "," + avg + "\n";
    }
    log.info("eval " + fixed4(snr) + " dB: average PSNR " + (any ? avg : "n/a (all abandoned)"));
  }
  const fs::path path = ex.out / "eval.csv";
  write_text(path, csv);
  out << csv;
  return kExitOk;
}

int cmd_scenario(const Experiment& ex, std::ostream& out, const Logger& log) {
  const Config& c = ex.cfg;
  DmaNetF net = load_model(ex);
  const int n = int(net.edps.size());
  const int refs = int(c.integer("scenario.references", 2));
  if (refs < 1) throw ConfigError("scenario.references must be at least 1");
  Datasets data = load_data(ex, net.arch.height, refs * n, false);
  const long images = c.integer("scenario.images", data.test.count);
  if (images < 1 || images > data.test.count) {
    throw ConfigError("scenario.images must lie in [1, " + std::to_string(data.test.count) + "]");
  }
  data.test = data.test.subset(0, images);
  ScenarioConfig sc;
  sc.mode = parse_scenario_mode(c.str("scenario.mode", "multiplex"));
  sc.channel = parse_scenario_kind(c.str("scenario.channel", "awgn"));
  sc.draws = int(c.integer("scenario.draws", 1));
  sc.gating = c.boolean("scenario.gating", true);
  sc.keep_images = c.boolean("scenario.export_images", true);
  sc.seed = derive_seed(ex.seed, 0x7363656e);
  const auto snrs = c.reals("scenario.snr_db", {10.0});
  if (sc.draws < 1) throw ConfigError("scenario.draws must be at least 1");
  log_defaults(c, log);

  const auto banks = sc.gating ? build_reference_banks(net, data.refs, refs) : std::vector<ReferenceBank>{};
  const fs::path image_dir = ex.out / "images";
  if (sc.keep_images) fs::create_directories(image_dir);
  std::string csv = "scenario,snr_db,edp,draw,image,gate,aacd,psnr_db\n";
  for (double snr : snrs) {
    sc.snr_db = {snr};
    if (sc.gating) sc.gate = gate_for(c, "scenario", net, data, banks, sc.channel, snr, ex.seed, log);
    const auto outcomes = run_scenario(net, data.test, sc, banks);
    std::vector<TransmissionReport> reports;
    for (const auto& o : outcomes) {
      const auto& r = o.report;
      reports.push_back(r);
      csv += r.scenario + "," + fixed4(snr) + "," + std::to_string(r.edp) + "," + std::to_string(r.draw) + "," +
             std::to_string(r.image) + "," + to_string(r.gate) + "," + (r.aacd ? fixed4(*r.aacd) : "") + "," +
             (r.psnr_db ? fixed4(*r.psnr_db) : "") + "\n";
      if (!o.recovered.empty()) {
        char name[160];
        std::snprintf(name, sizeof name, "%s_snr%s_d%d_img%d_edp%d.ppm", r.scenario.c_str(), fixed4(snr).c_str(),
                      r.draw, r.image, r.edp);
        write_ppm(image_dir / name, o.recovered, net.arch.height, net.arch.width);
      }
    }
    const bool any = std::any_of(reports.begin(), reports.end(), [](const auto& r) { return r.psnr_db.has_value(); });
    const auto abandoned = std::count_if(reports.begin(), reports.end(),
                                         [](const auto& r) { return r.gate == GateDecision::abandon; });
    log.info(std::string(to_string(sc.mode)) + " at " + fixed4(snr) + " dB: average PSNR " +
             (any ? fixed4(avg_psnr(reports)) : "n/a") + ", " + std::to_string(abandoned) + " of " +
             std::to_string(reports.size()) + " abandoned");
  }
  const fs::path path = ex.out / (std::string("scenario_") + to_string(sc.mode) + ".csv");
  write_text(path, csv);
  out << "wrote " << path.string() << '\n';
  return kExitOk;
}

int cmd_detect(const Experiment& ex, std::ostream& out, const Logger& log) {
  const Config& c = ex.cfg;
  DmaNetF net = load_model(ex);
  DetectionConfig dc;
  dc.trials = int(c.integer("detect.trials", 100));
  if (dc.trials < 1) throw ConfigError("detect.trials must be at least 1");
  dc.snr_db = c.reals("detect.snr_db", {0, 5, 10, 15, 20});
  dc.channel = parse_scenario_kind(c.str("detect.channel", "awgn"));
  dc.threshold = c.optional_real("detect.threshold");
  dc.seed = derive_seed(ex.seed, 0x64657465);
  const int refs = int(c.integer("detect.references", 2));
  if (refs < 1) throw ConfigError("detect.references must be at least 1");
  const Datasets data = load_data(ex, net.arch.height, refs * int(net.edps.size()), false);
  if (data.test.count < 1) throw ConfigError("detect: empty dataset");
  log_defaults(c, log);

  const auto banks = build_reference_banks(net, data.refs, refs);
  const auto points = run_detection(net, data.test, banks, dc);
  std::string csv = "snr_db,paired_mean,paired_std,unpaired_mean,unpaired_std,threshold,overlap_fraction,accuracy\n";
  std::string trials = "snr_db,trial,kind,aacd\n";
  for (const auto& p : points) {
    csv += fixed4(p.snr_db) + "," + join({p.paired_mean, p.paired_std, p.unpaired_mean, p.unpaired_std,
                                          p.calibration.threshold, p.calibration.overlap_fraction, p.accuracy}) +
           "\n";
    for (std::size_t t = 0; t < p.paired.size(); ++t) {
      trials += fixed4(p.snr_db) + "," + std::to_string(t) + ",paired," + fixed4(p.paired[t]) + "\n";
      trials += fixed4(p.snr_db) + "," + std::to_string(t) + ",unpaired," + fixed4(p.unpaired[t]) + "\n";
    }
    if (p.calibration.overlap) {
      log.info("detect " + fixed4(p.snr_db) + " dB: paired and unpaired AACD overlap (" +
               fixed4(p.calibration.overlap_fraction) + " of samples)");
    }
  }
  write_text(ex.out / "detect.csv", csv);
  write_text(ex.out / "detect_trials.csv", trials);
  out << csv;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& log_stream, LogLevel level) {
  Logger log(log_stream, level);
  CLI::App app{"DeepMA: deep multiple access over simulated wireless channels", "deepma"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::string command;
  for (const char* name : {"train", "eval", "scenario", "detect"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->callback([&command, name] { command = name; });
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    log.error(e.what());
    log_stream << app.help();
    return kExitUsage;
  }

  try {
    Experiment ex;
    ex.cfg = Config::load(config_path, config_keys());
    ex.seed = seed ? *seed : ex.cfg.u64("seed", 1);
    ex.out = out_dir.empty() ? fs::path(ex.cfg.str("out", "out")) : fs::path(out_dir);
    fs::create_directories(ex.out);
    log.debug("command " + command + ", seed " + std::to_string(ex.seed) + ", output " + ex.out.string());
    if (command == "train") return cmd_train(ex, out, log);
    if (command == "eval") return cmd_eval(ex, out, log);
    if (command == "scenario") return cmd_scenario(ex, out, log);
    return cmd_detect(ex, out, log);
  } catch (const NumericalError& e) {
    log.error(e.what());
    return kExitNumerical;
  } catch (const DegenerateInput& e) {
    log.error(e.what());
    return kExitNumerical;
  } catch (const ConfigError& e) {
    log.error(e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    log.error(e.what());
    return kExitUsage;
  } catch (const ContractViolation& e) {
    log.error(e.what());
    return kExitUsage;
  } catch (const InvalidShape& e) {
    log.error(e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log.error(e.what());
    return kExitFailure;
  }
}

}  // namespace deepma
