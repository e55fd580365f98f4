// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>

#include "deepma/channel.hpp"
#include "deepma/checkpoint.hpp"
#include "deepma/cli.hpp"
#include "deepma/metrics.hpp"
#include "deepma/scenario.hpp"
#include "deepma/training.hpp"
#include "gradient_suite.hpp"

using namespace deepma;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

// Desk-scale training budget for criteria 5 to 8; well inside 30 minutes.
constexpr long kAcceptanceIterations = 6000;

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Ssv gaussian_ssv(std::mt19937_64& rng, Index k, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Ssv s;
  s.symbols.resize(k);
  for (Index i = 0; i < k; ++i) s.symbols[i] = {d(rng), d(rng)};
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1234);
  double worst = 0.0;
  std::string worst_op;
  int checks = 0;
  for (const auto& c : testing::gradient_cases()) {
    for (int point = 0; point < 10; ++point, ++checks) {
      const double err = testing::check_gradient(c, rng, 1e-3);
      if (!(err <= worst)) {
        worst = err;
        worst_op = c.name;
      }
    }
  }
  const double took = seconds_since(t0);
  return {worst < 1e-4 && took < 60.0,
          fmt("%d checks, worst rel err %.2e (%s), %.1f s", checks, worst, worst_op.c_str(), took)};
}

Outcome power_invariant() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> d;
  std::uniform_real_distribution<double> expo(-6.0, 6.0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    TensorD y({64});
    const double s = std::pow(10.0, expo(rng));
    for (Index i = 0; i < y.size(); ++i) y[i] = s * d(rng);
    worst = std::max(worst, std::abs(power_normalize(y, 2.0).average_power() - 2.0) / 2.0);
  }
  // alpha * y is itself rounded, so "exact" means agreement to a few ulps;
  // alpha = 1 must be bit-identical.
  double drift = 0.0;
  bool identical = true;
  for (int t = 0; t < 100; ++t) {
    TensorD y({64});
    for (Index i = 0; i < y.size(); ++i) y[i] = d(rng);
    const Ssv base = power_normalize(y, 2.0);
    for (double alpha : {1e-3, 1.0, 1e3}) {
      TensorD scaled = y;
      scaled.data() *= alpha;
      const Ssv z = power_normalize(scaled, 2.0);
      drift = std::max(drift, (z.symbols - base.symbols).cwiseAbs().maxCoeff() / base.symbols.cwiseAbs().maxCoeff());
      if (alpha == 1.0) identical = identical && z.symbols == base.symbols;
    }
  }
  return {worst < 1e-5 && drift <= 1e-14 && identical,
          fmt("worst power error %.1e, scale drift %.1e, alpha=1 identical %s", worst, drift,
              identical ? "yes" : "no")};
}

Outcome channel_calibration() {
  bool ok = true;
  std::string detail;
  for (double target : {0.0, 10.0, 20.0}) {
    const std::vector<double> snr{target};
    const auto ch = draw_channel(ScenarioKind::awgn, snr, 2.0, derive_seed(77, std::uint64_t(target)));
    const auto noise = draw_noise(ch, ScenarioKind::awgn, 1000000);
    const double measured = 10.0 * std::log10(2.0 / (noise[0].squaredNorm() / 1e6));
    ok = ok && std::abs(measured - target) < 0.1;
    detail += fmt("%.0f dB -> %.3f dB; ", target, measured);
  }
  double acc = 0.0;
  for (int s = 0; s < 1000000; ++s) acc += std::norm(sample_csi(1, derive_seed(78, std::uint64_t(s))).csi(0, 0));
  const double eh2 = acc / 1e6;
  ok = ok && eh2 >= 0.99 && eh2 <= 1.01;
  return {ok, detail + fmt("E|h|^2 = %.4f", eh2)};
}

Outcome scenario_reduction() {
  std::mt19937_64 rng(5);
  bool identical = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 4;
    std::vector<Ssv> z;
    std::vector<double> snr;
    for (int i = 0; i < n; ++i) {
      z.push_back(gaussian_ssv(rng, 32));
      snr.push_back(double(3 * i + trial % 7));
    }
    const auto down = draw_channel(ScenarioKind::downlink, snr, 2.0, std::uint64_t(trial));
    const auto rx_down = transmit(z, down, ScenarioKind::downlink);
    const auto rx_down_d2d = transmit(z, down, ScenarioKind::d2d);
    const auto up = draw_channel(ScenarioKind::uplink, snr, 2.0, std::uint64_t(trial));
    const auto rx_up = transmit(z, up, ScenarioKind::uplink);
    const auto rx_up_d2d = transmit(z, up, ScenarioKind::d2d);
    for (int j = 0; j < n; ++j) {
      identical = identical && rx_down[std::size_t(j)] == rx_down_d2d[std::size_t(j)];
      identical = identical && rx_up[std::size_t(j)] == rx_up_d2d[0];
    }
  }
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::vector<Ssv> z{gaussian_ssv(rng, 32)};
    ChannelRealization ch = sample_csi(1, std::uint64_t(trial));
    while (std::abs(ch.csi(0, 0)) <= 1e-3) ch = sample_csi(1, std::uint64_t(trial) + 1000000);
    ch.noise_power = Eigen::VectorXd::Zero(1);
    const Ssv back = equalize(transmit(z, ch, ScenarioKind::d2d)[0], ch.csi(0, 0), 2.0);
    worst = std::max(worst, (back.symbols - z[0].symbols).cwiseAbs().maxCoeff());
  }
  return {identical && worst <= 1e-6,
          fmt("downlink/uplink bit-identical to d2d: %s; noise-free round trip worst %.1e",
              identical ? "yes" : "no", worst)};
}

Outcome metric_identities() {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> scale(0.01, 10.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Ssv a = gaussian_ssv(rng, 64, scale(rng)), b = gaussian_ssv(rng, 64, scale(rng));
    const double re = corr_complex(a, b).real();
    worst = std::max(worst, std::abs(re - 2.0 * corr_real(real_view(a), real_view(b))) / std::max(1.0, std::abs(re)));
  }
  const auto bw = bandwidth_metrics(128, 2);
  const double zero = psnr_from_mse(65025.0);
  return {worst <= 1e-12 && bw.cspp == 1.0 && bw.min_cspp == 0.5 && zero == 0.0,
          fmt("Re(Rz)-2Rv worst %.1e, CSPP(128)=%g, MinCSPP(128,2)=%g, psnr(65025)=%g", worst, bw.cspp,
              bw.min_cspp, zero)};
}

// The desk-scale DMANet-2 shared by criteria 5 to 8 and 10.
struct Trained {
  DmaNetF net;
  ImageSet test, refs;
  double train_seconds = 0.0;
  long iterations = 0;
};

Trained train_desk_model() {
  ArchConfig arch;  // 16x16, c = 16, two EDPs
  Trained t{DmaNetF::create(arch, 7), synthetic_set(100, 16, 16, 2, SyntheticKind::shapes),
            synthetic_set(4, 16, 16, 3, SyntheticKind::shapes)};
  const auto train = synthetic_set(4096, 16, 16, 1, SyntheticKind::shapes);
  const auto val = synthetic_set(100, 16, 16, 4, SyntheticKind::shapes);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.max_epochs = 1000;
  cfg.max_iterations = kAcceptanceIterations;
  cfg.channel = ScenarioKind::awgn;
  cfg.val_every = 10;
  cfg.lr_schedule = {{0, 1e-3}, {60, 3e-4}, {85, 1e-4}};
  auto state = initial_train_state(cfg);
  const auto t0 = Clock::now();
  auto result = train_loop(t.net, train, val, cfg, state, [&](const HistoryRow& row) {
    if (row.epoch % 10 == 0) {
      std::fprintf(stderr, "  epoch %d, iteration %ld, loss %.5f, %.0f s\n", row.epoch, row.iteration, row.loss,
                   seconds_since(t0));
    }
  });
  t.net = std::move(result.best);
  t.train_seconds = seconds_since(t0);
  t.iterations = state.iteration;
  return t;
}

Outcome orthogonality(Trained& t) {
  const auto x = normalize<float>(t.test);
  const auto z1 = encode_ssv(t.net.edps[0], t.net.arch, x, 10.0);
  const auto z2 = encode_ssv(t.net.edps[1], t.net.arch, x, 10.0);
  double cross = 0.0, diag = 0.0;
  for (std::size_t i = 0; i < z1.size(); ++i) {
    // Pair i: EDP 1 sends image i, EDP 2 sends the next one.
    cross += std::abs(corr_complex(z1[i], z2[(i + 1) % z2.size()]));
    diag = std::max({diag, std::abs(corr_complex(z1[i], z1[i]).real() - 2.0),
                     std::abs(corr_complex(z2[i], z2[i]).real() - 2.0)});
  }
  cross /= double(z1.size());
  const bool in_budget = t.train_seconds <= 1800.0;
  return {cross <= 0.05 * 2.0 && diag < 1e-5 && in_budget,
          fmt("mean |Rz(z1,z2)| %.4f (bound 0.1), diagonal error %.1e, trained %ld iterations in %.0f s",
              cross, diag, t.iterations, t.train_seconds)};
}

double mean_psnr(Trained& t, ScenarioMode mode, double snr) {
  ScenarioConfig sc;
  sc.mode = mode;
  sc.snr_db = {snr};
  sc.gating = false;
  sc.seed = 41;
  const auto out = run_scenario(t.net, t.test, sc, {});
  std::vector<TransmissionReport> reports;
  for (const auto& o : out) reports.push_back(o.report);
  return avg_psnr(reports);
}

Outcome multiplex_vs_dedicated(Trained& t) {
  const double m = mean_psnr(t, ScenarioMode::multiplex, 10.0);
  const double d = mean_psnr(t, ScenarioMode::dedicated, 10.0);
  return {std::abs(m - d) <= 1.0, fmt("10 dB: multiplex %.2f dB, dedicated %.2f dB, gap %.2f dB", m, d, std::abs(m - d))};
}

Outcome cross_suppression(Trained& t) {
  const double paired = mean_psnr(t, ScenarioMode::multiplex, 10.0);
  const double cross = mean_psnr(t, ScenarioMode::cross, 10.0);
  return {paired - cross >= 10.0,
          fmt("10 dB: paired %.2f dB, cross %.2f dB (best match to any on-air image), gap %.2f dB", paired, cross,
              paired - cross)};
}

Outcome aacd_separation(Trained& t) {
  const auto banks = build_reference_banks(t.net, t.refs, 2);
  DetectionConfig dc;
  dc.snr_db = {0.0};
  dc.trials = 200;
  dc.seed = 101;
  const auto calib = run_detection(t.net, t.test, banks, dc).front();
  // Threshold from one set of trials, accuracy on a fresh one.
  dc.seed = 202;
  dc.threshold = calib.calibration.threshold;
  const auto p = run_detection(t.net, t.test, banks, dc).front();
  const double ratio = p.paired_mean / p.unpaired_mean;
  return {ratio >= 3.0 && p.accuracy >= 0.95,
          fmt("0 dB, M=2, 200 trials: paired %.4f, unpaired %.4f, ratio %.2f (need 3), accuracy %.3f at "
              "threshold %.4f (need 0.95)",
              p.paired_mean, p.unpaired_mean, ratio, p.accuracy, p.calibration.threshold)};
}

Outcome determinism(Trained& t) {
  const fs::path dir = fs::temp_directory_path() / "deepma_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cfg =
      "seed = 11\n[data]\nsource = shapes\nsize = 16\ntrain_count = 256\nval_count = 16\n"
      "[model]\nedps = 2\n[train]\nepochs = 2\nbatch_size = 16\nlr_schedule = 0:1e-3\n";
  std::ofstream(dir / "train.cfg") << cfg;
  std::ostringstream sink;
  bool ran = true;
  for (const char* out : {"a", "b"}) {
    ran = ran && run_cli({"train", "--config", (dir / "train.cfg").string(), "--out", (dir / out).string()}, sink,
                         sink, LogLevel::quiet) == kExitOk;
  }
  const std::string ha = slurp(dir / "a" / "history.csv"), hb = slurp(dir / "b" / "history.csv");
  const bool history_same = ran && !ha.empty() && ha == hb;

  save_checkpoint(t.net, dir / "one.dmn");
  save_checkpoint(load_checkpoint(dir / "one.dmn"), dir / "two.dmn");
  const std::string c1 = slurp(dir / "one.dmn"), c2 = slurp(dir / "two.dmn");
  const bool ckpt_same = !c1.empty() && c1 == c2;
  fs::remove_all(dir);
  return {history_same && ckpt_same,
          fmt("history CSV rerun identical: %s (%zu bytes); checkpoint save/load/save identical: %s (%zu bytes)",
              history_same ? "yes" : "no", ha.size(), ckpt_same ? "yes" : "no", c1.size())};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient suite", gradient_suite);
  report(2, "power invariant", power_invariant);
  report(3, "channel calibration", channel_calibration);
  report(4, "scenario reduction", scenario_reduction);

  std::fprintf(stderr, "training DMANet-2 (%ld iterations)...\n", kAcceptanceIterations);
  std::optional<Trained> trained;
  std::string why;
  try {
    trained = train_desk_model();
  } catch (const std::exception& e) {
    why = e.what();
  }
  auto with_model = [&](Outcome (*fn)(Trained&)) {
    return [&, fn] { return trained ? fn(*trained) : Outcome{false, "training failed: " + why}; };
  };
  report(5, "orthogonality emergence", with_model(orthogonality));
  report(6, "multiplex matches dedicated", with_model(multiplex_vs_dedicated));
  report(7, "cross-decoding suppression", with_model(cross_suppression));
  report(8, "AACD separation", with_model(aacd_separation));
  report(9, "metric identities", metric_identities);
  report(10, "determinism", with_model(determinism));

  std::printf("%d of 10 criteria passed\n", 10 - failed);
  return failed;
}
