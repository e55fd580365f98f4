#include "deepma/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace deepma {

const char* to_string(ScenarioMode mode) {
  switch (mode) {
    case ScenarioMode::multiplex: return "multiplex";
    case ScenarioMode::dedicated: return "dedicated";
    case ScenarioMode::cross: return "cross";
  }
  return "?";
}

ScenarioMode parse_scenario_mode(const std::string& name) {
  if (name == "multiplex") return ScenarioMode::multiplex;
  if (name == "dedicated") return ScenarioMode::dedicated;
  if (name == "cross") return ScenarioMode::cross;
  throw ConfigError("unknown scenario '" + name + "' (expected multiplex, dedicated, cross)");
}

namespace {

constexpr Index kChunk = 128;

std::vector<double> per_edp_snr(const std::vector<double>& snr_db, int n, const char* who) {
  if (snr_db.size() == 1) return std::vector<double>(std::size_t(n), snr_db[0]);
  if (int(snr_db.size()) != n) {
    throw ContractViolation(std::string(who) + ": " + std::to_string(snr_db.size()) + " SNR values for " +
                            std::to_string(n) + " EDPs");
  }
  return snr_db;
}

// Encoder i's SSVs for every image of the set.
std::vector<Ssv> encode_all(DmaNetF& net, int i, const ImageSet& images, double snr_db) {
  std::vector<Ssv> out;
  out.reserve(std::size_t(images.count));
  for (Index first = 0; first < images.count; first += kChunk) {
    std::vector<Index> idx(std::size_t(std::min(kChunk, images.count - first)));
    std::iota(idx.begin(), idx.end(), first);
    auto part = encode_ssv(net.edps[std::size_t(i)], net.arch, normalize<float>(images, idx), snr_db);
    for (auto& z : part) out.push_back(std::move(z));
  }
  return out;
}

std::vector<std::vector<std::uint8_t>> decode_all(DmaNetF& net, int i, const std::vector<Ssv>& rmssvs,
                                                  double snr_db) {
  std::vector<std::vector<std::uint8_t>> out;
  const Index total = Index(rmssvs.size());
  for (Index first = 0; first < total; first += kChunk) {
    const Index len = std::min(kChunk, total - first);
    std::vector<Ssv> part(rmssvs.begin() + first, rmssvs.begin() + first + len);
    const auto pixels = denormalize(decode_ssv(net.edps[std::size_t(i)], net.arch, part, snr_db));
    const auto sz = std::size_t(pixels.size() / std::size_t(len));
    for (Index r = 0; r < len; ++r) {
      out.emplace_back(pixels.begin() + std::ptrdiff_t(std::size_t(r) * sz),
                       pixels.begin() + std::ptrdiff_t(std::size_t(r + 1) * sz));
    }
  }
  return out;
}

void check_banks(const DmaNetF& net, const std::vector<ReferenceBank>& banks, const char* who) {
  if (banks.size() != net.edps.size()) {
    throw ContractViolation(std::string(who) + ": " + std::to_string(banks.size()) + " reference banks for " +
                            std::to_string(net.edps.size()) + " EDPs");
  }
}

}  // namespace

std::vector<ReferenceBank> build_reference_banks(DmaNetF& net, const ImageSet& refs, int per_edp,
                                                 double snr_db) {
  const Index n = Index(net.edps.size());
  if (per_edp < 1) throw ContractViolation("reference banks need at least one image per EDP");
  if (refs.count < n * per_edp) {
    throw ContractViolation("reference banks need " + std::to_string(n * per_edp) + " images, got " +
                            std::to_string(refs.count));
  }
  std::vector<ReferenceBank> banks;
  for (Index i = 0; i < n; ++i) {
    std::vector<Index> idx(static_cast<std::size_t>(per_edp));
    std::iota(idx.begin(), idx.end(), i * per_edp);
    banks.push_back(build_reference_bank(net.edps[std::size_t(i)], net.arch, normalize<float>(refs, idx), snr_db));
  }
  return banks;
}

std::vector<ScenarioOutcome> run_scenario(DmaNetF& net, const ImageSet& images, const ScenarioConfig& cfg,
                                          const std::vector<ReferenceBank>& banks) {
  const int n = int(net.edps.size());
  if (images.count < 1) throw ContractViolation("scenario: no images");
  if (cfg.draws < 1) throw ContractViolation("scenario: draws must be at least 1");
  if (cfg.mode == ScenarioMode::cross && n < 2) {
    throw ContractViolation("scenario: cross decoding needs at least two EDPs");
  }
  if (cfg.gating) {
    cfg.gate.validate();
    check_banks(net, banks, "scenario");
  }
  const auto snrs = per_edp_snr(cfg.snr_db, n, "scenario");
  const double power = net.arch.power;
  const Index k = net.arch.symbol_count();
  const Index count = images.count;

  std::vector<std::vector<Ssv>> ssvs;
  for (int i = 0; i < n; ++i) ssvs.push_back(encode_all(net, i, images, snrs[std::size_t(i)]));

  std::vector<ScenarioOutcome> outcomes;
  std::vector<std::vector<std::size_t>> pending(static_cast<std::size_t>(n));
  std::vector<std::vector<Ssv>> pending_ssv(static_cast<std::size_t>(n));

  for (int d = 0; d < cfg.draws; ++d) {
    for (Index j = 0; j < count; ++j) {
      const ChannelRealization ch =
          draw_clear_channel(cfg.channel, snrs, power, derive_seed(cfg.seed, std::uint64_t(d) * std::uint64_t(count) + std::uint64_t(j)));
      auto image_of = [&](int i) { return (j + i) % count; };
      auto on_air = [&](auto&& active) {
        std::vector<Ssv> tx;
        for (int i = 0; i < n; ++i) {
          tx.push_back(active(i) ? ssvs[std::size_t(i)][std::size_t(image_of(i))] : silent_ssv(k, power));
        }
        return transmit(tx, ch, cfg.channel);
      };
      auto receive = [&](const std::vector<Eigen::VectorXcd>& rx, int i) {
        ScenarioOutcome out;
        out.report.scenario = to_string(cfg.mode);
        out.report.edp = i;
        out.report.image = int(image_of(i));
        out.report.draw = d;
        out.report.snr_db = snrs[std::size_t(i)];
        Ssv rmssv = equalize(rx[std::size_t(i)], ch.csi(i, i), power);
        if (cfg.gating) {
          out.report.aacd = aacd(rmssv, banks[std::size_t(i)]);
          out.report.gate = gate(*out.report.aacd, cfg.gate);
        }
        if (out.report.gate == GateDecision::accept) {
          pending[std::size_t(i)].push_back(outcomes.size());
          pending_ssv[std::size_t(i)].push_back(std::move(rmssv));
        }
        outcomes.push_back(std::move(out));
      };
      switch (cfg.mode) {
        case ScenarioMode::multiplex: {
          const auto rx = on_air([](int) { return true; });
          for (int i = 0; i < n; ++i) receive(rx, i);
          break;
        }
        case ScenarioMode::dedicated:
          for (int i = 0; i < n; ++i) receive(on_air([i](int t) { return t == i; }), i);
          break;
        case ScenarioMode::cross:
          for (int i = 0; i < n; ++i) receive(on_air([i](int t) { return t != i; }), i);
          break;
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    if (pending[std::size_t(i)].empty()) continue;
    auto decoded = decode_all(net, i, pending_ssv[std::size_t(i)], snrs[std::size_t(i)]);
    for (std::size_t p = 0; p < decoded.size(); ++p) {
      ScenarioOutcome& out = outcomes[pending[std::size_t(i)][p]];
      if (cfg.mode == ScenarioMode::cross) {
        // Score against whichever transmitted image the decoder reproduces best.
        const Index slot = (Index(out.report.image) - i + count) % count;
        double best = -1.0;
        for (int t = 0; t < n; ++t) {
          if (t == i) continue;
          const Index img = (slot + t) % count;
          const double v = psnr(images.image(img), decoded[p]);
          if (v > best) {
            best = v;
            out.report.image = int(img);
          }
        }
        out.report.psnr_db = best;
      } else {
        out.report.psnr_db = psnr(images.image(out.report.image), decoded[p]);
      }
      if (cfg.keep_images) out.recovered = std::move(decoded[p]);
    }
  }
  std::stable_sort(outcomes.begin(), outcomes.end(), [](const ScenarioOutcome& a, const ScenarioOutcome& b) {
    return a.report.edp < b.report.edp;
  });
  return outcomes;
}

namespace {

void summarize(const std::vector<double>& v, double& mean, double& stddev) {
  mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  stddev = v.size() > 1 ? std::sqrt(acc / double(v.size() - 1)) : 0.0;
}

}  // namespace

std::vector<DetectionPoint> run_detection(DmaNetF& net, const ImageSet& images,
                                          const std::vector<ReferenceBank>& banks, const DetectionConfig& cfg) {
  const int n = int(net.edps.size());
  if (cfg.trials < 1) throw ContractViolation("detect: trials must be at least 1");
  if (cfg.snr_db.empty()) throw ContractViolation("detect: no SNR points");
  if (images.count < 1) throw ContractViolation("detect: no images");
  if (n < 2) throw ContractViolation("detect: unpaired trials need at least two EDPs");
  check_banks(net, banks, "detect");
  const double power = net.arch.power;
  const Index k = net.arch.symbol_count();

  std::vector<DetectionPoint> points;
  for (std::size_t s = 0; s < cfg.snr_db.size(); ++s) {
    const double snr = cfg.snr_db[s];
    const std::vector<double> snrs(std::size_t(n), snr);
    std::vector<std::vector<Ssv>> ssvs;
    for (int i = 0; i < n; ++i) ssvs.push_back(encode_all(net, i, images, snr));

    DetectionPoint point;
    point.snr_db = snr;
    for (int t = 0; t < cfg.trials; ++t) {
      const int target = t % n;
      const ChannelRealization ch =
          draw_clear_channel(cfg.channel, snrs, power, derive_seed(derive_seed(cfg.seed, s), std::uint64_t(t)));
      auto measure = [&](bool paired) {
        std::vector<Ssv> tx;
        for (int i = 0; i < n; ++i) {
          const bool active = paired ? i == target : i != target;
          tx.push_back(active ? ssvs[std::size_t(i)][std::size_t((t + i) % images.count)] : silent_ssv(k, power));
        }
        const auto rx = transmit(tx, ch, cfg.channel);
        return aacd(equalize(rx[std::size_t(target)], ch.csi(target, target), power), banks[std::size_t(target)]);
      };
      point.paired.push_back(measure(true));
      point.unpaired.push_back(measure(false));
    }
    summarize(point.paired, point.paired_mean, point.paired_std);
    summarize(point.unpaired, point.unpaired_mean, point.unpaired_std);
    if (cfg.threshold) {
      point.calibration.threshold = *cfg.threshold;
    } else {
      point.calibration = calibrate_threshold(point.paired, point.unpaired);
    }
    point.accuracy = classification_accuracy(point.paired, point.unpaired, point.calibration.threshold);
    points.push_back(std::move(point));
  }
  return points;
}

}  // namespace deepma
