#include "deepma/channel.hpp"

#include <cmath>
#include <random>

namespace deepma {

const char* to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::awgn: return "awgn";
    case ScenarioKind::d2d: return "d2d";
    case ScenarioKind::downlink: return "downlink";
    case ScenarioKind::uplink: return "uplink";
  }
  return "unknown";
}

ScenarioKind parse_scenario_kind(const std::string& name) {
  if (name == "awgn") return ScenarioKind::awgn;
  if (name == "d2d" || name == "fading") return ScenarioKind::d2d;
  if (name == "downlink") return ScenarioKind::downlink;
  if (name == "uplink") return ScenarioKind::uplink;
  throw ConfigError("unknown channel kind '" + name + "' (expected awgn, d2d, downlink, uplink)");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double noise_power_from_snr(double snr_db, double power) {
  return power / std::pow(10.0, snr_db / 10.0);
}

namespace {

std::complex<double> draw_cn(std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(0.5));
  const double re = dist(rng);
  const double im = dist(rng);
  return {re, im};
}

}  // namespace

ChannelRealization sample_csi(int n, std::uint64_t seed) {
  if (n <= 0) throw ContractViolation("sample_csi: N must be positive");
  ChannelRealization ch;
  ch.seed = seed;
  ch.csi.resize(n, n);
  ch.noise_power = Eigen::VectorXd::Zero(n);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) ch.csi(i, j) = draw_cn(rng);
  }
  return ch;
}

ChannelRealization draw_channel(ScenarioKind kind, std::span<const double> snr_db, double power,
                                std::uint64_t seed) {
  const int n = static_cast<int>(snr_db.size());
  if (n == 0) throw ContractViolation("draw_channel: need one SNR per receiver");
  ChannelRealization ch;
  ch.seed = derive_seed(seed, 1);
  ch.csi.resize(n, n);
  ch.noise_power.resize(n);
  std::mt19937_64 rng(seed);
  switch (kind) {
    case ScenarioKind::awgn:
      ch.csi.setOnes();
      break;
    case ScenarioKind::d2d:
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) ch.csi(i, j) = draw_cn(rng);
      }
      break;
    case ScenarioKind::downlink:
      for (int j = 0; j < n; ++j) ch.csi.col(j).setConstant(draw_cn(rng));
      break;
    case ScenarioKind::uplink:
      for (int i = 0; i < n; ++i) ch.csi.row(i).setConstant(draw_cn(rng));
      break;
  }
  for (int j = 0; j < n; ++j) {
    const double snr = kind == ScenarioKind::uplink ? snr_db[0] : snr_db[static_cast<std::size_t>(j)];
    ch.noise_power[j] = noise_power_from_snr(snr, power);
  }
  return ch;
}

ChannelRealization draw_clear_channel(ScenarioKind kind, std::span<const double> snr_db, double power,
                                      std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    ChannelRealization ch =
        draw_channel(kind, snr_db, power, attempt == 0 ? seed : derive_seed(seed, attempt + 1));
    bool clear = true;
    for (int i = 0; i < ch.size(); ++i) clear = clear && !ch.in_outage(i);
    if (clear) return ch;
  }
}

std::vector<Eigen::VectorXcd> draw_noise(const ChannelRealization& ch, ScenarioKind kind, Index k) {
  const Index n = ch.size();
  std::vector<Eigen::VectorXcd> noise;
  noise.reserve(static_cast<std::size_t>(n));
  std::mt19937_64 rng(ch.seed);
  for (Index j = 0; j < n; ++j) {
    if (kind == ScenarioKind::uplink && j > 0) {
      noise.push_back(noise.front());
      continue;
    }
    Eigen::VectorXcd v(k);
    std::normal_distribution<double> dist;
    const double sigma = std::sqrt(ch.noise_power[j] / 2.0);
    for (Index s = 0; s < k; ++s) {
      const double re = dist(rng);
      const double im = dist(rng);
      v[s] = {sigma * re, sigma * im};
    }
    noise.push_back(std::move(v));
  }
  return noise;
}

Ssv silent_ssv(Index k, double power) {
  Ssv s;
  s.symbols = Eigen::VectorXcd::Zero(k);
  s.power = power;
  return s;
}

std::vector<Eigen::VectorXcd> transmit(std::span<const Ssv> ssvs, const ChannelRealization& ch,
                                       ScenarioKind kind) {
  const Index n = ch.size();
  if (static_cast<Index>(ssvs.size()) != n) {
    throw InvalidShape("transmit: " + std::to_string(ssvs.size()) + " SSVs for a " +
                       std::to_string(n) + "-transceiver channel");
  }
  const Index k = ssvs.front().symbol_count();
  for (const Ssv& s : ssvs) {
    if (s.symbol_count() != k) {
      throw InvalidShape("transmit: SSV lengths differ (" + std::to_string(s.symbol_count()) +
                         " vs " + std::to_string(k) + ")");
    }
  }
  const auto noise = draw_noise(ch, kind, k);
  std::vector<Eigen::VectorXcd> rx;
  rx.reserve(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    Eigen::VectorXcd acc = ch.csi(0, j) * ssvs[0].symbols;
    for (Index i = 1; i < n; ++i) acc += ch.csi(i, j) * ssvs[static_cast<std::size_t>(i)].symbols;
    if (ch.noise_power[j] > 0.0) acc += noise[static_cast<std::size_t>(j)];
    rx.push_back(std::move(acc));
  }
  return rx;
}

Ssv equalize(const Eigen::VectorXcd& rx, std::complex<double> h, double power) {
  if (std::abs(h) <= kDeepFadeThreshold) {
    throw DeepFade("equalize: |h| = " + std::to_string(std::abs(h)) + " is below the deep-fade cutoff");
  }
  Ssv out;
  out.power = power;
  out.symbols = rx / h;
  return out;
}

template <typename S>
std::vector<Var<S>> transmit(std::span<const Var<S>> ssvs, std::span<const ChannelRealization> rows,
                             ScenarioKind kind) {
  if (ssvs.empty()) throw ContractViolation("transmit: no transmitters");
  const Index n = static_cast<Index>(ssvs.size());
  const Index batch = ssvs.front().dim(0), width = ssvs.front().dim(1);
  for (const auto& z : ssvs) {
    if (z.shape() != ssvs.front().shape()) {
      throw InvalidShape("transmit: SSV batches differ " + shape_string(z.shape()) + " vs " +
                         shape_string(ssvs.front().shape()));
    }
  }
  if (static_cast<Index>(rows.size()) != batch) {
    throw InvalidShape("transmit: " + std::to_string(rows.size()) + " realizations for batch " +
                       std::to_string(batch));
  }
  for (const auto& ch : rows) {
    if (ch.size() != n) throw InvalidShape("transmit: realization size does not match N");
  }
  Graph<S>& g = *ssvs.front().graph;
  const Index k = width / 2;
  std::vector<std::vector<Eigen::VectorXcd>> noise_rows;
  noise_rows.reserve(rows.size());
  for (const auto& ch : rows) noise_rows.push_back(draw_noise(ch, kind, k));
  std::vector<Var<S>> rx;
  for (Index j = 0; j < n; ++j) {
    std::vector<std::complex<double>> coeffs(static_cast<std::size_t>(batch));
    auto column = [&](Index i) {
      for (Index b = 0; b < batch; ++b) coeffs[std::size_t(b)] = rows[std::size_t(b)].csi(i, j);
      return complex_scale(ssvs[std::size_t(i)], coeffs);
    };
    Var<S> acc = column(0);
    for (Index i = 1; i < n; ++i) acc = acc + column(i);
    bool noisy = false;
    Tensor<S> noise({batch, width});
    for (Index b = 0; b < batch; ++b) {
      const auto& ch = rows[std::size_t(b)];
      if (!(ch.noise_power[j] > 0.0)) continue;
      noisy = true;
      const auto& v = noise_rows[std::size_t(b)][std::size_t(j)];
      for (Index s = 0; s < k; ++s) {
        noise[b * width + 2 * s] = static_cast<S>(v[s].real());
        noise[b * width + 2 * s + 1] = static_cast<S>(v[s].imag());
      }
    }
    if (noisy) acc = acc + g.input(std::move(noise));
    rx.push_back(acc);
  }
  return rx;
}

template <typename S>
Var<S> equalize(Var<S> rx, std::span<const ChannelRealization> rows, int receiver) {
  std::vector<std::complex<double>> inv;
  inv.reserve(rows.size());
  for (const auto& ch : rows) {
    const auto h = ch.csi(receiver, receiver);
    if (std::abs(h) <= kDeepFadeThreshold) {
      throw DeepFade("equalize: |h| = " + std::to_string(std::abs(h)) +
                     " is below the deep-fade cutoff");
    }
    inv.push_back(1.0 / h);
  }
  return complex_scale(rx, inv);
}

template std::vector<Var<float>> transmit(std::span<const Var<float>>,
                                          std::span<const ChannelRealization>, ScenarioKind);
template std::vector<Var<double>> transmit(std::span<const Var<double>>,
                                           std::span<const ChannelRealization>, ScenarioKind);
template Var<float> equalize(Var<float>, std::span<const ChannelRealization>, int);
template Var<double> equalize(Var<double>, std::span<const ChannelRealization>, int);

}  // namespace deepma
