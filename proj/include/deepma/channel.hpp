#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepma/autodiff.hpp"
#include "deepma/model.hpp"

namespace deepma {

enum class ScenarioKind { awgn, d2d, downlink, uplink };

const char* to_string(ScenarioKind kind);
ScenarioKind parse_scenario_kind(const std::string& name);

// Equalization refuses |h_ii| at or below this magnitude.
inline constexpr double kDeepFadeThreshold = 1e-3;

// One draw of the physical channel for N transceivers.
struct ChannelRealization {
  Eigen::MatrixXcd csi;         // csi(i, j): Tx_i -> Rx_j
  Eigen::VectorXd noise_power;  // sigma_j^2 at Rx_j
  std::uint64_t seed = 0;       // noise stream

  Index size() const { return csi.rows(); }
  bool in_outage(int receiver) const {
    return std::abs(csi(receiver, receiver)) <= kDeepFadeThreshold;
  }
};

// sigma^2 = P_z / 10^(snr/10)
double noise_power_from_snr(double snr_db, double power);

// N x N matrix of independent CN(0,1) entries; noise power left at zero.
ChannelRealization sample_csi(int n, std::uint64_t seed);

// Full realization for a scenario. The CSI structure follows the kind:
// awgn -> all ones; d2d -> independent; downlink -> one coefficient per
// receiver; uplink -> one coefficient per transmitter and a single noise
// power (taken from snr_db[0]) shared by every receiver.
ChannelRealization draw_channel(ScenarioKind kind, std::span<const double> snr_db, double power,
                                std::uint64_t seed);

// draw_channel, redrawn from derived seeds while any own link is in outage.
ChannelRealization draw_clear_channel(ScenarioKind kind, std::span<const double> snr_db, double power,
                                      std::uint64_t seed);

// Per-receiver noise vectors of length K drawn from the realization's stream.
// Uplink receivers share one draw.
std::vector<Eigen::VectorXcd> draw_noise(const ChannelRealization& ch, ScenarioKind kind, Index k);

// A transmitter that stays silent contributes this zero vector.
Ssv silent_ssv(Index k, double power);

// rx_j = sum_i csi(i, j) * z_i + n_j for every receiver j.
std::vector<Eigen::VectorXcd> transmit(std::span<const Ssv> ssvs, const ChannelRealization& ch,
                                       ScenarioKind kind);

// rx / h per symbol. Throws DeepFade when |h| <= kDeepFadeThreshold.
Ssv equalize(const Eigen::VectorXcd& rx, std::complex<double> h, double power);

// Differentiable counterparts for batched training. Row b of every [B,2K]
// tensor travels through its own realization rows[b]; CSI and noise are
// constants of the graph.
template <typename S>
std::vector<Var<S>> transmit(std::span<const Var<S>> ssvs,
                             std::span<const ChannelRealization> rows, ScenarioKind kind);

template <typename S>
Var<S> equalize(Var<S> rx, std::span<const ChannelRealization> rows, int receiver);

// Derives an independent 64-bit seed for a numbered substream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace deepma
