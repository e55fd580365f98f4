#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepma/model.hpp"

namespace deepma {

// Reported for bit-identical images, where the MSE is zero.
inline constexpr double kPsnrCap = 100.0;

double psnr_from_mse(double mse);
// PSNR of two 8-bit images with MAX = 255.
double psnr(std::span<const std::uint8_t> original, std::span<const std::uint8_t> recovered);

// (1/K) z_i^H z_j
std::complex<double> corr_complex(const Ssv& zi, const Ssv& zj);
// Empirical mean of corr_complex over paired draws.
std::complex<double> corr_complex(std::span<const Ssv> zi, std::span<const Ssv> zj);

// v = [Re(z); Im(z)]
Eigen::VectorXd real_view(const Ssv& z);
// (1/(2K)) <v_i, v_j>
double corr_real(const Eigen::VectorXd& vi, const Eigen::VectorXd& vj);

Eigen::MatrixXcd correlation_matrix(std::span<const Ssv> ssvs);
Eigen::MatrixXd real_correlation_matrix(std::span<const Ssv> ssvs);

struct BandwidthMetrics {
  double spp = 0.0;       // c / 64
  double cspp = 0.0;      // c / 128
  double min_cspp = 0.0;  // c / (128 N)
};

BandwidthMetrics bandwidth_metrics(int channels, int edp_count);

enum class GateDecision { accept, abandon };
const char* to_string(GateDecision d);

// Outcome of one decoder in one transmission.
struct TransmissionReport {
  std::string scenario;
  int edp = 0;
  int image = 0;
  int draw = 0;
  double snr_db = 0.0;
  std::optional<double> psnr_db;  // set only when the RMSSV was decoded
  std::optional<double> aacd;
  GateDecision gate = GateDecision::accept;
};

// Arithmetic mean of the dB values of the reports that carry a PSNR.
double avg_psnr(std::span<const TransmissionReport> reports);

}  // namespace deepma
