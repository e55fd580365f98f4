#include "deepma/metrics.hpp"

#include <cmath>

namespace deepma {

double psnr_from_mse(double mse) {
  if (mse < 0.0 || !std::isfinite(mse)) throw ContractViolation("psnr: invalid MSE");
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double psnr(std::span<const std::uint8_t> original, std::span<const std::uint8_t> recovered) {
  if (original.size() != recovered.size() || original.empty()) {
    throw InvalidShape("psnr: image sizes " + std::to_string(original.size()) + " and " +
                       std::to_string(recovered.size()) + " differ or are empty");
  }
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const int d = int(original[i]) - int(recovered[i]);
    acc += std::uint64_t(d * d);
  }
  return psnr_from_mse(double(acc) / double(original.size()));
}

std::complex<double> corr_complex(const Ssv& zi, const Ssv& zj) {
  if (zi.symbol_count() != zj.symbol_count() || zi.symbol_count() == 0) {
    throw InvalidShape("corr_complex: symbol counts " + std::to_string(zi.symbol_count()) + " and " +
                       std::to_string(zj.symbol_count()));
  }
  // Four real dot products so that swapping the operands negates the
  // imaginary part exactly, even with fused multiply-add.
  const Eigen::VectorXd ar = zi.symbols.real(), ai = zi.symbols.imag();
  const Eigen::VectorXd br = zj.symbols.real(), bi = zj.symbols.imag();
  const double k = double(zi.symbol_count());
  return {(ar.dot(br) + ai.dot(bi)) / k, (ar.dot(bi) - ai.dot(br)) / k};
}

std::complex<double> corr_complex(std::span<const Ssv> zi, std::span<const Ssv> zj) {
  if (zi.size() != zj.size() || zi.empty()) {
    throw ContractViolation("corr_complex: need equally many non-zero draws");
  }
  std::complex<double> acc = 0.0;
  for (std::size_t d = 0; d < zi.size(); ++d) acc += corr_complex(zi[d], zj[d]);
  return acc / double(zi.size());
}

Eigen::VectorXd real_view(const Ssv& z) {
  const Index k = z.symbol_count();
  Eigen::VectorXd v(2 * k);
  v.head(k) = z.symbols.real();
  v.tail(k) = z.symbols.imag();
  return v;
}

double corr_real(const Eigen::VectorXd& vi, const Eigen::VectorXd& vj) {
  if (vi.size() != vj.size() || vi.size() == 0) {
    throw InvalidShape("corr_real: vector lengths " + std::to_string(vi.size()) + " and " +
                       std::to_string(vj.size()));
  }
  return vi.dot(vj) / double(vi.size());
}

Eigen::MatrixXcd correlation_matrix(std::span<const Ssv> ssvs) {
  const Index n = static_cast<Index>(ssvs.size());
  Eigen::MatrixXcd r(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) r(i, j) = corr_complex(ssvs[std::size_t(i)], ssvs[std::size_t(j)]);
  }
  return r;
}

Eigen::MatrixXd real_correlation_matrix(std::span<const Ssv> ssvs) {
  const Index n = static_cast<Index>(ssvs.size());
  std::vector<Eigen::VectorXd> views;
  for (const auto& z : ssvs) views.push_back(real_view(z));
  Eigen::MatrixXd r(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) r(i, j) = corr_real(views[std::size_t(i)], views[std::size_t(j)]);
  }
  return r;
}

BandwidthMetrics bandwidth_metrics(int channels, int edp_count) {
  if (channels <= 0 || edp_count <= 0) {
    throw ContractViolation("bandwidth_metrics: channels and EDP count must be positive");
  }
  return {channels / 64.0, channels / 128.0, channels / (128.0 * edp_count)};
}

const char* to_string(GateDecision d) {
  return d == GateDecision::accept ? "accept" : "abandon";
}

double avg_psnr(std::span<const TransmissionReport> reports) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& r : reports) {
    if (r.psnr_db) {
      acc += *r.psnr_db;
      ++n;
    }
  }
  if (n == 0) throw ContractViolation("avg_psnr: no decoded reports");
  return acc / double(n);
}

}  // namespace deepma
