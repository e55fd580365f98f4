#include "deepma/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace deepma {

void GateConfig::validate() const {
  if (!(threshold > 0.0) || !std::isfinite(threshold)) {
    throw ContractViolation("gate: threshold must be positive and finite");
  }
  if (references < 1) throw ContractViolation("gate: need at least one reference SSV");
}

double aacd(const Ssv& rmssv, const ReferenceBank& bank) {
  if (bank.refs.empty()) throw ContractViolation("aacd: empty reference bank");
  const Index k = rmssv.symbol_count();
  double acc = 0.0;
  for (const Ssv& ref : bank.refs) {
    if (ref.symbol_count() != k) {
      throw InvalidShape("aacd: RMSSV has " + std::to_string(k) + " symbols, reference has " +
                         std::to_string(ref.symbol_count()));
    }
    acc += std::abs(rmssv.symbols.dot(ref.symbols));
  }
  return acc / (double(k) * double(bank.refs.size()));
}

GateDecision gate(double aacd_value, const GateConfig& cfg) {
  return aacd_value >= cfg.threshold ? GateDecision::accept : GateDecision::abandon;
}

GateDecision gate(const Ssv& rmssv, const ReferenceBank& bank, const GateConfig& cfg) {
  return gate(aacd(rmssv, bank), cfg);
}

template <typename S>
ReferenceBank build_reference_bank(EdpModel<S>& encoder, const ArchConfig& arch,
                                   const Tensor<S>& samples, double snr_db) {
  if (samples.rank() != 4 || samples.dim(0) < 1) {
    throw ContractViolation("build_reference_bank: need at least one sample image");
  }
  ReferenceBank bank;
  bank.owner = encoder.index;
  bank.refs = encode_ssv(encoder, arch, samples, snr_db);
  return bank;
}

template ReferenceBank build_reference_bank(EdpModel<float>&, const ArchConfig&,
                                            const Tensor<float>&, double);
template ReferenceBank build_reference_bank(EdpModel<double>&, const ArchConfig&,
                                            const Tensor<double>&, double);

namespace {

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

}  // namespace

ThresholdCalibration calibrate_threshold(std::span<const double> paired,
                                         std::span<const double> unpaired) {
  if (paired.empty() || unpaired.empty()) {
    throw ContractViolation("calibrate_threshold: paired and unpaired samples must be non-empty");
  }
  const double min_paired = *std::min_element(paired.begin(), paired.end());
  const double max_unpaired = *std::max_element(unpaired.begin(), unpaired.end());
  ThresholdCalibration out;
  if (min_paired > max_unpaired) {
    out.threshold = 0.5 * (min_paired + max_unpaired);
    return out;
  }
  out.overlap = true;
  out.threshold = 0.5 * (mean(paired) + mean(unpaired));
  auto inside = [&](double v) { return v >= min_paired && v <= max_unpaired; };
  const auto n = std::count_if(paired.begin(), paired.end(), inside) +
                 std::count_if(unpaired.begin(), unpaired.end(), inside);
  out.overlap_fraction = double(n) / double(paired.size() + unpaired.size());
  return out;
}

double classification_accuracy(std::span<const double> paired, std::span<const double> unpaired,
                               double threshold) {
  if (paired.empty() && unpaired.empty()) {
    throw ContractViolation("classification_accuracy: no samples");
  }
  const auto hits = std::count_if(paired.begin(), paired.end(), [&](double v) { return v >= threshold; }) +
                    std::count_if(unpaired.begin(), unpaired.end(), [&](double v) { return v < threshold; });
  return double(hits) / double(paired.size() + unpaired.size());
}

}  // namespace deepma
