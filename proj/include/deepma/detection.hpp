#pragma once

#include <span>
#include <vector>

#include "deepma/metrics.hpp"
#include "deepma/model.hpp"

namespace deepma {

// Encoder outputs kept at a decoder for user detection.
struct ReferenceBank {
  std::vector<Ssv> refs;
  int owner = 0;

  std::size_t size() const { return refs.size(); }
  Index symbol_count() const { return refs.empty() ? 0 : refs.front().symbol_count(); }
};

struct GateConfig {
  double threshold = 0.05;
  int references = 2;

  void validate() const;
};

// Nominal SNR at which reference SSVs are produced.
inline constexpr double kReferenceSnrDb = 20.0;

// R = (1/(K M)) sum_m |rmssv^H ref_m|
double aacd(const Ssv& rmssv, const ReferenceBank& bank);

// accept iff aacd >= threshold
GateDecision gate(double aacd_value, const GateConfig& cfg);
GateDecision gate(const Ssv& rmssv, const ReferenceBank& bank, const GateConfig& cfg);

// Power-normalized encoder outputs for M sample images [M,3,H,W].
template <typename S>
ReferenceBank build_reference_bank(EdpModel<S>& encoder, const ArchConfig& arch,
                                   const Tensor<S>& samples, double snr_db = kReferenceSnrDb);

struct ThresholdCalibration {
  double threshold = 0.0;
  bool overlap = false;
  // Share of all samples inside [min paired, max unpaired] when they overlap.
  double overlap_fraction = 0.0;
};

// Midpoint between max(unpaired) and min(paired); midpoint of the means when
// the two samples overlap.
ThresholdCalibration calibrate_threshold(std::span<const double> paired,
                                         std::span<const double> unpaired);

// Fraction of samples the threshold classifies correctly.
double classification_accuracy(std::span<const double> paired, std::span<const double> unpaired,
                               double threshold);

}  // namespace deepma
