#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deepma/channel.hpp"
#include "deepma/data.hpp"
#include "deepma/detection.hpp"
#include "deepma/metrics.hpp"
#include "deepma/model.hpp"

namespace deepma {

// multiplex: every EDP transmits and each decoder recovers its own image.
// dedicated: one EDP transmits at a time.
// cross: one EDP stays silent and its decoder is fed the others' superposition.
enum class ScenarioMode { multiplex, dedicated, cross };

const char* to_string(ScenarioMode mode);
ScenarioMode parse_scenario_mode(const std::string& name);

struct ScenarioConfig {
  ScenarioMode mode = ScenarioMode::multiplex;
  ScenarioKind channel = ScenarioKind::awgn;
  std::vector<double> snr_db{10.0};  // one value for all EDPs or one per EDP
  int draws = 1;
  std::uint64_t seed = 1;
  bool gating = true;
  GateConfig gate;
  bool keep_images = false;
};

// One decoded (or abandoned) RMSSV. For cross runs psnr_db is the best match
// against any image on air, and `image` names that image.
struct ScenarioOutcome {
  TransmissionReport report;
  std::vector<std::uint8_t> recovered;  // plane-major 8-bit image when kept and decoded
};

// Bank i holds encoder i's outputs for images [i*M, (i+1)*M) of `refs`.
std::vector<ReferenceBank> build_reference_banks(DmaNetF& net, const ImageSet& refs, int per_edp,
                                                 double snr_db = kReferenceSnrDb);

// Slot j gives EDP i image (j + i) mod n. Slot j of draw d uses the channel
// realization seeded by (seed, d * n + j) in every mode, so modes see the
// same channels.
std::vector<ScenarioOutcome> run_scenario(DmaNetF& net, const ImageSet& images, const ScenarioConfig& cfg,
                                          const std::vector<ReferenceBank>& banks);

struct DetectionConfig {
  ScenarioKind channel = ScenarioKind::awgn;
  std::vector<double> snr_db{0.0};
  int trials = 100;
  std::uint64_t seed = 1;
  std::optional<double> threshold;  // calibrated from the trials when unset
};

struct DetectionPoint {
  double snr_db = 0.0;
  std::vector<double> paired;
  std::vector<double> unpaired;
  double paired_mean = 0.0, paired_std = 0.0;
  double unpaired_mean = 0.0, unpaired_std = 0.0;
  ThresholdCalibration calibration;
  double accuracy = 0.0;
};

// Paired trial: only EDP i transmits and decoder i measures AACD against its
// bank. Unpaired trial: EDP i is silent while every other EDP transmits.
// Trial t picks the image t mod n and cycles i over the EDPs.
std::vector<DetectionPoint> run_detection(DmaNetF& net, const ImageSet& images,
                                          const std::vector<ReferenceBank>& banks, const DetectionConfig& cfg);

}  // namespace deepma
