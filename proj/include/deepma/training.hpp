#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deepma/channel.hpp"
#include "deepma/data.hpp"
#include "deepma/model.hpp"
#include "deepma/optim.hpp"

namespace deepma {

struct LrStep {
  int epoch = 0;
  double lr = 0.0;
};

struct SnrPolicy {
  enum class Kind { uniform, fixed };
  Kind kind = Kind::uniform;
  double low_db = 0.0;
  double high_db = 20.0;
  std::vector<double> fixed_db;  // one per EDP, or a single value for all
};

struct TrainConfig {
  int batch_size = 64;
  int max_epochs = 400;
  long max_iterations = 0;  // 0: no cap besides max_epochs
  std::vector<LrStep> lr_schedule{{0, 5e-4}, {100, 1e-4}, {200, 5e-5}};
  SnrPolicy snr;
  ScenarioKind channel = ScenarioKind::d2d;
  std::uint64_t seed = 1;
  int val_every = 1;  // epochs between validations
  double val_snr_db = 10.0;
  std::filesystem::path checkpoint_path;  // empty: keep the best model in memory only
  std::filesystem::path history_path;     // empty: no CSV
  std::filesystem::path state_path;       // empty: no resumable state file

  void validate() const;
  double lr_at(int epoch) const;
};

struct TrainState {
  int epoch = 0;
  long iteration = 0;
  AdamState<float> optimizer;
  double best_val_psnr = -1.0;  // below any PSNR an 8-bit image can have
  std::mt19937_64 rng;
};

TrainState initial_train_state(const TrainConfig& cfg);

// Binary resumable state: epoch, iteration, best PSNR, RNG, Adam moments and
// the current (not the best) network.
void save_train_state(const TrainState& state, const DmaNetF& current, const std::filesystem::path& path);
TrainState load_train_state(const std::filesystem::path& path, DmaNetF& current);

// The N per-EDP SNRs used for one iteration.
std::vector<double> sample_snrs(const SnrPolicy& policy, int edp_count, std::mt19937_64& rng);

// One realization per batch row, redrawn while any own link is in outage.
std::vector<ChannelRealization> draw_batch_channels(ScenarioKind kind, std::span<const double> snr_db,
                                                    double power, Index batch, std::uint64_t seed);

// Forward, backward and Adam update on N image batches [B,3,H,W] that travel
// through the given per-row realizations. Returns the mean over EDPs of the
// per-EDP MSE.
double train_step(DmaNetF& net, std::span<const TensorF> batches, std::span<const double> snr_db,
                  std::span<const ChannelRealization> rows, ScenarioKind kind, double lr,
                  AdamState<float>& optimizer);

// Samples SNRs and channels from state.rng and runs train_step on the given
// per-EDP image indices, which must be pairwise disjoint.
double train_iteration(DmaNetF& net, const ImageSet& data, std::span<const std::vector<Index>> indices,
                       const TrainConfig& cfg, TrainState& state);

struct HistoryRow {
  int epoch = 0;
  long iteration = 0;
  double loss = 0.0;
  double val_psnr_db = 0.0;
  double lr = 0.0;
};

struct EvalResult {
  double avg_psnr_db = 0.0;
  std::vector<double> edp_psnr_db;  // mean over images and draws
};

// All EDPs transmit simultaneously; slot j gives EDP i image (j + i) mod n.
// PSNR is measured on 8-bit images and averaged over `draws` realizations.
EvalResult evaluate(DmaNetF& net, const ImageSet& test, double snr_db, ScenarioKind kind, int draws,
                    std::uint64_t seed);

struct TrainResult {
  std::vector<HistoryRow> history;
  DmaNetF best;
  int checkpoints_written = 0;
};

using EpochCallback = std::function<void(const HistoryRow&)>;

// Runs epochs from state.epoch until cfg.max_epochs or the iteration cap.
// Validation follows every val_every epochs; the checkpoint is rewritten only
// when the validation PSNR improves on state.best_val_psnr.
TrainResult train_loop(DmaNetF& net, const ImageSet& train, const ImageSet& val, const TrainConfig& cfg,
                       TrainState& state, const EpochCallback& on_epoch = {});

std::string history_header();
std::string format_history_row(const HistoryRow& row);

}  // namespace deepma
