#include "deepma/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "deepma/checkpoint.hpp"
#include "deepma/metrics.hpp"

namespace deepma {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch size must be at least 1");
  if (max_epochs < 0) throw ConfigError("train: max epochs must be non-negative");
  if (max_iterations < 0) throw ConfigError("train: max iterations must be non-negative");
  if (val_every < 1) throw ConfigError("train: validation cadence must be at least 1 epoch");
  if (lr_schedule.empty() || lr_schedule.front().epoch != 0) {
    throw ConfigError("train: learning-rate schedule must start at epoch 0");
  }
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    if (!(lr_schedule[i].lr >= 0.0) || !std::isfinite(lr_schedule[i].lr)) {
      throw ConfigError("train: learning rates must be finite and non-negative");
    }
    if (i > 0 && lr_schedule[i].epoch <= lr_schedule[i - 1].epoch) {
      throw ConfigError("train: learning-rate schedule epochs must be strictly increasing");
    }
  }
  if (snr.kind == SnrPolicy::Kind::uniform) {
    if (!std::isfinite(snr.low_db) || !std::isfinite(snr.high_db) || snr.low_db > snr.high_db) {
      throw ConfigError("train: SNR range must be finite with low <= high");
    }
  } else if (snr.fixed_db.empty()) {
    throw ConfigError("train: fixed SNR policy needs at least one value");
  }
  if (!std::isfinite(val_snr_db)) throw ConfigError("train: validation SNR must be finite");
}

double TrainConfig::lr_at(int epoch) const {
  double lr = lr_schedule.front().lr;
  for (const auto& step : lr_schedule) {
    if (step.epoch <= epoch) lr = step.lr;
  }
  return lr;
}

TrainState initial_train_state(const TrainConfig& cfg) {
  TrainState state;
  state.rng.seed(derive_seed(cfg.seed, 0x7261696e));
  return state;
}

namespace {

constexpr char kStateMagic[4] = {'D', 'M', 'T', 'S'};
constexpr std::uint32_t kStateVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) {
    throw FormatError(path.string() + ": truncated training state while reading " + what);
  }
  return v;
}

void put_tensor(std::ostream& out, const TensorF& t) {
  put(out, std::uint8_t(t.rank()));
  for (Index d : t.shape()) put(out, std::uint32_t(d));
  out.write(reinterpret_cast<const char*>(t.ptr()), std::streamsize(t.size() * sizeof(float)));
}

TensorF get_tensor(std::istream& in, const std::filesystem::path& path) {
  const auto rank = get<std::uint8_t>(in, path, "rank");
  Shape shape(rank);
  for (auto& d : shape) d = Index(get<std::uint32_t>(in, path, "dims"));
  TensorF t(shape);
  in.read(reinterpret_cast<char*>(t.ptr()), std::streamsize(t.size() * sizeof(float)));
  if (!in) throw FormatError(path.string() + ": truncated training state while reading moments");
  return t;
}

}  // namespace

void save_train_state(const TrainState& state, const DmaNetF& current, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write training state " + path.string());
  out.write(kStateMagic, 4);
  put(out, kStateVersion);
  put(out, std::int32_t(state.epoch));
  put(out, std::int64_t(state.iteration));
  put(out, state.best_val_psnr);
  std::ostringstream rng;
  rng << state.rng;
  const std::string text = rng.str();
  put(out, std::uint32_t(text.size()));
  out.write(text.data(), std::streamsize(text.size()));
  put(out, std::int64_t(state.optimizer.step));
  put(out, std::uint32_t(state.optimizer.first.size()));
  for (std::size_t i = 0; i < state.optimizer.first.size(); ++i) {
    put_tensor(out, state.optimizer.first[i]);
    put_tensor(out, state.optimizer.second[i]);
  }
  const auto model = serialize_checkpoint(current);
  put(out, std::uint64_t(model.size()));
  out.write(reinterpret_cast<const char*>(model.data()), std::streamsize(model.size()));
  if (!out) throw FormatError("failed writing training state " + path.string());
}

TrainState load_train_state(const std::filesystem::path& path, DmaNetF& current) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open training state " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kStateMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a training state file");
  }
  const auto version = get<std::uint32_t>(in, path, "version");
  if (version != kStateVersion) {
    throw FormatError(path.string() + ": unsupported training state version " + std::to_string(version));
  }
  TrainState state;
  state.epoch = get<std::int32_t>(in, path, "epoch");
  state.iteration = get<std::int64_t>(in, path, "iteration");
  state.best_val_psnr = get<double>(in, path, "best PSNR");
  const auto len = get<std::uint32_t>(in, path, "RNG length");
  std::string text(len, '\0');
  in.read(text.data(), len);
  std::istringstream rng(text);
  rng >> state.rng;
  if (!in || !rng) throw FormatError(path.string() + ": corrupt RNG state");
  state.optimizer.step = get<std::int64_t>(in, path, "optimizer step");
  const auto count = get<std::uint32_t>(in, path, "moment count");
  for (std::uint32_t i = 0; i < count; ++i) {
    state.optimizer.first.push_back(get_tensor(in, path));
    state.optimizer.second.push_back(get_tensor(in, path));
  }
  const auto size = get<std::uint64_t>(in, path, "model size");
  std::vector<std::uint8_t> model(size);
  in.read(reinterpret_cast<char*>(model.data()), std::streamsize(size));
  if (!in) throw FormatError(path.string() + ": truncated training state while reading the model");
  current = deserialize_checkpoint(model);
  return state;
}

std::vector<double> sample_snrs(const SnrPolicy& policy, int edp_count, std::mt19937_64& rng) {
  std::vector<double> out(static_cast<std::size_t>(edp_count));
  if (policy.kind == SnrPolicy::Kind::fixed) {
    if (policy.fixed_db.size() != 1 && policy.fixed_db.size() != out.size()) {
      throw ConfigError("train: " + std::to_string(policy.fixed_db.size()) + " fixed SNRs given for " +
                        std::to_string(edp_count) + " EDPs");
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = policy.fixed_db.size() == 1 ? policy.fixed_db[0] : policy.fixed_db[i];
    }
    return out;
  }
  std::uniform_real_distribution<double> dist(policy.low_db, policy.high_db);
  for (auto& v : out) v = dist(rng);
  return out;
}

std::vector<ChannelRealization> draw_batch_channels(ScenarioKind kind, std::span<const double> snr_db,
                                                    double power, Index batch, std::uint64_t seed) {
  std::vector<ChannelRealization> rows;
  rows.reserve(static_cast<std::size_t>(batch));
  for (Index b = 0; b < batch; ++b) {
    rows.push_back(draw_clear_channel(kind, snr_db, power, derive_seed(seed, std::uint64_t(b))));
  }
  return rows;
}

double train_step(DmaNetF& net, std::span<const TensorF> batches, std::span<const double> snr_db,
                  std::span<const ChannelRealization> rows, ScenarioKind kind, double lr,
                  AdamState<float>& optimizer) {
  const std::size_t n = net.edps.size();
  if (batches.size() != n || snr_db.size() != n) {
    throw ContractViolation("train_step: need one batch and one SNR per EDP (" + std::to_string(n) + ")");
  }
  Graph<float> g;
  std::vector<Var<float>> inputs, ssvs;
  for (std::size_t i = 0; i < n; ++i) {
    if (batches[i].rank() != 4 || batches[i].dim(0) != Index(rows.size())) {
      throw InvalidShape("train_step: batch " + std::to_string(i) + " has shape " +
                         shape_string(batches[i].shape()) + " for " + std::to_string(rows.size()) +
                         " channel rows");
    }
    inputs.push_back(g.input(batches[i]));
    ssvs.push_back(power_normalize(encode(net.edps[i], net.arch, inputs.back(), snr_db[i]), net.arch.power));
  }
  const auto rx = transmit<float>(ssvs, rows, kind);
  Var<float> total{};
  for (std::size_t i = 0; i < n; ++i) {
    Var<float> rmssv = equalize(rx[i], rows, int(i));
    Var<float> loss = mse(decode(net.edps[i], net.arch, rmssv, snr_db[i]), inputs[i]);
    total = i == 0 ? loss : total + loss;
  }
  Var<float> loss = scale(total, 1.0f / float(n));
  const double value = double(loss.value()[0]);
  if (!std::isfinite(value)) throw NumericalError("training loss is not finite");
  auto params = net.parameters();
  for (auto* p : params) p->zero_grad();
  g.backward(loss);
  adam_step(params, optimizer, lr);
  return value;
}

double train_iteration(DmaNetF& net, const ImageSet& data, std::span<const std::vector<Index>> indices,
                       const TrainConfig& cfg, TrainState& state) {
  const std::size_t n = net.edps.size();
  if (indices.size() != n) {
    throw ContractViolation("train_iteration: need one index list per EDP (" + std::to_string(n) + ")");
  }
  std::unordered_set<Index> seen;
  for (const auto& list : indices) {
    if (list.size() != indices.front().size() || list.empty()) {
      throw ContractViolation("train_iteration: EDP batches must be non-empty and of equal size");
    }
    for (Index idx : list) {
      if (!seen.insert(idx).second) {
        throw ContractViolation("train_iteration: training sample " + std::to_string(idx) +
                                " assigned to more than one EDP");
      }
    }
  }
  std::vector<TensorF> batches;
  for (const auto& list : indices) batches.push_back(normalize<float>(data, list));
  const auto snrs = sample_snrs(cfg.snr, int(n), state.rng);
  const std::uint64_t channel_seed = state.rng();
  const auto rows = draw_batch_channels(cfg.channel, snrs, net.arch.power, Index(indices.front().size()),
                                        channel_seed);
  const double loss = train_step(net, batches, snrs, rows, cfg.channel, cfg.lr_at(state.epoch), state.optimizer);
  ++state.iteration;
  return loss;
}

EvalResult evaluate(DmaNetF& net, const ImageSet& test, double snr_db, ScenarioKind kind, int draws,
                    std::uint64_t seed) {
  if (test.count < 1) throw ContractViolation("evaluate: empty test set");
  if (draws < 1) throw ContractViolation("evaluate: draws must be at least 1");
  const int n = int(net.edps.size());
  const Index count = test.count;
  constexpr Index kChunk = 64;
  const std::vector<double> snrs(static_cast<std::size_t>(n), snr_db);
  std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
  for (int d = 0; d < draws; ++d) {
    for (Index first = 0; first < count; first += kChunk) {
      const Index len = std::min(kChunk, count - first);
      std::vector<ChannelRealization> rows;
      for (Index j = first; j < first + len; ++j) {
        rows.push_back(draw_clear_channel(kind, snrs, net.arch.power,
                                          derive_seed(seed, std::uint64_t(d) * std::uint64_t(count) + std::uint64_t(j))));
      }
      Graph<float> g;
      std::vector<std::vector<Index>> assigned(static_cast<std::size_t>(n));
      std::vector<Var<float>> ssvs;
      for (int i = 0; i < n; ++i) {
        for (Index j = first; j < first + len; ++j) assigned[std::size_t(i)].push_back((j + i) % count);
        Var<float> x = g.input(normalize<float>(test, assigned[std::size_t(i)]));
        ssvs.push_back(power_normalize(encode(net.edps[std::size_t(i)], net.arch, x, snr_db), net.arch.power));
      }
      const auto rx = transmit<float>(ssvs, rows, kind);
      for (int i = 0; i < n; ++i) {
        Var<float> out = decode(net.edps[std::size_t(i)], net.arch, equalize(rx[std::size_t(i)], rows, i), snr_db);
        const auto pixels = denormalize(out.value());
        const auto sz = std::size_t(test.image_size());
        for (Index r = 0; r < len; ++r) {
          const std::span<const std::uint8_t> rec(pixels.data() + std::size_t(r) * sz, sz);
          sums[std::size_t(i)] += psnr(test.image(assigned[std::size_t(i)][std::size_t(r)]), rec);
        }
      }
    }
  }
  EvalResult result;
  for (double s : sums) result.edp_psnr_db.push_back(s / double(draws * count));
  result.avg_psnr_db =
      std::accumulate(result.edp_psnr_db.begin(), result.edp_psnr_db.end(), 0.0) / double(n);
  return result;
}

std::string history_header() {
  return "epoch,iteration,loss,val_psnr_db,lr\n";
}

std::string format_history_row(const HistoryRow& row) {
  char buf[160];
  if (std::isnan(row.val_psnr_db)) {
    std::snprintf(buf, sizeof buf, "%d,%ld,%.8f,,%.8g\n", row.epoch, row.iteration, row.loss, row.lr);
  } else {
    std::snprintf(buf, sizeof buf, "%d,%ld,%.8f,%.4f,%.8g\n", row.epoch, row.iteration, row.loss,
                  row.val_psnr_db, row.lr);
  }
  return buf;
}

TrainResult train_loop(DmaNetF& net, const ImageSet& train, const ImageSet& val, const TrainConfig& cfg,
                       TrainState& state, const EpochCallback& on_epoch) {
  cfg.validate();
  const Index n = Index(net.edps.size());
  const Index per_stream = train.count / n;
  const Index iters_per_epoch = per_stream / cfg.batch_size;
  if (iters_per_epoch < 1) {
    throw ContractViolation("train: " + std::to_string(train.count) + " training images cannot fill one batch of " +
                            std::to_string(cfg.batch_size) + " for each of " + std::to_string(n) + " EDPs");
  }
  if (val.count < 1) throw ContractViolation("train: empty validation set");
  if (train.height != net.arch.height || train.width != net.arch.width || val.height != train.height ||
      val.width != train.width) {
    throw InvalidShape("train: images are " + std::to_string(train.height) + "x" + std::to_string(train.width) +
                       ", model expects " + std::to_string(net.arch.height) + "x" + std::to_string(net.arch.width));
  }

  std::ofstream history;
  if (!cfg.history_path.empty()) {
    const bool fresh = state.epoch == 0 || !std::filesystem::exists(cfg.history_path);
    history.open(cfg.history_path, fresh ? std::ios::trunc : std::ios::app);
    if (!history) throw FormatError("cannot write history " + cfg.history_path.string());
    if (fresh) history << history_header() << std::flush;
  }

  TrainResult result;
  result.best = net;
  const std::uint64_t val_seed = derive_seed(cfg.seed, 0x76616c);
  auto capped = [&] { return cfg.max_iterations > 0 && state.iteration >= cfg.max_iterations; };

  while (state.epoch < cfg.max_epochs && !capped()) {
    const double lr = cfg.lr_at(state.epoch);
    std::vector<Index> order(static_cast<std::size_t>(train.count));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), state.rng);

    double loss_sum = 0.0;
    long steps = 0;
    for (Index t = 0; t < iters_per_epoch && !capped(); ++t) {
      std::vector<std::vector<Index>> indices(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i) {
        const auto begin = order.begin() + i * per_stream + t * cfg.batch_size;
        indices[std::size_t(i)].assign(begin, begin + cfg.batch_size);
      }
      loss_sum += train_iteration(net, train, indices, cfg, state);
      ++steps;
    }
    ++state.epoch;

    HistoryRow row;
    row.epoch = state.epoch;
    row.iteration = state.iteration;
    row.loss = loss_sum / double(steps);
    row.lr = lr;
    row.val_psnr_db = std::numeric_limits<double>::quiet_NaN();
    const bool last = state.epoch >= cfg.max_epochs || capped();
    if (state.epoch % cfg.val_every == 0 || last) {
      const EvalResult ev = evaluate(net, val, cfg.val_snr_db, cfg.channel, 1, val_seed);
      if (!std::isfinite(ev.avg_psnr_db)) {
        throw NumericalError("validation PSNR is not finite at epoch " + std::to_string(state.epoch) +
                             " (iteration " + std::to_string(state.iteration) + ", mean loss " +
                             std::to_string(row.loss) + ")");
      }
      row.val_psnr_db = ev.avg_psnr_db;
      if (ev.avg_psnr_db > state.best_val_psnr) {
        state.best_val_psnr = ev.avg_psnr_db;
        result.best = net;
        if (!cfg.checkpoint_path.empty()) {
          save_checkpoint(net, cfg.checkpoint_path);
          ++result.checkpoints_written;
        }
      }
    }
    if (history.is_open()) history << format_history_row(row) << std::flush;
    if (!cfg.state_path.empty()) save_train_state(state, net, cfg.state_path);
    result.history.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

}  // namespace deepma
