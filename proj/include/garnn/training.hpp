// Masked MAE objective, Adam, the epoch learning-rate schedule, the mini-batch
// training loop and checkpoint persistence.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "garnn/data.hpp"
#include "garnn/evaluation.hpp"
#include "garnn/model.hpp"
#include "garnn/seq2seq.hpp"

namespace garnn {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  std::size_t lr_decay_start_epoch = 40;
  std::size_t lr_decay_every = 10;
  double lr_decay_factor = 0.1;
  std::size_t heads = 2;
  std::size_t embed = 16;
  std::size_t layers = 2;
  std::size_t units = 64;
  std::size_t hops = 2;
  std::size_t lookback = 12;
  std::size_t horizon = 12;
  double tau = 2000.0;
  std::uint64_t seed = 0;
  std::size_t patience = 50;
  double clip_norm = 5.0;       // 0 disables clipping
  std::size_t max_steps = 0;    // optimizer steps; 0 = unlimited
  std::size_t threads = 1;
  bool share_attention = false;
  bool stop_attention_gradient = false;

  void validate() const;
  ModelConfig model_config(std::size_t nodes) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Calls v(key, field) for every TrainConfig field, in a fixed order. Fields
/// are double, std::size_t / std::uint64_t, or bool.
template <class Visitor>
void visit_fields(TrainConfig& c, Visitor&& v) {
  v("learning_rate", c.learning_rate);
  v("batch_size", c.batch_size);
  v("epochs", c.epochs);
  v("lr_decay_start_epoch", c.lr_decay_start_epoch);
  v("lr_decay_every", c.lr_decay_every);
  v("lr_decay_factor", c.lr_decay_factor);
  v("heads", c.heads);
  v("embed", c.embed);
  v("layers", c.layers);
  v("units", c.units);
  v("diffusion_steps", c.hops);
  v("lookback", c.lookback);
  v("horizon", c.horizon);
  v("tau", c.tau);
  v("seed", c.seed);
  v("patience", c.patience);
  v("clip_norm", c.clip_norm);
  v("max_steps", c.max_steps);
  v("threads", c.threads);
  v("share_attention", c.share_attention);
  v("stop_attention_gradient", c.stop_attention_gradient);
}

/// Masked batch with no valid entry.
class DegenerateBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite gradient or loss; training stops and keeps the last good state.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean of |pred - truth| over entries with mask != 0, across all steps.
Var mae_loss(std::span<const Var> preds, std::span<const Tensor> truth, std::span<const Tensor> mask);

struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState zeros_like(const ParameterSet& params);
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// One bias-corrected Adam update in place. Throws NonFiniteError naming the
/// first parameter whose gradient is not finite, before touching any state.
void adam_step(ParameterSet& params, std::span<const Tensor> grads, OptimizerState& state, double lr);

/// Rescales grads so their joint L2 norm is at most max_norm. Returns the norm
/// before clipping.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

double lr_at_epoch(std::size_t epoch, const TrainConfig& c);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  double lr = 0.0;
  double train_loss = 0.0;
  std::uint64_t steps = 0;  // optimizer steps taken so far
  std::optional<MetricValues> val;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  TrainConfig config;
  ModelConfig model;
  NormStats norm;
  std::vector<std::string> sensor_ids;
  std::vector<std::uint8_t> adjacency;  // N x N graph the model was trained on
  ParameterSet params;
  OptimizerState optimizer;
  std::size_t epoch = 0;
  std::vector<EpochRecord> history;

  GaRnnModel to_model() const;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(const std::string& text);
/// Atomic write (temporary file, then rename).
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

/// `epoch lr train_loss steps val_mae val_rmse val_mape` lines with a header.
std::string history_text(std::span<const EpochRecord> history);

/// Autoregressive forecast of one window: P tensors N x K_out, normalised.
std::vector<Tensor> forecast(const GaRnnModel& model, const DirectedSupports& supports,
                             std::span<const Tensor> inputs, std::span<const Tensor> known_future,
                             std::size_t horizon);

/// Denormalised autoregressive forecasts for every window.
HorizonData model_forecast(const GaRnnModel& model, const WindowSet& windows, const DirectedSupports& supports,
                           std::size_t threads = 1);

struct TrainResult {
  Checkpoint best;   // lowest validation MAE seen (train loss without a validation set)
  Checkpoint final;  // state after the last completed step
  std::optional<std::string> aborted;  // reason when training stopped on a non-finite value
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
};

TrainResult train(const TrainConfig& config, const WindowSet& train_set, const WindowSet& val_set,
                  const SensorGraph& graph, const NormStats& norm, const TrainHooks& hooks = {});

}  // namespace garnn
