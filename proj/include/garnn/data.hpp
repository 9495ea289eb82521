// Series ingestion, chronological splits, normalisation, windowing and the
// synthetic data generators used for desk-scale experiments.
//
// Series file: comma separated, header row `timestamp,<sensor id>,...`, then
// one row per time point with an ISO-8601 timestamp (`YYYY-MM-DDTHH:MM:SS`,
// a space instead of `T` is accepted) and one speed per sensor. Timestamps
// must increase with a fixed period. A speed of exactly 0 marks a missing
// reading.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "garnn/errors.hpp"
#include "garnn/graph.hpp"
#include "garnn/tensor.hpp"

namespace garnn {

struct SeriesTable {
  std::vector<std::string> sensor_ids;
  std::vector<std::int64_t> epoch_seconds;  // UTC seconds, one per row
  Tensor values;                            // T x N speeds
  std::vector<std::uint8_t> mask;           // T x N, 1 = observed
  std::size_t first_row = 0;                // offset of row 0 in the source table

  std::size_t rows() const { return epoch_seconds.size(); }
  std::size_t sensors() const { return sensor_ids.size(); }
  bool observed(std::size_t t, std::size_t i) const { return mask[t * sensors() + i] != 0; }
  /// Sampling period in seconds; 0 for tables with fewer than two rows.
  std::int64_t period_seconds() const;
  SeriesTable slice(std::size_t begin, std::size_t count) const;
};

std::int64_t parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t epoch_seconds);
/// Fraction of the day elapsed, in [0, 1).
double time_of_day(std::int64_t epoch_seconds);

SeriesTable load_series(const std::string& path);
void write_series(const std::string& path, const SeriesTable& table);
/// Builds a table from raw values, deriving the missing mask from zeros.
SeriesTable make_table(std::vector<std::string> sensor_ids, std::vector<std::int64_t> epoch_seconds, Tensor values);

struct Splits {
  SeriesTable train;
  SeriesTable val;
  SeriesTable test;
};

/// Contiguous splits at floor(0.7 T) and floor(0.8 T). Throws ConfigError if
/// any split has fewer than min_rows rows.
Splits split_70_10_20(const SeriesTable& table, std::size_t min_rows = 0);

struct NormStats {
  double mean = 0.0;
  double std = 1.0;

  double normalize(double x) const { return (x - mean) / std; }
  double denormalize(double z) const { return z * std + mean; }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Mean and standard deviation of the observed training speeds.
NormStats compute_norm_stats(const SeriesTable& train);

/// Number of input channels: normalised speed plus time of day.
inline constexpr std::size_t kInputChannels = 2;

/// One training sample. The spans view storage owned by the WindowSet.
struct ForecastInstance {
  std::span<const Tensor> inputs;        // L tensors, N x K
  std::span<const Tensor> targets;       // P tensors, N x 1, normalised speed
  std::span<const Tensor> targets_raw;   // P tensors, N x 1, speed
  std::span<const Tensor> target_mask;   // P tensors, N x 1, 1 = observed
  std::span<const Tensor> known_future;  // P tensors, N x 1, time of day
  std::size_t first_target_row = 0;      // source-table row of targets[0]
};

/// Stride-1 sliding windows over one table: T - L - P + 1 instances (0 when
/// negative). Windows never extend past the table they were built from.
class WindowSet {
 public:
  WindowSet() = default;
  WindowSet(const SeriesTable& table, const NormStats& norm, std::size_t lookback, std::size_t horizon);

  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  ForecastInstance operator[](std::size_t i) const;
  std::size_t lookback() const { return lookback_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t nodes() const { return nodes_; }
  const NormStats& norm() const { return norm_; }

 private:
  struct Rows {
    std::vector<Tensor> features, targets, targets_raw, mask, time_of_day;
  };
  std::shared_ptr<const Rows> rows_;
  NormStats norm_;
  std::size_t lookback_ = 0, horizon_ = 0, nodes_ = 0, count_ = 0, first_row_ = 0;
};

WindowSet make_windows(const SeriesTable& table, const NormStats& norm, std::size_t lookback, std::size_t horizon);

struct SynthOptions {
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  double noise = 0.01;
  std::size_t regime_period = 0;  // 0: one weighting for the whole series
  double rho = 0.8;
  std::size_t day_steps = 288;    // sinusoid period in steps
  double base = 60.0;
  double amplitude = 10.0;
  std::int64_t start_epoch = 1330560000;  // 2012-03-01T00:00:00
  std::int64_t period_seconds = 300;
};

/// x_{t+1} = rho * A_t x_t + (1 - rho) * s(t) + noise * eps_t, where A_t is
/// the self-loop-augmented adjacency, row-normalised under one of two fixed
/// random weightings that alternate every regime_period steps, and s(t) is a
/// per-sensor daily sinusoid. Deterministic given the seed.
SeriesTable synth_generate(const SensorGraph& g, const SynthOptions& options);

/// Per-sensor pattern that repeats exactly every season steps (daily and
/// seasonal harmonics with seeded phases); no noise.
SeriesTable synth_periodic(const SensorGraph& g, std::size_t steps, std::size_t season, std::uint64_t seed,
                           const SynthOptions& shape = {});

/// Directed ring: i -> i+1 at 1000, i+1 -> i at 1800, i -> i+2 at 2600.
std::vector<DistanceRecord> ring_distances(std::size_t nodes);
std::vector<std::string> synth_sensor_ids(std::size_t nodes);

}  // namespace garnn
