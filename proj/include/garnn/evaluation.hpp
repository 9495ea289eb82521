// Horizon-sliced error metrics and the historical-average baseline.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "garnn/data.hpp"

namespace garnn {

struct MetricValues {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> mape;  // percent; absent when every valid truth is 0
  std::size_t count = 0;
  std::size_t mape_count = 0;

  friend bool operator==(const MetricValues&, const MetricValues&) = default;
};

struct MetricsReport {
  std::vector<std::optional<MetricValues>> horizons;  // index p-1 for step p
  std::optional<MetricValues> average;                // mean of the present steps
};

/// Each span element is one horizon step; tensors of that step share a shape.
/// Entries count where mask != 0; MAPE additionally skips truth == 0.
MetricsReport compute_metrics(std::span<const Tensor> preds, std::span<const Tensor> truth,
                              std::span<const Tensor> mask);

/// Denormalised predictions and truth gathered per horizon step, M x N each.
struct HorizonData {
  std::vector<Tensor> predictions;
  std::vector<Tensor> truth;
  std::vector<Tensor> mask;
};

/// Truth and mask of every window, with zeroed predictions to be filled in.
HorizonData horizon_truth(const WindowSet& windows);

inline constexpr std::size_t kWeekSteps = 7 * 24 * 12;

/// Seasonal mean per (sensor, slot), slot = source row mod season_period,
/// over observed training values. Slots never observed fall back to the
/// sensor's training mean.
class HistoricalAverage {
 public:
  HistoricalAverage(const SeriesTable& train, std::size_t season_period = kWeekSteps);

  double predict(std::size_t row, std::size_t sensor) const;
  std::size_t season_period() const { return season_; }

 private:
  std::size_t season_ = 0, sensors_ = 0;
  std::vector<double> slot_mean_;
  std::vector<std::uint8_t> slot_seen_;
  std::vector<double> sensor_mean_;
};

/// Q x N predictions for the given source rows.
Tensor historical_average(const SeriesTable& train, std::span<const std::size_t> rows,
                          std::size_t season_period = kWeekSteps);

/// HA forecast for every window; identical across horizon steps for a given
/// target time.
HorizonData ha_forecast(const HistoricalAverage& ha, const WindowSet& windows);

std::string format_report(const MetricsReport& report, const std::string& title, std::size_t step_minutes = 5);

/// `horizon,metric,value` lines; the average uses horizon `avg`.
std::string metrics_csv(const MetricsReport& report);

}  // namespace garnn
