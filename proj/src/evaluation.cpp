#include "garnn/evaluation.hpp"

#include <cmath>
#include <cstdio>

#include "text_util.hpp"

namespace garnn {

MetricsReport compute_metrics(std::span<const Tensor> preds, std::span<const Tensor> truth,
                              std::span<const Tensor> mask) {
  if (preds.size() != truth.size() || preds.size() != mask.size())
    throw DimensionError("compute_metrics: " + std::to_string(preds.size()) + " prediction steps, " +
                         std::to_string(truth.size()) + " truth steps, " + std::to_string(mask.size()) + " mask steps");
  MetricsReport report;
  MetricValues avg;
  std::size_t present = 0, mape_present = 0;
  double mape_sum = 0.0;
  for (std::size_t p = 0; p < preds.size(); ++p) {
    if (!preds[p].same_shape(truth[p])) throw DimensionError("compute_metrics", preds[p].shape(), truth[p].shape());
    if (!preds[p].same_shape(mask[p])) throw DimensionError("compute_metrics", preds[p].shape(), mask[p].shape());
    double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
    std::size_t count = 0, pct_count = 0;
    for (std::size_t k = 0; k < preds[p].size(); ++k) {
      if (mask[p][k] == 0.0) continue;
      const double e = preds[p][k] - truth[p][k];
      abs_sum += std::abs(e);
      sq_sum += e * e;
      ++count;
      if (truth[p][k] != 0.0) {
        pct_sum += std::abs(e) / std::abs(truth[p][k]);
        ++pct_count;
      }
    }
    if (count == 0) {
      report.horizons.emplace_back();
      continue;
    }
    MetricValues m;
    m.mae = abs_sum / static_cast<double>(count);
    m.rmse = std::sqrt(sq_sum / static_cast<double>(count));
    m.count = count;
    m.mape_count = pct_count;
    if (pct_count) m.mape = 100.0 * pct_sum / static_cast<double>(pct_count);
    report.horizons.push_back(m);

    avg.mae += m.mae;
    avg.rmse += m.rmse;
    avg.count += count;
    avg.mape_count += pct_count;
    ++present;
    if (m.mape) {
      mape_sum += *m.mape;
      ++mape_present;
    }
  }
  if (present) {
    avg.mae /= static_cast<double>(present);
    avg.rmse /= static_cast<double>(present);
    if (mape_present) avg.mape = mape_sum / static_cast<double>(mape_present);
    report.average = avg;
  }
  return report;
}

HorizonData horizon_truth(const WindowSet& windows) {
  HorizonData d;
  const std::size_t m = windows.size(), n = windows.nodes(), horizon = windows.horizon();
  for (std::size_t p = 0; p < horizon; ++p) {
    d.predictions.push_back(Tensor::matrix(m, n));
    d.truth.push_back(Tensor::matrix(m, n));
    d.mask.push_back(Tensor::matrix(m, n));
  }
  for (std::size_t w = 0; w < m; ++w) {
    const ForecastInstance inst = windows[w];
    for (std::size_t p = 0; p < horizon; ++p)
      for (std::size_t i = 0; i < n; ++i) {
        d.truth[p](w, i) = inst.targets_raw[p][i];
        d.mask[p](w, i) = inst.target_mask[p][i];
      }
  }
  return d;
}

HistoricalAverage::HistoricalAverage(const SeriesTable& train, std::size_t season_period)
    : season_(season_period), sensors_(train.sensors()) {
  if (season_period == 0) throw ConfigError("historical average: season period must be positive");
  std::vector<double> slot_sum(season_ * sensors_, 0.0);
  std::vector<std::size_t> slot_count(season_ * sensors_, 0);
  std::vector<double> sensor_sum(sensors_, 0.0);
  std::vector<std::size_t> sensor_count(sensors_, 0);
  for (std::size_t t = 0; t < train.rows(); ++t) {
    const std::size_t slot = (train.first_row + t) % season_;
    for (std::size_t i = 0; i < sensors_; ++i) {
      if (!train.observed(t, i)) continue;
      const double v = train.values(t, i);
      slot_sum[slot * sensors_ + i] += v;
      ++slot_count[slot * sensors_ + i];
      sensor_sum[i] += v;
      ++sensor_count[i];
    }
  }
  slot_mean_.assign(season_ * sensors_, 0.0);
  slot_seen_.assign(season_ * sensors_, 0);
  for (std::size_t k = 0; k < slot_sum.size(); ++k) {
    if (!slot_count[k]) continue;
    slot_mean_[k] = slot_sum[k] / static_cast<double>(slot_count[k]);
    slot_seen_[k] = 1;
  }
  sensor_mean_.assign(sensors_, 0.0);
  for (std::size_t i = 0; i < sensors_; ++i)
    if (sensor_count[i]) sensor_mean_[i] = sensor_sum[i] / static_cast<double>(sensor_count[i]);
}

double HistoricalAverage::predict(std::size_t row, std::size_t sensor) const {
  const std::size_t k = (row % season_) * sensors_ + sensor;
  return slot_seen_[k] ? slot_mean_[k] : sensor_mean_[sensor];
}

Tensor historical_average(const SeriesTable& train, std::span<const std::size_t> rows, std::size_t season_period) {
  const HistoricalAverage ha(train, season_period);
  Tensor out = Tensor::matrix(rows.size(), train.sensors());
  for (std::size_t q = 0; q < rows.size(); ++q)
    for (std::size_t i = 0; i < train.sensors(); ++i) out(q, i) = ha.predict(rows[q], i);
  return out;
}

HorizonData ha_forecast(const HistoricalAverage& ha, const WindowSet& windows) {
  HorizonData d = horizon_truth(windows);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const std::size_t first = windows[w].first_target_row;
    for (std::size_t p = 0; p < windows.horizon(); ++p)
      for (std::size_t i = 0; i < windows.nodes(); ++i) d.predictions[p](w, i) = ha.predict(first + p, i);
  }
  return d;
}

std::string format_report(const MetricsReport& report, const std::string& title, std::size_t step_minutes) {
  std::string out = title + "\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-8s %8s %10s %10s %10s %10s\n", "horizon", "minutes", "MAE", "RMSE", "MAPE(%)",
                "count");
  out += buf;
  auto row = [&](const std::string& label, const std::string& minutes, const std::optional<MetricValues>& m) {
    if (!m) {
      std::snprintf(buf, sizeof(buf), "%-8s %8s %10s %10s %10s %10s\n", label.c_str(), minutes.c_str(), "-", "-", "-",
                    "0");
    } else {
      std::string mape = "-";
      if (m->mape) {
        char v[32];
        std::snprintf(v, sizeof(v), "%.2f", *m->mape);
        mape = v;
      }
      std::snprintf(buf, sizeof(buf), "%-8s %8s %10.4f %10.4f %10s %10zu\n", label.c_str(), minutes.c_str(), m->mae,
                    m->rmse, mape.c_str(), m->count);
    }
    out += buf;
  };
  for (std::size_t p = 0; p < report.horizons.size(); ++p)
    row(std::to_string(p + 1), std::to_string((p + 1) * step_minutes), report.horizons[p]);
  row("avg", "-", report.average);
  return out;
}

std::string metrics_csv(const MetricsReport& report) {
  std::string out = "horizon,metric,value\n";
  auto emit = [&](const std::string& h, const std::optional<MetricValues>& m) {
    if (!m) return;
    out += h + ",mae," + detail::format_double(m->mae) + "\n";
    out += h + ",rmse," + detail::format_double(m->rmse) + "\n";
    if (m->mape) out += h + ",mape," + detail::format_double(*m->mape) + "\n";
  };
  for (std::size_t p = 0; p < report.horizons.size(); ++p) emit(std::to_string(p + 1), report.horizons[p]);
  emit("avg", report.average);
  return out;
}

}  // namespace garnn
