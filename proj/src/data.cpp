#include "garnn/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "text_util.hpp"

namespace garnn {

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y = static_cast<int>(yoe + era * 400 + (m <= 2));
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
  const std::int64_t r = a % b;
  return r < 0 ? r + b : r;
}

}  // namespace

std::int64_t parse_timestamp(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int consumed = 0;
  const int n = std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
  if (n < 6 || (sep != 'T' && sep != ' ')) throw IngestionError("bad timestamp '" + text + "'");
  std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest[0] == ':') {
    int used = 0;
    if (std::sscanf(rest.c_str(), ":%2d%n", &s, &used) != 1) throw IngestionError("bad timestamp '" + text + "'");
    rest = rest.substr(static_cast<std::size_t>(used));
  }
  if (!rest.empty() && rest != "Z") throw IngestionError("bad timestamp '" + text + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60)
    throw IngestionError("timestamp out of range '" + text + "'");
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_timestamp(std::int64_t epoch_seconds) {
  const std::int64_t days = (epoch_seconds - floor_mod(epoch_seconds, 86400)) / 86400;
  const std::int64_t secs = floor_mod(epoch_seconds, 86400);
  int y = 0;
  unsigned m = 0, d = 0;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", y, m, d, static_cast<int>(secs / 3600),
                static_cast<int>(secs / 60 % 60), static_cast<int>(secs % 60));
  return buf;
}

double time_of_day(std::int64_t epoch_seconds) {
  return static_cast<double>(floor_mod(epoch_seconds, 86400)) / 86400.0;
}

std::int64_t SeriesTable::period_seconds() const {
  return rows() < 2 ? 0 : epoch_seconds[1] - epoch_seconds[0];
}

SeriesTable SeriesTable::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > rows()) throw ContractError("SeriesTable::slice out of range");
  const std::size_t n = sensors();
  SeriesTable out;
  out.sensor_ids = sensor_ids;
  out.epoch_seconds.assign(epoch_seconds.begin() + static_cast<std::ptrdiff_t>(begin),
                           epoch_seconds.begin() + static_cast<std::ptrdiff_t>(begin + count));
  out.values = Tensor::matrix(count, n);
  std::copy_n(values.data() + begin * n, count * n, out.values.data());
  out.mask.assign(mask.begin() + static_cast<std::ptrdiff_t>(begin * n),
                  mask.begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  out.first_row = first_row + begin;
  return out;
}

SeriesTable make_table(std::vector<std::string> sensor_ids, std::vector<std::int64_t> epoch_seconds, Tensor values) {
  if (values.rank() != 2 || values.rows() != epoch_seconds.size() || values.cols() != sensor_ids.size())
    throw DimensionError("make_table", values.shape(), {epoch_seconds.size(), sensor_ids.size()});
  SeriesTable t;
  t.sensor_ids = std::move(sensor_ids);
  t.epoch_seconds = std::move(epoch_seconds);
  t.mask.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) values[i] = 0.0;
    t.mask[i] = values[i] != 0.0 ? 1 : 0;
  }
  t.values = std::move(values);
  return t;
}

SeriesTable load_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open series file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IngestionError(path + ": empty series file");
  auto header = detail::split_csv(detail::trim(line));
  if (header.size() < 2) throw IngestionError(path + ":1: header needs a timestamp column and at least one sensor");
  std::vector<std::string> ids(header.begin() + 1, header.end());
  const std::size_t n = ids.size();

  std::vector<std::int64_t> stamps;
  std::vector<double> values;
  std::size_t line_no = 1;
  auto fail = [&](const std::string& what) {
    throw IngestionError(path + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != n + 1)
      fail("expected " + std::to_string(n + 1) + " fields, got " + std::to_string(fields.size()));
    std::int64_t ts = 0;
    try {
      ts = parse_timestamp(fields[0]);
    } catch (const IngestionError& e) {
      fail(e.what());
    }
    if (!stamps.empty()) {
      if (ts <= stamps.back()) fail("timestamps must be strictly increasing");
      if (stamps.size() >= 2 && ts - stamps.back() != stamps[1] - stamps[0]) fail("timestamps are not uniformly spaced");
    }
    stamps.push_back(ts);
    for (std::size_t i = 1; i <= n; ++i) {
      const std::string& f = fields[i];
      if (f.empty() || f == "nan" || f == "NaN") {
        values.push_back(0.0);
        continue;
      }
      const auto v = detail::parse_double(f);
      if (!v) fail("bad value '" + f + "'");
      values.push_back(*v);
    }
  }
  const std::size_t rows = stamps.size();
  return make_table(std::move(ids), std::move(stamps), Tensor({rows, n}, std::move(values)));
}

void write_series(const std::string& path, const SeriesTable& table) {
  std::string out = "timestamp";
  for (const auto& id : table.sensor_ids) out += "," + id;
  out += '\n';
  for (std::size_t t = 0; t < table.rows(); ++t) {
    out += format_timestamp(table.epoch_seconds[t]);
    for (std::size_t i = 0; i < table.sensors(); ++i) {
      out += ',';
      out += detail::format_double(table.values(t, i));
    }
    out += '\n';
  }
  detail::write_file_atomic(path, out);
}

Splits split_70_10_20(const SeriesTable& table, std::size_t min_rows) {
  const std::size_t t = table.rows();
  const std::size_t a = 7 * t / 10;
  const std::size_t b = 8 * t / 10;
  if (a < min_rows || b - a < min_rows || t - b < min_rows)
    throw ConfigError("series of " + std::to_string(t) + " rows is too short: 70/10/20 split gives " +
                      std::to_string(a) + "/" + std::to_string(b - a) + "/" + std::to_string(t - b) +
                      " rows, each split needs at least " + std::to_string(min_rows));
  return {table.slice(0, a), table.slice(a, b - a), table.slice(b, t - b)};
}

NormStats compute_norm_stats(const SeriesTable& train) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < train.values.size(); ++k) {
    if (!train.mask[k]) continue;
    sum += train.values[k];
    ++count;
  }
  if (count == 0) throw ConfigError("training split has no observed values");
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (std::size_t k = 0; k < train.values.size(); ++k) {
    if (!train.mask[k]) continue;
    const double d = train.values[k] - mean;
    ss += d * d;
  }
  double sd = std::sqrt(ss / static_cast<double>(count));
  if (!(sd > 1e-9)) sd = 1.0;
  return {mean, sd};
}

WindowSet::WindowSet(const SeriesTable& table, const NormStats& norm, std::size_t lookback, std::size_t horizon)
    : norm_(norm), lookback_(lookback), horizon_(horizon), nodes_(table.sensors()), first_row_(table.first_row) {
  if (lookback == 0 || horizon == 0) throw ContractError("make_windows: lookback and horizon must be positive");
  const std::size_t t = table.rows();
  count_ = t >= lookback + horizon ? t - lookback - horizon + 1 : 0;
  auto rows = std::make_shared<Rows>();
  const std::size_t n = nodes_;
  for (std::size_t r = 0; r < t; ++r) {
    Tensor feat = Tensor::matrix(n, kInputChannels);
    Tensor target = Tensor::matrix(n, 1), raw = Tensor::matrix(n, 1), mask = Tensor::matrix(n, 1);
    const double tod = time_of_day(table.epoch_seconds[r]);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = table.values(r, i);
      feat(i, 0) = norm.normalize(v);
      feat(i, 1) = tod;
      target[i] = norm.normalize(v);
      raw[i] = v;
      mask[i] = table.observed(r, i) ? 1.0 : 0.0;
    }
    rows->features.push_back(std::move(feat));
    rows->targets.push_back(std::move(target));
    rows->targets_raw.push_back(std::move(raw));
    rows->mask.push_back(std::move(mask));
    rows->time_of_day.push_back(Tensor::matrix(n, 1, tod));
  }
  rows_ = std::move(rows);
}

ForecastInstance WindowSet::operator[](std::size_t i) const {
  if (i >= count_) throw ContractError("window index out of range");
  const Rows& r = *rows_;
  const std::size_t ts = i + lookback_;
  ForecastInstance inst;
  inst.inputs = std::span<const Tensor>(r.features).subspan(i, lookback_);
  inst.targets = std::span<const Tensor>(r.targets).subspan(ts, horizon_);
  inst.targets_raw = std::span<const Tensor>(r.targets_raw).subspan(ts, horizon_);
  inst.target_mask = std::span<const Tensor>(r.mask).subspan(ts, horizon_);
  inst.known_future = std::span<const Tensor>(r.time_of_day).subspan(ts, horizon_);
  inst.first_target_row = first_row_ + ts;
  return inst;
}

WindowSet make_windows(const SeriesTable& table, const NormStats& norm, std::size_t lookback, std::size_t horizon) {
  return WindowSet(table, norm, lookback, horizon);
}

// ---------------------------------------------------------------------------
// Synthetic data

std::vector<std::string> synth_sensor_ids(std::size_t nodes) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < nodes; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%03zu", i);
    ids.emplace_back(buf);
  }
  return ids;
}

std::vector<DistanceRecord> ring_distances(std::size_t nodes) {
  const auto ids = synth_sensor_ids(nodes);
  std::vector<DistanceRecord> records;
  if (nodes < 2) return records;
  for (std::size_t i = 0; i < nodes; ++i) {
    const std::size_t next = (i + 1) % nodes;
    records.push_back({ids[i], ids[next], 1000.0});
    if (nodes > 2) records.push_back({ids[next], ids[i], 1800.0});
    if (nodes > 4) records.push_back({ids[i], ids[(i + 2) % nodes], 2600.0});
  }
  return records;
}

namespace {

std::vector<std::int64_t> synth_stamps(const SynthOptions& o, std::size_t steps) {
  std::vector<std::int64_t> stamps(steps);
  for (std::size_t t = 0; t < steps; ++t) stamps[t] = o.start_epoch + static_cast<std::int64_t>(t) * o.period_seconds;
  return stamps;
}

// Row-normalised weights over NB(i) drawn uniformly from [lo, 1].
Tensor random_transition(const NeighborSets& nb, std::mt19937_64& rng, double lo) {
  const std::size_t n = nb.size();
  Tensor a = Tensor::matrix(n, n);
  std::uniform_real_distribution<double> w(lo, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (auto j : nb.rows[i]) z += a(i, j) = w(rng);
    for (auto j : nb.rows[i]) a(i, j) /= z;
  }
  return a;
}

}  // namespace

SeriesTable synth_generate(const SensorGraph& g, const SynthOptions& o) {
  const std::size_t n = g.size();
  if (n == 0) throw ConfigError("synthetic graph has no vertices");
  if (o.steps == 0) throw ConfigError("synthetic series needs at least one step");
  std::mt19937_64 rng(o.seed);
  const NeighborSets nb = out_neighbor_sets(g);
  const Tensor weights[2] = {random_transition(nb, rng, 0.05), random_transition(nb, rng, 0.05)};

  std::vector<double> phase(n);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  for (std::size_t i = 0; i < n; ++i)
    phase[i] = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n) + jitter(rng);
  auto drive = [&](std::size_t t, std::size_t i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(t % o.day_steps) / static_cast<double>(o.day_steps);
    return o.base + o.amplitude * std::sin(angle + phase[i]);
  };

  std::normal_distribution<double> eps(0.0, 1.0);
  Tensor values = Tensor::matrix(o.steps, n);
  std::vector<double> x(n), next(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = drive(0, i);
  for (std::size_t t = 0; t < o.steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) values(t, i) = x[i];
    const std::size_t regime = o.regime_period ? (t / o.regime_period) % 2 : 0;
    const Tensor& a = weights[regime];
    for (std::size_t i = 0; i < n; ++i) {
      double mix = 0.0;
      for (auto j : nb.rows[i]) mix += a(i, j) * x[j];
      next[i] = o.rho * mix + (1.0 - o.rho) * drive(t, i) + o.noise * eps(rng);
    }
    x.swap(next);
  }
  return make_table(g.vertex_ids(), synth_stamps(o, o.steps), std::move(values));
}

SeriesTable synth_periodic(const SensorGraph& g, std::size_t steps, std::size_t season, std::uint64_t seed,
                           const SynthOptions& shape) {
  const std::size_t n = g.size();
  if (n == 0 || steps == 0 || season == 0) throw ConfigError("periodic series needs vertices, steps and a season");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<double> daily(n), seasonal(n);
  for (std::size_t i = 0; i < n; ++i) {
    daily[i] = angle(rng);
    seasonal[i] = angle(rng);
  }
  Tensor values = Tensor::matrix(steps, n);
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t slot = t % season;
    const double day_angle = 2.0 * std::numbers::pi * static_cast<double>(slot % shape.day_steps) /
                             static_cast<double>(shape.day_steps);
    const double season_angle = 2.0 * std::numbers::pi * static_cast<double>(slot) / static_cast<double>(season);
    for (std::size_t i = 0; i < n; ++i)
      values(t, i) = shape.base + shape.amplitude * std::sin(day_angle + daily[i]) +
                     0.5 * shape.amplitude * std::sin(season_angle + seasonal[i]);
  }
  return make_table(g.vertex_ids(), synth_stamps(shape, steps), std::move(values));
}

}  // namespace garnn
