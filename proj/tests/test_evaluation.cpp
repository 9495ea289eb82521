#include <doctest.h>

#include <cmath>

#include "garnn/evaluation.hpp"
#include "oracles.hpp"

using namespace garnn;

namespace {

MetricsReport one_step(const std::vector<double>& preds, const std::vector<double>& truth,
                       const std::vector<double>& mask) {
  const std::vector<Tensor> p{Tensor::column(preds)}, y{Tensor::column(truth)}, m{Tensor::column(mask)};
  return compute_metrics(p, y, m);
}

SeriesTable table_of(const Tensor& values) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < values.cols(); ++i) ids.push_back("s" + std::to_string(i));
  std::vector<std::int64_t> stamps;
  for (std::size_t t = 0; t < values.rows(); ++t) stamps.push_back(300 * static_cast<std::int64_t>(t));
  return make_table(ids, stamps, values);
}

SensorGraph ring(std::size_t n) { return build_graph(ring_distances(n), 2000.0, synth_sensor_ids(n)); }

}  // namespace

TEST_CASE("metrics examples") {
  const MetricsReport exact = one_step({1, 2, 3}, {1, 2, 3}, {1, 1, 1});
  REQUIRE(exact.horizons[0]);
  CHECK(exact.horizons[0]->mae == 0.0);
  CHECK(exact.horizons[0]->rmse == 0.0);
  CHECK(*exact.horizons[0]->mape == 0.0);

  const MetricsReport r = one_step({3, 3}, {2, 4}, {1, 1});
  REQUIRE(r.horizons[0]);
  CHECK(r.horizons[0]->mae == 1.0);
  CHECK(r.horizons[0]->rmse == 1.0);
  CHECK(*r.horizons[0]->mape == 37.5);
  CHECK(r.horizons[0]->count == 2);
}

TEST_CASE("MAPE skips zero truth and absent slices stay absent") {
  const MetricsReport r = one_step({3, 1}, {2, 0}, {1, 1});
  CHECK(r.horizons[0]->mae == 1.0);
  CHECK(*r.horizons[0]->mape == 50.0);
  CHECK(r.horizons[0]->mape_count == 1);

  const MetricsReport zeros = one_step({1}, {0}, {1});
  CHECK_FALSE(zeros.horizons[0]->mape.has_value());

  const std::vector<Tensor> p{Tensor::column({1.0}), Tensor::column({5.0})};
  const std::vector<Tensor> y{Tensor::column({2.0}), Tensor::column({1.0})};
  const std::vector<Tensor> m{Tensor::column({0.0}), Tensor::column({1.0})};
  const MetricsReport gap = compute_metrics(p, y, m);
  CHECK_FALSE(gap.horizons[0].has_value());
  REQUIRE(gap.average);
  CHECK(gap.average->mae == 4.0);
}

TEST_CASE("the average is the mean of the per-step metrics") {
  const std::vector<Tensor> p{Tensor::column({1.0, 1.0}), Tensor::column({4.0, 0.0})};
  const std::vector<Tensor> y{Tensor::column({2.0, 1.0}), Tensor::column({1.0, 1.0})};
  const std::vector<Tensor> m{Tensor::column({1.0, 1.0}), Tensor::column({1.0, 1.0})};
  const MetricsReport r = compute_metrics(p, y, m);
  CHECK(r.horizons[0]->mae == 0.5);
  CHECK(r.horizons[1]->mae == 2.0);
  CHECK(r.average->mae == 1.25);
  CHECK(r.average->count == 4);
}

TEST_CASE("property: RMSE >= MAE, MAPE >= 0, reorder invariance") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    oracle::Gen gen(seed);
    const std::size_t rows = gen.index(1, 20), cols = gen.index(1, 5);
    Tensor p = gen.tensor(rows, cols, 50.0), y = gen.tensor(rows, cols, 50.0), m = Tensor::matrix(rows, cols);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = gen.coin(0.8) ? 1.0 : 0.0;
    const MetricsReport r = compute_metrics(std::vector<Tensor>{p}, std::vector<Tensor>{y}, std::vector<Tensor>{m});
    if (!r.horizons[0]) continue;
    CHECK(r.horizons[0]->rmse >= r.horizons[0]->mae);
    CHECK(*r.horizons[0]->mape >= 0.0);

    const auto perm = gen.permutation(rows);
    Tensor pp = p, yy = y, mm = m;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        pp(i, j) = p(perm[i], j);
        yy(i, j) = y(perm[i], j);
        mm(i, j) = m(perm[i], j);
      }
    const MetricsReport s = compute_metrics(std::vector<Tensor>{pp}, std::vector<Tensor>{yy}, std::vector<Tensor>{mm});
    CHECK(s.horizons[0]->mae == doctest::Approx(r.horizons[0]->mae).epsilon(1e-12));
    CHECK(s.horizons[0]->rmse == doctest::Approx(r.horizons[0]->rmse).epsilon(1e-12));
    CHECK(*s.horizons[0]->mape == doctest::Approx(*r.horizons[0]->mape).epsilon(1e-12));
  }
}

TEST_CASE("historical average of a constant series is the constant") {
  const SeriesTable t = table_of(Tensor::matrix(50, 3, 42.0));
  const std::vector<std::size_t> rows{0, 7, 49, 60, 1000};
  const Tensor out = historical_average(t, rows, 10);
  for (double v : out.values()) CHECK(v == 42.0);
}

TEST_CASE("historical average is a per-slot mean with a sensor fallback") {
  Tensor v = Tensor::matrix(6, 1);
  const double data[] = {1, 10, 3, 20, 0, 30};  // the 0 is missing
  for (std::size_t t = 0; t < 6; ++t) v(t, 0) = data[t];
  const SeriesTable t = table_of(v);
  const HistoricalAverage ha(t, 2);
  CHECK(ha.predict(0, 0) == 2.0);
  CHECK(ha.predict(1, 0) == 20.0);
  CHECK(ha.predict(7, 0) == 20.0);

  const HistoricalAverage sparse(t, 4);
  CHECK(sparse.predict(2, 0) == 3.0);
  // Slot 0 holds rows 0 and 4, and row 4 is missing.
  CHECK(sparse.predict(0, 0) == 1.0);
  const HistoricalAverage wide(t, 8);
  CHECK(wide.predict(6, 0) == doctest::Approx((1.0 + 10 + 3 + 20 + 30) / 5.0));
  CHECK_THROWS_AS(HistoricalAverage(t, 0), ConfigError);
}

TEST_CASE("historical average is exact on seasonal data") {
  const std::size_t season = 96;
  const SeriesTable full = synth_periodic(ring(4), 10 * season, season, 2);
  const Splits s = split_70_10_20(full);
  const HistoricalAverage ha(s.train, season);
  const WindowSet w = make_windows(s.test, compute_norm_stats(s.train), 12, 12);
  const HorizonData d = ha_forecast(ha, w);
  const MetricsReport r = compute_metrics(d.predictions, d.truth, d.mask);
  for (const auto& h : r.horizons) {
    REQUIRE(h);
    CHECK(h->mae < 1e-9);
  }
}

TEST_CASE("property: an HA forecast depends only on the target time") {
  SynthOptions o;
  o.steps = 600;
  o.seed = 8;
  const SeriesTable full = synth_generate(ring(3), o);
  const Splits s = split_70_10_20(full);
  const HistoricalAverage ha(s.train, 288);
  const WindowSet w = make_windows(s.test, compute_norm_stats(s.train), 6, 6);
  const HorizonData d = ha_forecast(ha, w);
  for (std::size_t k = 0; k + 1 < w.size(); ++k)
    for (std::size_t p = 1; p < 6; ++p)
      for (std::size_t i = 0; i < 3; ++i) CHECK(d.predictions[p](k, i) == d.predictions[p - 1](k + 1, i));
}

TEST_CASE("report formats") {
  const MetricsReport r = one_step({3, 3}, {2, 4}, {1, 1});
  const std::string csv = metrics_csv(r);
  CHECK(csv.find("1,mae,1") != std::string::npos);
  CHECK(csv.find("1,mape,37.5") != std::string::npos);
  CHECK(csv.find("avg,rmse,1") != std::string::npos);
  const std::string text = format_report(r, "title");
  CHECK(text.rfind("title\n", 0) == 0);
  CHECK(text.find("37.50") != std::string::npos);
}
