#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "garnn/data.hpp"
#include "oracles.hpp"

using namespace garnn;

namespace {

std::string temp_file(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / ("garnn_data_" + name);
  std::ofstream(path) << text;
  return path.string();
}

std::string load_error(const std::string& text) {
  try {
    load_series(temp_file("bad.csv", text));
  } catch (const IngestionError& e) {
    return e.what();
  }
  return "no error";
}

SeriesTable ramp(std::size_t rows, std::size_t sensors = 2) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < sensors; ++i) ids.push_back("s" + std::to_string(i));
  std::vector<std::int64_t> stamps;
  Tensor v = Tensor::matrix(rows, sensors);
  for (std::size_t t = 0; t < rows; ++t) {
    stamps.push_back(1330560000 + 300 * static_cast<std::int64_t>(t));
    for (std::size_t i = 0; i < sensors; ++i) v(t, i) = 10.0 + static_cast<double>(t) + 0.5 * static_cast<double>(i);
  }
  return make_table(ids, stamps, v);
}

SensorGraph ring(std::size_t n) { return build_graph(ring_distances(n), 2000.0, synth_sensor_ids(n)); }

}  // namespace

TEST_CASE("load a small series") {
  const SeriesTable t = load_series(temp_file(
      "ok.csv", "timestamp,a,b\n2012-03-01T00:00:00,60.5,0\n2012-03-01 00:05:00,61,62\n2012-03-01T00:10:00,63,64.25\n"));
  CHECK(t.rows() == 3);
  CHECK(t.sensors() == 2);
  CHECK(t.sensor_ids == std::vector<std::string>{"a", "b"});
  CHECK(t.values(0, 0) == 60.5);
  CHECK(t.values(2, 1) == 64.25);
  CHECK_FALSE(t.observed(0, 1));
  CHECK(t.observed(0, 0));
  CHECK(t.period_seconds() == 300);
  CHECK(t.epoch_seconds[0] == 1330560000);
}

TEST_CASE("series errors name the line") {
  CHECK(load_error("timestamp,a\n2012-03-01T00:00:00,1\n2012-03-01T00:05:00,1,2\n").find(":3:") != std::string::npos);
  CHECK(load_error("timestamp,a\n2012-03-01T00:05:00,1\n2012-03-01T00:00:00,1\n").find(":3:") != std::string::npos);
  CHECK(load_error("timestamp,a\n2012-03-01T00:00:00,1\n2012-03-01T00:05:00,1\n2012-03-01T00:15:00,1\n")
            .find(":4:") != std::string::npos);
  CHECK(load_error("timestamp,a\nyesterday,1\n").find(":2:") != std::string::npos);
  CHECK(load_error("timestamp,a\n2012-03-01T00:00:00,fast\n").find(":2:") != std::string::npos);
  CHECK(load_error("timestamp\n").find(":1:") != std::string::npos);
}

TEST_CASE("series file round trip") {
  const SeriesTable t = ramp(5, 3);
  const std::string path = temp_file("round.csv", "");
  write_series(path, t);
  const SeriesTable back = load_series(path);
  CHECK(back.sensor_ids == t.sensor_ids);
  CHECK(back.epoch_seconds == t.epoch_seconds);
  CHECK(back.values == t.values);
}

TEST_CASE("timestamps") {
  CHECK(parse_timestamp("1970-01-01T00:00:00") == 0);
  CHECK(parse_timestamp("2012-03-01T00:05:00") == 1330560300);
  CHECK(format_timestamp(1330560300) == "2012-03-01T00:05:00");
  CHECK(time_of_day(1330560000 + 6 * 3600) == 0.25);
  CHECK_THROWS_AS(parse_timestamp("2012-13-01T00:00:00"), IngestionError);
}

TEST_CASE("chronological splits") {
  const Splits a = split_70_10_20(ramp(100));
  CHECK(a.train.rows() == 70);
  CHECK(a.val.rows() == 10);
  CHECK(a.test.rows() == 20);
  const Splits b = split_70_10_20(ramp(101));
  CHECK(b.train.rows() == 70);
  CHECK(b.val.rows() == 10);
  CHECK(b.test.rows() == 21);
  CHECK(b.val.first_row == 70);
  CHECK(b.test.first_row == 80);
  CHECK(b.val.values(0, 0) == ramp(101).values(70, 0));
  CHECK_THROWS_AS(split_70_10_20(ramp(100), 11), ConfigError);
}

TEST_CASE("property: splits partition the table in order") {
  for (std::size_t t = 1; t < 300; t += 7) {
    const SeriesTable table = ramp(t, 1);
    const Splits s = split_70_10_20(table);
    CHECK(s.train.rows() + s.val.rows() + s.test.rows() == t);
    std::size_t row = 0;
    for (const SeriesTable* part : {&s.train, &s.val, &s.test}) {
      CHECK(part->first_row == row);
      for (std::size_t r = 0; r < part->rows(); ++r, ++row) CHECK(part->epoch_seconds[r] == table.epoch_seconds[row]);
    }
  }
}

TEST_CASE("window counts") {
  const NormStats norm{0.0, 1.0};
  CHECK(make_windows(ramp(24), norm, 12, 12).size() == 1);
  CHECK(make_windows(ramp(25), norm, 12, 12).size() == 2);
  CHECK(make_windows(ramp(23), norm, 12, 12).size() == 0);
  CHECK(make_windows(ramp(5), norm, 12, 12).empty());
}

TEST_CASE("window contents") {
  const SeriesTable t = ramp(10);
  const NormStats norm{10.0, 2.0};
  const WindowSet w = make_windows(t, norm, 3, 2);
  REQUIRE(w.size() == 6);
  const ForecastInstance inst = w[2];
  REQUIRE(inst.inputs.size() == 3);
  REQUIRE(inst.targets.size() == 2);
  CHECK(inst.inputs[0].shape() == Shape{2, kInputChannels});
  CHECK(inst.inputs[0](0, 0) == norm.normalize(t.values(2, 0)));
  CHECK(inst.inputs[0](1, 1) == time_of_day(t.epoch_seconds[2]));
  CHECK(inst.targets[0](1, 0) == norm.normalize(t.values(5, 1)));
  CHECK(inst.targets_raw[1](0, 0) == t.values(6, 0));
  CHECK(inst.known_future[1](0, 0) == time_of_day(t.epoch_seconds[6]));
  CHECK(inst.first_target_row == 5);
}

TEST_CASE("missing readings are masked and read as zero speed") {
  SeriesTable t = ramp(6, 1);
  t.values(1, 0) = 0.0;
  t.values(4, 0) = 0.0;
  t = make_table(t.sensor_ids, t.epoch_seconds, t.values);
  const WindowSet w = make_windows(t, {1.0, 1.0}, 2, 3);
  const ForecastInstance inst = w[0];
  CHECK(inst.target_mask[2](0, 0) == 0.0);
  CHECK(inst.target_mask[1](0, 0) == 1.0);
  CHECK(w[1].inputs[0](0, 0) == NormStats{1.0, 1.0}.normalize(0.0));
  CHECK_FALSE(t.observed(1, 0));
}

TEST_CASE("property: windows of a split never read past it") {
  for (std::size_t t = 40; t < 200; t += 13) {
    const Splits s = split_70_10_20(ramp(t, 1));
    for (const SeriesTable* part : {&s.train, &s.val, &s.test}) {
      const WindowSet w = make_windows(*part, {0.0, 1.0}, 3, 4);
      const std::size_t expected = part->rows() >= 7 ? part->rows() - 6 : 0;
      CHECK(w.size() == expected);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double last = w[i].targets_raw.back()(0, 0);
        CHECK(last <= part->values(part->rows() - 1, 0));
        CHECK(w[i].inputs[0](0, 0) >= part->values(0, 0));
      }
    }
  }
}

TEST_CASE("normalisation") {
  const SeriesTable t = ramp(4, 1);  // 10, 11, 12, 13
  const NormStats s = compute_norm_stats(t);
  CHECK(s.mean == 11.5);
  CHECK(s.std == doctest::Approx(std::sqrt(1.25)).epsilon(1e-14));

  SeriesTable holes = ramp(4, 1);
  holes.values(0, 0) = 0.0;
  const NormStats h = compute_norm_stats(make_table(holes.sensor_ids, holes.epoch_seconds, holes.values));
  CHECK(h.mean == 12.0);

  SeriesTable flat = ramp(3, 1);
  flat.values.fill(7.0);
  CHECK(compute_norm_stats(flat).std > 0.0);

  oracle::Gen gen(0);
  for (int k = 0; k < 1000; ++k) {
    const NormStats r{gen.uniform(-100, 100), gen.uniform(0.1, 50)};
    const double x = gen.uniform(-10, 10);
    CHECK(std::abs(r.normalize(r.denormalize(x)) - x) < 1e-12);
  }
}

TEST_CASE("synthetic series are deterministic per seed") {
  const SensorGraph g = ring(5);
  SynthOptions o;
  o.steps = 300;
  o.seed = 9;
  o.regime_period = 50;
  const SeriesTable a = synth_generate(g, o), b = synth_generate(g, o);
  CHECK(a.values == b.values);
  CHECK(a.epoch_seconds == b.epoch_seconds);
  o.seed = 10;
  CHECK_FALSE(synth_generate(g, o).values == a.values);
}

TEST_CASE("noise-free constant drive stays at the fixed point") {
  SynthOptions o;
  o.steps = 500;
  o.noise = 0.0;
  o.amplitude = 0.0;
  const SeriesTable t = synth_generate(ring(4), o);
  for (double v : t.values.values()) CHECK(std::abs(v - o.base) < 1e-9);
}

TEST_CASE("property: synthetic values stay within the contraction bound") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthOptions o;
    o.steps = 10000;
    o.seed = seed;
    o.noise = 0.5;
    o.regime_period = 97;
    const SeriesTable t = synth_generate(ring(6), o);
    // The drive lies in [base - amp, base + amp] and A_t is stochastic, so
    // the noise-free part stays in that band; six-sigma noise accumulates at
    // most 6 noise / (1 - rho) on top.
    const double slack = 6.0 * o.noise / (1.0 - o.rho);
    for (double v : t.values.values()) {
      CHECK(v <= o.base + o.amplitude + slack);
      CHECK(v >= o.base - o.amplitude - slack);
    }
  }
}

TEST_CASE("periodic series repeat every season") {
  const SeriesTable t = synth_periodic(ring(3), 3 * 2016, 2016, 4);
  for (std::size_t r = 0; r + 2016 < t.rows(); r += 37)
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(t.values(r, i) - t.values(r + 2016, i)) < 1e-9);
}
