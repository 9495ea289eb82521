#include <doctest.h>

#include <chrono>
#include <cmath>

#include "garnn/attention.hpp"
#include "garnn/gradcheck.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace garnn;
using testing::HeadData;

namespace {

AttentionHeadParams bind(Tape& t, const HeadData& h) { return {t.constant(h.w), t.constant(h.v)}; }

oracle::Mat oracle_head(const oracle::Mat& x, const HeadData& h, const oracle::Mat& adj) {
  return oracle::attention(x, oracle::to_mat(h.w), testing::column_values(h.v), adj, kAttentionSlope);
}

}  // namespace

TEST_CASE("a single vertex attends only to itself") {
  Tape t;
  const SensorGraph g = testing::graph_of(oracle::zeros(1, 1));
  oracle::Gen gen(0);
  const Var a = attention_head(t.constant(gen.tensor(1, 3)), out_neighbor_sets(g), bind(t, testing::random_head(gen, 4, 3)));
  CHECK(a.value()(0, 0) == 1.0);
}

TEST_CASE("zero embedding gives uniform rows over the neighbour set") {
  oracle::Gen gen(1);
  const oracle::Mat adj = gen.adjacency(5, 0.5);
  const NeighborSets nb = out_neighbor_sets(testing::graph_of(adj));
  Tape t;
  const HeadData h{Tensor::matrix(3, 2), gen.tensor(6, 1)};
  const Tensor a = attention_head(t.constant(gen.tensor(5, 2)), nb, bind(t, h)).value();
  for (std::size_t i = 0; i < 5; ++i) {
    const double expected = 1.0 / static_cast<double>(nb.rows[i].size());
    for (std::size_t j = 0; j < 5; ++j) CHECK(a(i, j) == doctest::Approx(nb.contains(i, j) ? expected : 0.0));
  }
}

namespace {

const std::vector<DistanceRecord> kPath{{"a", "b", 1.0}, {"b", "c", 1.0}};
const Tensor kPathSignal = Tensor::column({1.0, 2.0, 3.0});

}  // namespace

TEST_CASE("path example a -> b -> c") {
  // K = F = 1, W = [1], v = [1, 1]: e_aa = 2, e_ab = 3, so row a = [e^2, e^3] / (e^2 + e^3).
  const NeighborSets nb = out_neighbor_sets(build_graph(kPath, 10.0));
  Tape t;
  const HeadData h{Tensor::from_rows({{1.0}}), Tensor::column({1.0, 1.0})};
  const Tensor a = attention_head(t.constant(kPathSignal), nb, bind(t, h)).value();
  CHECK(a(0, 0) == doctest::Approx(0.2689414213699951).epsilon(1e-14));
  CHECK(a(0, 1) == doctest::Approx(0.7310585786300049).epsilon(1e-14));
  CHECK(a(0, 2) == 0.0);
  CHECK(a(2, 2) == 1.0);
}

TEST_CASE("negative scores use the leaky slope") {
  // v = [-1, -1]: e_aa = -0.4, e_ab = -0.6.
  const NeighborSets nb = out_neighbor_sets(build_graph(kPath, 10.0));
  Tape t;
  const HeadData h{Tensor::from_rows({{1.0}}), Tensor::column({-1.0, -1.0})};
  const Tensor a = attention_head(t.constant(kPathSignal), nb, bind(t, h)).value();
  CHECK(a(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-0.2))).epsilon(1e-14));
}

TEST_CASE("multi-head combinations on the path") {
  const NeighborSets nb = out_neighbor_sets(build_graph(kPath, 10.0));
  oracle::Mat adj = oracle::zeros(3, 3);
  adj[0][1] = adj[1][2] = 1.0;
  const oracle::Mat x = oracle::to_mat(kPathSignal);
  const HeadData h1{Tensor::from_rows({{1.0}}), Tensor::column({1.0, 1.0})};
  const HeadData h2{Tensor::from_rows({{1.0}}), Tensor::column({-0.5, 2.0})};
  Tape t;
  const Var xs = t.constant(kPathSignal);
  const Tensor single = attention_head(xs, nb, bind(t, h1)).value();
  const std::vector<AttentionHeadParams> one{bind(t, h1)}, same{bind(t, h1), bind(t, h1)}, two{bind(t, h1), bind(t, h2)};
  CHECK(max_abs_diff(multi_head_attention(xs, nb, one).value(), single) == 0.0);
  CHECK(max_abs_diff(multi_head_attention(xs, nb, same).value(), single) < 1e-15);
  const oracle::Mat o1 = oracle_head(x, h1, adj), o2 = oracle_head(x, h2, adj);
  oracle::Mat mean = oracle::zeros(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) mean[i][j] = 0.5 * (o1[i][j] + o2[i][j]);
  CHECK(testing::max_abs_diff(mean, multi_head_attention(xs, nb, two).value()) < 1e-14);
}

TEST_CASE("multi-head output is the mean of the single heads") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    oracle::Gen gen(seed);
    const std::size_t n = gen.index(2, 7), k = gen.index(1, 3), f = gen.index(1, 4);
    const oracle::Mat adj = gen.adjacency(n, 0.4);
    const oracle::Mat x = gen.mat(n, k);
    const NeighborSets nb = out_neighbor_sets(testing::graph_of(adj));
    const HeadData h1 = testing::random_head(gen, f, k), h2 = testing::random_head(gen, f, k);
    Tape t;
    const std::vector<AttentionHeadParams> heads{bind(t, h1), bind(t, h2)};
    const Tensor a = multi_head_attention(t.constant(oracle::to_tensor(x)), nb, heads).value();
    const oracle::Mat o1 = oracle_head(x, h1, adj), o2 = oracle_head(x, h2, adj);
    oracle::Mat mean = oracle::zeros(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) mean[i][j] = 0.5 * (o1[i][j] + o2[i][j]);
    CHECK(testing::max_abs_diff(mean, a) < 1e-12);
  }
  Tape t;
  CHECK_THROWS_AS(multi_head_attention(t.constant(Tensor::matrix(1, 1)), RowSupport::dense(1), {}), ContractError);
}

TEST_CASE("directional attention on special graphs") {
  oracle::Gen gen(7);
  const std::size_t n = 5;
  const HeadData h = testing::random_head(gen, 3, 2);
  const Tensor x = gen.tensor(n, 2);

  SUBCASE("symmetric graph with shared heads gives equal directions") {
    oracle::Mat adj = gen.adjacency(n, 0.5);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) adj[j][i] = adj[i][j];
    const DirectedSupports s = DirectedSupports::of(testing::graph_of(adj));
    Tape t;
    MultiHeadParams p{{bind(t, h)}, {bind(t, h)}};
    const AttentionMatrices m = directional_attention(t.constant(x), s, p);
    CHECK(max_abs_diff(m.a_out.value(), m.a_in.value()) == 0.0);
  }
  SUBCASE("edgeless graph gives identities") {
    const DirectedSupports s = DirectedSupports::of(testing::graph_of(oracle::zeros(n, n)));
    Tape t;
    MultiHeadParams p{{bind(t, h)}, {bind(t, testing::random_head(gen, 3, 2))}};
    const AttentionMatrices m = directional_attention(t.constant(x), s, p);
    CHECK(max_abs_diff(m.a_out.value(), Tensor::identity(n)) == 0.0);
    CHECK(max_abs_diff(m.a_in.value(), Tensor::identity(n)) == 0.0);
  }
  SUBCASE("one-way edge: out row spreads, in row stays on itself") {
    oracle::Mat adj = oracle::zeros(2, 2);
    adj[0][1] = 1.0;
    const DirectedSupports s = DirectedSupports::of(testing::graph_of(adj));
    Tape t;
    MultiHeadParams p{{bind(t, h)}, {bind(t, h)}};
    const AttentionMatrices m = directional_attention(t.constant(gen.tensor(2, 2)), s, p);
    CHECK(m.a_out.value()(0, 1) > 0.0);
    CHECK(m.a_out.value()(1, 1) == 1.0);
    CHECK(m.a_in.value()(0, 0) == 1.0);
    CHECK(m.a_in.value()(1, 0) > 0.0);
  }
}

TEST_CASE("property: rows are stochastic, zero off support and match the oracle") {
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    oracle::Gen gen(100 + seed);
    const std::size_t n = gen.index(1, 12), k = gen.index(1, 4), f = gen.index(1, 8);
    const oracle::Mat adj = gen.adjacency(n, gen.uniform(0.0, 0.6));
    const oracle::Mat x = gen.mat(n, k, 3.0);
    const HeadData h = testing::random_head(gen, f, k, 2.0);
    const NeighborSets nb = out_neighbor_sets(testing::graph_of(adj));
    Tape t;
    const Tensor a = attention_head(t.constant(oracle::to_tensor(x)), nb, bind(t, h)).value();
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(a(i, j) >= 0.0);
        if (!nb.contains(i, j)) CHECK(a(i, j) == 0.0);
        row += a(i, j);
      }
      CHECK(std::abs(row - 1.0) < 1e-9);
    }
    CHECK(testing::max_abs_diff(oracle_head(x, h, adj), a) < 1e-12);
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(30));
}

TEST_CASE("property: relabelling vertices permutes the attention matrix") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    oracle::Gen gen(500 + seed);
    const std::size_t n = gen.index(2, 8), k = 2, f = 3;
    const oracle::Mat adj = gen.adjacency(n, 0.4);
    const oracle::Mat x = gen.mat(n, k);
    const HeadData h = testing::random_head(gen, f, k);
    const auto perm = gen.permutation(n);  // new index i holds old vertex perm[i]
    oracle::Mat padj = oracle::zeros(n, n), px = oracle::zeros(n, k);
    for (std::size_t i = 0; i < n; ++i) {
      px[i] = x[perm[i]];
      for (std::size_t j = 0; j < n; ++j) padj[i][j] = adj[perm[i]][perm[j]];
    }
    const NeighborSets nb = out_neighbor_sets(testing::graph_of(adj));
    const NeighborSets pnb = out_neighbor_sets(testing::graph_of(padj));
    Tape t;
    const Tensor a = attention_head(t.constant(oracle::to_tensor(x)), nb, bind(t, h)).value();
    const Tensor pa = attention_head(t.constant(oracle::to_tensor(px)), pnb, bind(t, h)).value();
    double diff = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) diff = std::max(diff, std::abs(pa(i, j) - a(perm[i], perm[j])));
    CHECK(diff < 1e-12);
  }
}

TEST_CASE("property: attention gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    oracle::Gen gen(900 + seed);
    const std::size_t n = gen.index(2, 6), k = gen.index(1, 3), f = gen.index(1, 3);
    const NeighborSets nb = out_neighbor_sets(testing::graph_of(gen.adjacency(n, 0.5)));
    const Tensor weights = gen.tensor(n, n);
    ScalarFunction fn = [&](Tape& t, std::span<const Var> p) {
      const std::vector<AttentionHeadParams> heads{{p[1], p[2]}, {p[3], p[4]}};
      return sum(hadamard(multi_head_attention(p[0], nb, heads), t.constant(weights)));
    };
    const GradCheckResult r = finite_difference_check(
        fn, {gen.tensor(n, k), gen.tensor(f, k), gen.tensor(2 * f, 1), gen.tensor(f, k), gen.tensor(2 * f, 1)});
    CHECK_MESSAGE(r.max_rel_error < 1e-4, "seed " << seed);
  }
}
