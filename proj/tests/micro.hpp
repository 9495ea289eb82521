// A tiny end-to-end forecasting problem and a finite-difference check of the
// full encoder-decoder gradient under teacher forcing.

#pragma once

#include <vector>

#include "garnn/gradcheck.hpp"
#include "garnn/seq2seq.hpp"
#include "garnn/training.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace testing {

struct MicroProblem {
  garnn::GaRnnModel model;
  garnn::DirectedSupports supports;
  std::vector<garnn::Tensor> inputs;  // L x (N x K)
  std::vector<garnn::Tensor> targets;  // P x (N x 1)
  std::vector<garnn::Tensor> known;    // P x (N x 1)
  std::vector<garnn::Tensor> mask;     // P x (N x 1)
};

struct MicroShape {
  std::size_t nodes = 4, lookback = 3, horizon = 2, layers = 2, units = 3, heads = 2, embed = 2, hops = 2;
};

inline MicroProblem make_micro(std::uint64_t seed, const MicroShape& s = {}) {
  oracle::Gen gen(seed);
  garnn::ModelConfig c;
  c.nodes = s.nodes;
  c.input_dim = 2;
  c.output_dim = 1;
  c.heads = s.heads;
  c.embed = s.embed;
  c.layers = s.layers;
  c.units = s.units;
  c.hops = s.hops;
  MicroProblem m{garnn::init_model(c, seed), garnn::DirectedSupports::of(graph_of(gen.adjacency(s.nodes, 0.5))), {}, {}, {}, {}};
  for (std::size_t t = 0; t < s.lookback; ++t) m.inputs.push_back(gen.tensor(s.nodes, 2));
  for (std::size_t t = 0; t < s.horizon; ++t) {
    m.targets.push_back(gen.tensor(s.nodes, 1));
    m.known.push_back(gen.tensor(s.nodes, 1));
    m.mask.push_back(garnn::Tensor::matrix(s.nodes, 1, 1.0));
  }
  return m;
}

/// Teacher-forced MAE of the problem's current parameters.
inline garnn::Var micro_loss(garnn::Tape& tape, const MicroProblem& m, bool trainable) {
  const garnn::Seq2SeqParams p = garnn::bind_model(tape, m.model, trainable);
  const auto states = garnn::encode(tape, m.inputs, m.supports, p);
  garnn::DecodeRequest req;
  req.horizon = m.targets.size();
  req.targets = m.targets;
  req.known_future = m.known;
  req.use_truth_prob = 1.0;
  const auto out = garnn::decode(tape, states, m.supports, p, req);
  return garnn::mae_loss(out.predictions, m.targets, m.mask);
}

/// Compares the taped gradient of every parameter with central differences.
inline garnn::GradCheckResult micro_gradcheck(MicroProblem& m, double step = 1e-6) {
  garnn::ParameterSet& params = m.model.params;
  std::vector<garnn::Tensor> analytic;
  {
    garnn::Tape tape;
    const garnn::Seq2SeqParams p = garnn::bind_model(tape, m.model, true);
    const auto states = garnn::encode(tape, m.inputs, m.supports, p);
    garnn::DecodeRequest req;
    req.horizon = m.targets.size();
    req.targets = m.targets;
    req.known_future = m.known;
    req.use_truth_prob = 1.0;
    const auto out = garnn::decode(tape, states, m.supports, p, req);
    tape.backward(garnn::mae_loss(out.predictions, m.targets, m.mask));
    analytic.resize(params.size());
    for (const auto& [index, leaf] : p.leaves) {
      const garnn::Tensor g = tape.gradient(leaf);
      if (analytic[index].size() == 0)
        analytic[index] = g;
      else
        for (std::size_t k = 0; k < g.size(); ++k) analytic[index][k] += g[k];
    }
  }
  auto loss = [&] {
    garnn::Tape tape;
    return micro_loss(tape, m, false).value().item();
  };
  garnn::GradCheckResult r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    garnn::Tensor& w = params.value(i);
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double saved = w[k];
      w[k] = saved + step;
      const double up = loss();
      w[k] = saved - step;
      const double down = loss();
      w[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = garnn::relative_error(analytic[i][k], numeric);
      ++r.coordinates;
      if (err >= r.max_rel_error) {
        r.max_rel_error = err;
        r.worst_param = i;
        r.worst_index = k;
        r.analytic = analytic[i][k];
        r.numeric = numeric;
      }
    }
  }
  return r;
}

}  // namespace testing
