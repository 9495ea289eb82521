#include "garnn/cell.hpp"

namespace garnn {

Var ga_gru_step(Var x, Var h_prev, const AttentionMatrices& att, const GaGruLayerParams& p) {
  const std::size_t units = p.units();
  const Tensor& hv = h_prev.value();
  if (hv.rank() != 2 || hv.cols() != units) throw DimensionError("ga_gru_step: state vs units", hv.shape(), {units});
  if (x.value().rank() != 2 || x.value().cols() + units != p.reset.k_sig)
    throw DimensionError("ga_gru_step: input vs filter width", x.shape(), p.reset.theta.shape());
  if (p.update.k_sig != p.reset.k_sig || p.candidate.k_sig != p.reset.k_sig || p.update.filters() != units ||
      p.candidate.filters() != units)
    throw DimensionError("ga_gru_step: gate banks disagree", p.reset.theta.shape(), p.candidate.theta.shape());

  const std::size_t hops = p.reset.hops;
  // The reset and update gates read the same diffusion features.
  Var gate_features = diffusion_features(concat_cols({x, h_prev}), att, hops);
  Var r = sigmoid(add_row(apply_bank(gate_features, p.reset), p.b_reset));
  Var u = sigmoid(add_row(apply_bank(gate_features, p.update), p.b_update));
  Var cand_features = diffusion_features(concat_cols({x, hadamard(r, h_prev)}), att, hops);
  Var c = tanh(add_row(apply_bank(cand_features, p.candidate), p.b_candidate));
  // u . h + (1 - u) . c  ==  c + u . (h - c)
  return add(c, hadamard(u, sub(h_prev, c)));
}

std::vector<Var> stacked_step(Var x, std::span<const Var> states, const AttentionMatrices& att,
                              std::span<const GaGruLayerParams> layers) {
  if (states.size() != layers.size())
    throw ContractError("stacked_step: " + std::to_string(states.size()) + " states for " +
                        std::to_string(layers.size()) + " layers");
  std::vector<Var> next;
  next.reserve(layers.size());
  Var input = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (input.value().cols() != layers[l].input_width())
      throw ContractError("stacked_step: layer " + std::to_string(l) + " expects input width " +
                          std::to_string(layers[l].input_width()) + ", got " + std::to_string(input.value().cols()));
    input = ga_gru_step(input, states[l], att, layers[l]);
    next.push_back(input);
  }
  return next;
}

}  // namespace garnn
