// GA-GRU: a GRU whose weight products are diffusion convolutions over the
// current timestamp's attention matrices.
//
//   r  = sigmoid(Theta_r (*) [X || H] + b_r)
//   u  = sigmoid(Theta_u (*) [X || H] + b_u)
//   c  = tanh(Theta_c (*) [X || r . H] + b_c)
//   H' = u . H + (1 - u) . c

#pragma once

#include <span>
#include <vector>

#include "garnn/diffusion.hpp"

namespace garnn {

struct GaGruLayerParams {
  FilterBank reset;
  FilterBank update;
  FilterBank candidate;
  Var b_reset;  // 1 x U, broadcast over vertices
  Var b_update;
  Var b_candidate;

  std::size_t units() const { return reset.filters(); }
  std::size_t input_width() const { return reset.k_sig - units(); }
};

Var ga_gru_step(Var x, Var h_prev, const AttentionMatrices& att, const GaGruLayerParams& p);

/// One step through all layers; layer l > 0 consumes layer l-1's new state.
std::vector<Var> stacked_step(Var x, std::span<const Var> states, const AttentionMatrices& att,
                              std::span<const GaGruLayerParams> layers);

}  // namespace garnn
