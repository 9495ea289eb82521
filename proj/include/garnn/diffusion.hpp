// Diffusion convolution driven by the dynamic attention matrices.
//
// For a signal S (N x K) and one filter theta (K x H x 2):
//   conv(S) = act( sum_k sum_h (theta[k,h,0] (A_out)^h + theta[k,h,1] (A_in)^h) S[:,k] )
// Matrix powers are never formed. The diffusion features
//   Z = [A_out S, A_out^2 S, ..., A_out^H S, A_in S, ..., A_in^H S]   (N x 2HK)
// are built by repeated sparse products over the attention supports, and a
// bank of Q filters is then one product Z * Theta with Theta of shape 2HK x Q.
// Row (d*H + h-1)*K + k of Theta holds theta[k,h,d] (d = 0 out, 1 in).

#pragma once

#include <span>

#include "garnn/attention.hpp"
#include "garnn/autodiff.hpp"

namespace garnn {

enum class Activation { identity, sigmoid, tanh };

Var apply_activation(Var x, Activation act);

/// One filter, K_sig x H x 2.
struct DiffusionFilter {
  Var theta;
};

/// Q filters stored column-wise as a (2 * H * K_sig) x Q matrix.
struct FilterBank {
  Var theta;
  std::size_t k_sig = 0;
  std::size_t hops = 0;

  std::size_t filters() const { return theta.value().cols(); }
};

std::size_t bank_row(std::size_t k, std::size_t hop, std::size_t direction, std::size_t k_sig, std::size_t hops);

/// Packs K x H x 2 filters into the bank layout.
Tensor bank_from_filters(std::span<const Tensor> filters);

Var diffusion_features(Var signal, const AttentionMatrices& att, std::size_t hops);

/// N x 1 output of a single filter.
Var diffusion_conv(Var signal, const AttentionMatrices& att, const DiffusionFilter& f,
                   Activation act = Activation::identity);

/// N x Q output; column q is the q-th filter.
Var diffusion_conv_bank(Var signal, const AttentionMatrices& att, const FilterBank& bank,
                        Activation act = Activation::identity);

/// Bank applied to precomputed features.
Var apply_bank(Var features, const FilterBank& bank);

}  // namespace garnn
