// Per-timestamp directional attention matrices.
//
// For vertex i and neighbour j in NB(i) one head scores
//   e_ij = LeakyReLU(v^T [W x_i || W x_j])
// and normalises the scores with a softmax over NB(i). Heads are averaged.
// The out matrix uses the graph's neighbour sets; the in matrix uses those
// of the transposed graph with its own heads.

#pragma once

#include <span>
#include <vector>

#include "garnn/autodiff.hpp"
#include "garnn/graph.hpp"

namespace garnn {

inline constexpr double kAttentionSlope = 0.2;

struct AttentionHeadParams {
  Var w;  // F x K embedding
  Var v;  // 2F x 1 scoring vector
  double slope = kAttentionSlope;
};

struct MultiHeadParams {
  std::vector<AttentionHeadParams> out_heads;
  std::vector<AttentionHeadParams> in_heads;
};

/// A_t^out and A_t^in with the supports they are defined on. The supports
/// are borrowed from a DirectedSupports that must outlive this value.
struct AttentionMatrices {
  Var a_out;
  Var a_in;
  const NeighborSets* out_support = nullptr;
  const NeighborSets* in_support = nullptr;
  std::size_t t = 0;
};

Var attention_head(Var x, const NeighborSets& nb, const AttentionHeadParams& p);

/// Elementwise mean of the heads' matrices. Throws ContractError with no heads.
Var multi_head_attention(Var x, const NeighborSets& nb, std::span<const AttentionHeadParams> heads);

AttentionMatrices directional_attention(Var x, const DirectedSupports& supports, const MultiHeadParams& p,
                                        std::size_t t = 0);

}  // namespace garnn
