#include "garnn/attention.hpp"

namespace garnn {

Var attention_head(Var x, const NeighborSets& nb, const AttentionHeadParams& p) {
  const Tensor& xv = x.value();
  const Tensor& wv = p.w.value();
  require_matrix(xv, "attention_head");
  require_matrix(wv, "attention_head");
  if (xv.cols() != wv.cols()) throw DimensionError("attention_head: signal vs embedding", xv.shape(), wv.shape());
  const std::size_t f = wv.rows();
  if (p.v.value().rows() != 2 * f || p.v.value().cols() != 1)
    throw DimensionError("attention_head: embedding vs scoring vector", wv.shape(), p.v.shape());
  if (nb.size() != xv.rows()) throw DimensionError("attention_head: signal vs neighbour sets", xv.shape(), {nb.size()});

  // v^T [W x_i || W x_j] splits into a source part and a destination part.
  Var embedded = matmul_bt(x, p.w);  // N x F
  Var src = matmul(embedded, slice_rows(p.v, 0, f));
  Var dst = matmul(embedded, slice_rows(p.v, f, f));
  Var scores = leaky_relu(pairwise_sum(src, dst), p.slope);
  return masked_row_softmax(scores, nb);
}

Var multi_head_attention(Var x, const NeighborSets& nb, std::span<const AttentionHeadParams> heads) {
  if (heads.empty()) throw ContractError("multi_head_attention: at least one head is required");
  std::vector<Var> mats;
  mats.reserve(heads.size());
  for (const auto& h : heads) mats.push_back(attention_head(x, nb, h));
  return mean_of(mats);
}

AttentionMatrices directional_attention(Var x, const DirectedSupports& supports, const MultiHeadParams& p,
                                        std::size_t t) {
  AttentionMatrices m;
  m.a_out = multi_head_attention(x, supports.out, p.out_heads);
  m.a_in = multi_head_attention(x, supports.in, p.in_heads);
  m.out_support = &supports.out;
  m.in_support = &supports.in;
  m.t = t;
  return m;
}

}  // namespace garnn
