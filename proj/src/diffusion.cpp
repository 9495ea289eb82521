#include "garnn/diffusion.hpp"

#include <algorithm>

namespace garnn {

Var apply_activation(Var x, Activation act) {
  switch (act) {
    case Activation::identity:
      return x;
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::tanh:
      return tanh(x);
  }
  return x;
}

std::size_t bank_row(std::size_t k, std::size_t hop, std::size_t direction, std::size_t k_sig, std::size_t hops) {
  return (direction * hops + hop) * k_sig + k;
}

Tensor bank_from_filters(std::span<const Tensor> filters) {
  if (filters.empty()) throw ContractError("bank_from_filters: empty filter list");
  const Shape& s = filters[0].shape();
  if (s.size() != 3 || s[2] != 2) throw DimensionError("bank_from_filters: expected K x H x 2, got " + shape_string(s));
  const std::size_t k_sig = s[0], hops = s[1];
  Tensor bank = Tensor::matrix(2 * hops * k_sig, filters.size());
  for (std::size_t q = 0; q < filters.size(); ++q) {
    if (filters[q].shape() != s) throw DimensionError("bank_from_filters", s, filters[q].shape());
    for (std::size_t k = 0; k < k_sig; ++k)
      for (std::size_t h = 0; h < hops; ++h)
        for (std::size_t d = 0; d < 2; ++d) bank(bank_row(k, h, d, k_sig, hops), q) = filters[q][(k * hops + h) * 2 + d];
  }
  return bank;
}

namespace {

// out += A * x over the support; x and out are N x c row-major blocks with
// the given leading dimensions.
void sparse_apply(const Tensor& a, const RowSupport& sup, const double* x, std::size_t ldx, double* out,
                  std::size_t ldo, std::size_t c) {
  for (std::size_t i = 0; i < sup.size(); ++i) {
    double* orow = out + i * ldo;
    for (auto j : sup.rows[i]) {
      const double w = a(i, j);
      const double* xrow = x + j * ldx;
      for (std::size_t k = 0; k < c; ++k) orow[k] += w * xrow[k];
    }
  }
}

// out += A^T * g over the support.
void sparse_apply_transposed(const Tensor& a, const RowSupport& sup, const double* g, std::size_t ldg, double* out,
                             std::size_t ldo, std::size_t c) {
  for (std::size_t i = 0; i < sup.size(); ++i) {
    const double* grow = g + i * ldg;
    for (auto j : sup.rows[i]) {
      const double w = a(i, j);
      double* orow = out + j * ldo;
      for (std::size_t k = 0; k < c; ++k) orow[k] += w * grow[k];
    }
  }
}

}  // namespace

Var diffusion_features(Var signal, const AttentionMatrices& att, std::size_t hops) {
  if (hops == 0) throw ContractError("diffusion_features: at least one diffusion step is required");
  const Tensor& s = signal.value();
  require_matrix(s, "diffusion_features");
  const std::size_t n = s.rows(), k = s.cols();
  const Tensor& a_out = att.a_out.value();
  const Tensor& a_in = att.a_in.value();
  if (a_out.shape() != Shape{n, n}) throw DimensionError("diffusion_features: A_out vs signal", a_out.shape(), s.shape());
  if (a_in.shape() != Shape{n, n}) throw DimensionError("diffusion_features: A_in vs signal", a_in.shape(), s.shape());
  if (!att.out_support || !att.in_support || att.out_support->size() != n || att.in_support->size() != n)
    throw ContractError("diffusion_features: attention supports missing or sized wrongly");

  const std::size_t width = 2 * hops * k;
  Tensor z = Tensor::matrix(n, width);
  const RowSupport* supports[2] = {att.out_support, att.in_support};
  const Tensor* mats[2] = {&a_out, &a_in};
  for (std::size_t d = 0; d < 2; ++d) {
    const double* prev = s.data();
    std::size_t ld_prev = k;
    for (std::size_t h = 0; h < hops; ++h) {
      double* block = z.data() + (d * hops + h) * k;
      sparse_apply(*mats[d], *supports[d], prev, ld_prev, block, width, k);
      prev = block;
      ld_prev = width;
    }
  }

  Tape& tape = *signal.tape;
  const Var self{&tape, static_cast<std::uint32_t>(tape.size())};
  const Var mat_vars[2] = {att.a_out, att.a_in};
  return tape.record(
      std::move(z), {signal, att.a_out, att.a_in},
      [signal, self, mv0 = mat_vars[0], mv1 = mat_vars[1], sup0 = supports[0], sup1 = supports[1], hops, n, k,
       width](Tape& t, const Tensor& g) {
        const Tensor& zv = t.value(self);
        const Tensor& sv = t.value(signal);
        const Var mv[2] = {mv0, mv1};
        const RowSupport* sup[2] = {sup0, sup1};
        Tensor carry = Tensor::matrix(n, k);
        Tensor total = Tensor::matrix(n, k);
        for (std::size_t d = 0; d < 2; ++d) {
          const Tensor& a = t.value(mv[d]);
          const bool need_a = t.requires_grad(mv[d]);
          carry.fill(0.0);
          for (std::size_t h = hops; h-- > 0;) {
            // total = dL/d(block h) including what flows back from block h+1.
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t c = 0; c < k; ++c) total(i, c) = g(i, (d * hops + h) * k + c) + carry(i, c);
            const double* prev = h == 0 ? sv.data() : zv.data() + (d * hops + h - 1) * k;
            const std::size_t ld_prev = h == 0 ? k : width;
            if (need_a) {
              Tensor& ga = t.grad_buffer(mv[d]);
              for (std::size_t i = 0; i < n; ++i) {
                const double* trow = total.data() + i * k;
                for (auto j : sup[d]->rows[i]) {
                  const double* prow = prev + j * ld_prev;
                  double acc = 0.0;
                  for (std::size_t c = 0; c < k; ++c) acc += trow[c] * prow[c];
                  ga(i, j) += acc;
                }
              }
            }
            carry.fill(0.0);
            sparse_apply_transposed(a, *sup[d], total.data(), k, carry.data(), k, k);
          }
          if (t.requires_grad(signal)) t.accumulate(signal, carry);
        }
      });
}

Var apply_bank(Var features, const FilterBank& bank) {
  const Tensor& f = features.value();
  const Tensor& th = bank.theta.value();
  if (f.cols() != th.rows() || th.rows() != 2 * bank.hops * bank.k_sig)
    throw DimensionError("apply_bank: features vs filter bank", f.shape(), th.shape());
  return matmul(features, bank.theta);
}

Var diffusion_conv_bank(Var signal, const AttentionMatrices& att, const FilterBank& bank, Activation act) {
  if (signal.value().rank() != 2 || signal.value().cols() != bank.k_sig)
    throw DimensionError("diffusion_conv_bank: signal vs filter bank", signal.shape(), bank.theta.shape());
  return apply_activation(apply_bank(diffusion_features(signal, att, bank.hops), bank), act);
}

Var diffusion_conv(Var signal, const AttentionMatrices& att, const DiffusionFilter& f, Activation act) {
  const Shape& s = f.theta.shape();
  if (s.size() != 3 || s[2] != 2) throw DimensionError("diffusion_conv: expected K x H x 2 filter, got " + shape_string(s));
  const std::size_t k_sig = s[0], hops = s[1];
  std::vector<std::size_t> index(2 * hops * k_sig);
  for (std::size_t k = 0; k < k_sig; ++k)
    for (std::size_t h = 0; h < hops; ++h)
      for (std::size_t d = 0; d < 2; ++d) index[bank_row(k, h, d, k_sig, hops)] = (k * hops + h) * 2 + d;
  FilterBank bank{gather(f.theta, std::move(index), {2 * hops * k_sig, 1}), k_sig, hops};
  return diffusion_conv_bank(signal, att, bank, act);
}

}  // namespace garnn
