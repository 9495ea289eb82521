#include "garnn/seq2seq.hpp"

#include <cmath>

namespace garnn {

namespace {

struct Binder {
  Tape& tape;
  const GaRnnModel& model;
  bool trainable;
  std::vector<std::pair<std::size_t, Var>>& leaves;

  Var operator()(std::size_t i) const {
    Var v = trainable ? tape.parameter(model.params.value(i)) : tape.constant_view(model.params.value(i));
    leaves.emplace_back(i, v);
    return v;
  }
};

std::vector<AttentionHeadParams> bind_heads(const Binder& leaf, const std::vector<HeadSlots>& slots) {
  std::vector<AttentionHeadParams> heads;
  for (const auto& s : slots) {
    heads.push_back({leaf(s.w), leaf(s.v), kAttentionSlope});
  }
  return heads;
}

std::vector<GaGruLayerParams> bind_layers(const Binder& leaf, const std::vector<LayerSlots>& slots) {
  const std::size_t hops = leaf.model.config.hops;
  std::vector<GaGruLayerParams> layers;
  for (const auto& s : slots) {
    const std::size_t k_sig = s.input_width + leaf.model.config.units;
    GaGruLayerParams p;
    p.reset = {leaf(s.theta_reset), k_sig, hops};
    p.update = {leaf(s.theta_update), k_sig, hops};
    p.candidate = {leaf(s.theta_candidate), k_sig, hops};
    p.b_reset = leaf(s.b_reset);
    p.b_update = leaf(s.b_update);
    p.b_candidate = leaf(s.b_candidate);
    layers.push_back(p);
  }
  return layers;
}

AttentionMatrices attend(Var x, const DirectedSupports& supports, const MultiHeadParams& heads, bool stop,
                         std::size_t t) {
  AttentionMatrices att = directional_attention(x, supports, heads, t);
  if (stop) {
    att.a_out = stop_gradient(att.a_out);
    att.a_in = stop_gradient(att.a_in);
  }
  return att;
}

std::vector<Var> zero_states(Tape& tape, std::size_t layers, std::size_t nodes, std::size_t units) {
  std::vector<Var> states;
  for (std::size_t l = 0; l < layers; ++l) states.push_back(tape.constant(Tensor::matrix(nodes, units)));
  return states;
}

}  // namespace

Seq2SeqParams bind_model(Tape& tape, const GaRnnModel& model, bool trainable) {
  const ModelLayout& lay = model.layout;
  Seq2SeqParams p;
  const Binder leaf{tape, model, trainable, p.leaves};
  p.encoder_attention = {bind_heads(leaf, lay.encoder_attention.out_heads),
                         bind_heads(leaf, lay.encoder_attention.in_heads)};
  p.decoder_attention = model.config.share_attention
                            ? p.encoder_attention
                            : MultiHeadParams{bind_heads(leaf, lay.decoder_attention.out_heads),
                                              bind_heads(leaf, lay.decoder_attention.in_heads)};
  p.encoder = bind_layers(leaf, lay.encoder_layers);
  p.decoder = bind_layers(leaf, lay.decoder_layers);
  p.w_out = leaf(lay.w_out);
  p.b_out = leaf(lay.b_out);
  p.stop_attention_gradient = model.config.stop_attention_gradient;
  p.units = model.config.units;
  return p;
}

double sampling_probability(std::uint64_t iteration, const SamplingSchedule& s) {
  if (!(s.tau > 0.0)) throw ContractError("sampling schedule: tau must be positive");
  return s.tau / (s.tau + std::exp(static_cast<double>(iteration) / s.tau));
}

std::vector<Var> encode(Tape& tape, std::span<const Tensor> inputs, const DirectedSupports& supports,
                        const Seq2SeqParams& p) {
  if (inputs.empty()) throw ContractError("encode: at least one input signal is required");
  const std::size_t nodes = inputs[0].rows();
  std::vector<Var> states = zero_states(tape, p.encoder.size(), nodes, p.units);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Var x = tape.constant_view(inputs[t]);
    AttentionMatrices att = attend(x, supports, p.encoder_attention, p.stop_attention_gradient, t);
    states = stacked_step(x, states, att, p.encoder);
  }
  return states;
}

DecodeResult decode(Tape& tape, std::span<const Var> init, const DirectedSupports& supports, const Seq2SeqParams& p,
                    const DecodeRequest& request) {
  const double prob = request.use_truth_prob;
  if (!(prob >= 0.0 && prob <= 1.0)) throw ContractError("decode: use_truth_prob must lie in [0, 1]");
  if (prob > 0.0 && request.targets.size() < request.horizon)
    throw ContractError("decode: ground-truth targets are required when use_truth_prob > 0");
  if (prob > 0.0 && prob < 1.0 && request.rng == nullptr)
    throw ContractError("decode: a random generator is required for scheduled sampling");
  if (init.size() != p.decoder.size()) throw ContractError("decode: initial state count does not match layers");

  const std::size_t nodes = init[0].value().rows();
  const std::size_t k_out = p.w_out.value().cols();
  const bool has_aux = p.decoder[0].input_width() > k_out;
  if (has_aux && request.known_future.size() < request.horizon)
    throw ContractError("decode: known future features are required for every step");

  DecodeResult result;
  std::vector<Var> states(init.begin(), init.end());
  Var speed = tape.constant(Tensor::matrix(nodes, k_out));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t s = 0; s < request.horizon; ++s) {
    if (s > 0) {
      bool truth = prob >= 1.0;
      if (prob > 0.0 && prob < 1.0) truth = unit(*request.rng) < prob;
      speed = truth ? tape.constant_view(request.targets[s - 1]) : result.predictions[s - 1];
      result.used_truth.push_back(truth);
    } else {
      result.used_truth.push_back(false);
    }
    Var x = has_aux ? concat_cols({speed, tape.constant_view(request.known_future[s])}) : speed;
    AttentionMatrices att = attend(x, supports, p.decoder_attention, p.stop_attention_gradient, s);
    states = stacked_step(x, states, att, p.decoder);
    result.predictions.push_back(add_row(matmul(states.back(), p.w_out), p.b_out));
  }
  return result;
}

}  // namespace garnn
