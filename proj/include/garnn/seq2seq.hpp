// Encoder-decoder over L input and P output graph signals.
//
// Each timestamp first builds A_out/A_in from that timestamp's network input,
// then advances every GA-GRU layer with those two matrices. The decoder starts
// from a GO signal (zero speed plus the known auxiliary features of the first
// target time) and feeds either the ground truth or its own previous
// prediction back, per scheduled sampling.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "garnn/attention.hpp"
#include "garnn/cell.hpp"
#include "garnn/model.hpp"

namespace garnn {

struct Seq2SeqParams {
  std::vector<GaGruLayerParams> encoder;
  std::vector<GaGruLayerParams> decoder;
  MultiHeadParams encoder_attention;
  MultiHeadParams decoder_attention;
  Var w_out;  // U x K_out
  Var b_out;  // 1 x K_out
  bool stop_attention_gradient = false;
  std::size_t units = 0;
  std::vector<std::pair<std::size_t, Var>> leaves;  // parameter index, tape leaf
};

/// Binds every parameter as a tape leaf. With trainable = false the leaves
/// are constants and no backward closures are recorded.
Seq2SeqParams bind_model(Tape& tape, const GaRnnModel& model, bool trainable = true);

struct SamplingSchedule {
  double tau = 2000.0;
};

/// Probability of feeding ground truth at a training iteration:
/// tau / (tau + exp(iteration / tau)).
double sampling_probability(std::uint64_t iteration, const SamplingSchedule& s);

/// Runs the encoder; returns the per-layer final states.
std::vector<Var> encode(Tape& tape, std::span<const Tensor> inputs, const DirectedSupports& supports,
                        const Seq2SeqParams& p);

struct DecodeRequest {
  std::size_t horizon = 0;                // P
  std::span<const Tensor> targets;        // P tensors N x K_out, optional
  std::span<const Tensor> known_future;   // P tensors N x (K - K_out)
  double use_truth_prob = 0.0;
  std::mt19937_64* rng = nullptr;         // required when 0 < use_truth_prob < 1
};

struct DecodeResult {
  std::vector<Var> predictions;  // P tensors N x K_out
  std::vector<bool> used_truth;  // per step; step 0 always reads GO
};

DecodeResult decode(Tape& tape, std::span<const Var> init, const DirectedSupports& supports, const Seq2SeqParams& p,
                    const DecodeRequest& request);

}  // namespace garnn
