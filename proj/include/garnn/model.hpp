// Learnable parameters of the GA-RNN encoder-decoder and their initialisation.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "garnn/tensor.hpp"

namespace garnn {

struct ModelConfig {
  std::size_t nodes = 0;       // N
  std::size_t input_dim = 2;   // K: speed + time of day
  std::size_t output_dim = 1;  // K_out: speed
  std::size_t heads = 2;       // C
  std::size_t embed = 16;      // F
  std::size_t layers = 2;
  std::size_t units = 64;      // U
  std::size_t hops = 2;        // H
  bool share_attention = false;
  bool stop_attention_gradient = false;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named tensors in a fixed order; the order is the checkpoint order.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& value(std::size_t i) { return values_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }
  std::vector<Tensor>& values() { return values_; }
  const std::vector<Tensor>& values() const { return values_; }
  std::size_t find(const std::string& name) const;
  std::size_t scalar_count() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

struct HeadSlots {
  std::size_t w = 0;
  std::size_t v = 0;
};

struct LayerSlots {
  std::size_t theta_reset = 0, theta_update = 0, theta_candidate = 0;
  std::size_t b_reset = 0, b_update = 0, b_candidate = 0;
  std::size_t input_width = 0;
};

struct AttentionSlots {
  std::vector<HeadSlots> out_heads;
  std::vector<HeadSlots> in_heads;
};

struct ModelLayout {
  AttentionSlots encoder_attention;
  AttentionSlots decoder_attention;
  std::vector<LayerSlots> encoder_layers;
  std::vector<LayerSlots> decoder_layers;
  std::size_t w_out = 0;
  std::size_t b_out = 0;
};

struct GaRnnModel {
  ModelConfig config;
  ParameterSet params;
  ModelLayout layout;
};

/// Builds the parameter set in canonical order. With a seed, values are drawn
/// from the initialisation scheme; the layout depends only on the config.
GaRnnModel init_model(const ModelConfig& config, std::uint64_t seed);

/// Recovers slot indices for a parameter set produced by init_model.
ModelLayout layout_of(const ModelConfig& config, const ParameterSet& params);

}  // namespace garnn
