#include "garnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "garnn/autodiff.hpp"

namespace garnn {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ContractError(std::string("model config: ") + name + " must be positive");
  };
  positive(nodes, "nodes");
  positive(input_dim, "input_dim");
  positive(output_dim, "output_dim");
  positive(heads, "heads");
  positive(embed, "embed");
  positive(layers, "layers");
  positive(units, "units");
  positive(hops, "hops");
  if (output_dim > input_dim) throw ContractError("model config: output_dim exceeds input_dim");
}

std::size_t ParameterSet::add(std::string name, Tensor value) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParameterSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  throw std::out_of_range("no parameter named '" + name + "'");
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  return a.names_ == b.names_ && a.values_ == b.values_;
}

namespace {

class Builder {
 public:
  Builder(ParameterSet& params, std::uint64_t seed, bool draw) : params_(params), rng_(seed), draw_(draw) {}

  std::size_t uniform(const std::string& name, Shape shape, double bound) {
    Tensor t(std::move(shape));
    if (draw_) {
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t.values()) v = dist(rng_);
    }
    return params_.add(name, std::move(t));
  }

  std::size_t constant(const std::string& name, Shape shape, double value) {
    return params_.add(name, Tensor(std::move(shape), value));
  }

 private:
  ParameterSet& params_;
  std::mt19937_64 rng_;
  bool draw_;
};

double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

AttentionSlots add_attention(Builder& b, const ModelConfig& c, const std::string& prefix) {
  AttentionSlots slots;
  for (const char* dir : {"out", "in"}) {
    auto& heads = std::string(dir) == "out" ? slots.out_heads : slots.in_heads;
    for (std::size_t h = 0; h < c.heads; ++h) {
      const std::string base = prefix + "/attention/" + dir + "/head" + std::to_string(h);
      HeadSlots s;
      s.w = b.uniform(base + "/W", {c.embed, c.input_dim}, glorot(c.input_dim, c.embed));
      s.v = b.uniform(base + "/v", {2 * c.embed, 1}, glorot(2 * c.embed, 1));
      heads.push_back(s);
    }
  }
  return slots;
}

std::vector<LayerSlots> add_layers(Builder& b, const ModelConfig& c, const std::string& prefix) {
  std::vector<LayerSlots> layers;
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string base = prefix + "/layer" + std::to_string(l);
    LayerSlots s;
    s.input_width = l == 0 ? c.input_dim : c.units;
    const std::size_t k_sig = s.input_width + c.units;
    const Shape bank{2 * c.hops * k_sig, c.units};
    const double bound = std::sqrt(3.0 / static_cast<double>(k_sig * c.hops * 2));
    s.theta_reset = b.uniform(base + "/theta_reset", bank, bound);
    s.theta_update = b.uniform(base + "/theta_update", bank, bound);
    s.theta_candidate = b.uniform(base + "/theta_candidate", bank, bound);
    s.b_reset = b.constant(base + "/b_reset", {1, c.units}, 1.0);
    s.b_update = b.constant(base + "/b_update", {1, c.units}, 1.0);
    s.b_candidate = b.constant(base + "/b_candidate", {1, c.units}, 0.0);
    layers.push_back(s);
  }
  return layers;
}

GaRnnModel build(const ModelConfig& config, std::uint64_t seed, bool draw) {
  config.validate();
  GaRnnModel m;
  m.config = config;
  Builder b(m.params, seed, draw);
  m.layout.encoder_attention = add_attention(b, config, "encoder");
  m.layout.decoder_attention =
      config.share_attention ? m.layout.encoder_attention : add_attention(b, config, "decoder");
  m.layout.encoder_layers = add_layers(b, config, "encoder");
  m.layout.decoder_layers = add_layers(b, config, "decoder");
  m.layout.w_out = b.uniform("output/W", {config.units, config.output_dim}, glorot(config.units, config.output_dim));
  m.layout.b_out = b.constant("output/b", {1, config.output_dim}, 0.0);
  return m;
}

}  // namespace

GaRnnModel init_model(const ModelConfig& config, std::uint64_t seed) { return build(config, seed, true); }

ModelLayout layout_of(const ModelConfig& config, const ParameterSet& params) {
  GaRnnModel skeleton = build(config, 0, false);
  if (skeleton.params.size() != params.size())
    throw DimensionError("parameter set has " + std::to_string(params.size()) + " tensors, config implies " +
                         std::to_string(skeleton.params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (skeleton.params.name(i) != params.name(i))
      throw DimensionError("parameter " + std::to_string(i) + " is '" + params.name(i) + "', expected '" +
                           skeleton.params.name(i) + "'");
    if (skeleton.params.value(i).shape() != params.value(i).shape())
      throw DimensionError("parameter " + params.name(i), skeleton.params.value(i).shape(), params.value(i).shape());
  }
  return skeleton.layout;
}

}  // namespace garnn
