#include "garnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "text_util.hpp"

namespace garnn {

void TrainConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("train config: ") + name + " must be positive");
  };
  positive(batch_size, "batch_size");
  positive(lr_decay_every, "lr_decay_every");
  positive(heads, "heads");
  positive(embed, "embed");
  positive(layers, "layers");
  positive(units, "units");
  positive(hops, "diffusion_steps");
  positive(lookback, "lookback");
  positive(horizon, "horizon");
  positive(patience, "patience");
  positive(threads, "threads");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("train config: learning_rate must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
    throw ConfigError("train config: lr_decay_factor must lie in (0, 1]");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("train config: tau must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("train config: clip_norm must be nonnegative");
}

ModelConfig TrainConfig::model_config(std::size_t nodes) const {
  ModelConfig m;
  m.nodes = nodes;
  m.input_dim = kInputChannels;
  m.output_dim = 1;
  m.heads = heads;
  m.embed = embed;
  m.layers = layers;
  m.units = units;
  m.hops = hops;
  m.share_attention = share_attention;
  m.stop_attention_gradient = stop_attention_gradient;
  return m;
}

Var mae_loss(std::span<const Var> preds, std::span<const Tensor> truth, std::span<const Tensor> mask) {
  if (preds.empty() || preds.size() != truth.size() || preds.size() != mask.size())
    throw ContractError("mae_loss: predictions, truth and mask need the same nonzero step count");
  std::size_t count = 0;
  for (const auto& m : mask)
    for (double x : m.values()) count += x != 0.0;
  if (count == 0) throw DegenerateBatchError("mae_loss: batch has no valid target entries");
  Var total = masked_abs_error_sum(preds[0], truth[0], mask[0]);
  for (std::size_t s = 1; s < preds.size(); ++s) total = add(total, masked_abs_error_sum(preds[s], truth[s], mask[s]));
  return scale(total, 1.0 / static_cast<double>(count));
}

OptimizerState OptimizerState::zeros_like(const ParameterSet& params) {
  OptimizerState s;
  for (const auto& v : params.values()) {
    s.m.emplace_back(v.shape());
    s.v.emplace_back(v.shape());
  }
  return s;
}

void adam_step(ParameterSet& params, std::span<const Tensor> grads, OptimizerState& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ContractError("adam_step: gradient or moment count does not match the parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params.value(i)))
      throw DimensionError("adam_step " + params.name(i), params.value(i).shape(), grads[i].shape());
    if (!grads[i].all_finite()) throw NonFiniteError("non-finite gradient for parameter '" + params.name(i) + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* w = params.value(i).data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    const double* g = grads[i].data();
    for (std::size_t k = 0; k < grads[i].size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g.values()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (std::size_t k = 0; k < g.size(); ++k) g[k] *= s;
  }
  return norm;
}

double lr_at_epoch(std::size_t epoch, const TrainConfig& c) {
  if (epoch < c.lr_decay_start_epoch) return c.learning_rate;
  const std::size_t decays = (epoch - c.lr_decay_start_epoch) / c.lr_decay_every + 1;
  return c.learning_rate * std::pow(c.lr_decay_factor, static_cast<double>(decays));
}

GaRnnModel Checkpoint::to_model() const {
  GaRnnModel m;
  m.config = model;
  m.params = params;
  m.layout = layout_of(model, params);
  return m;
}

// ---- checkpoint text ----

namespace {

constexpr const char* kMagic = "garnn-checkpoint";

std::string tensor_values(const Tensor& t) {
  std::string out;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (k) out += ' ';
    out += detail::format_hex(t[k]);
  }
  return out;
}

std::string metric_fields(const std::optional<MetricValues>& m) {
  if (!m) return "- - - 0 0";
  return detail::format_hex(m->mae) + " " + detail::format_hex(m->rmse) + " " +
         (m->mape ? detail::format_hex(*m->mape) : std::string("-")) + " " + std::to_string(m->count) + " " +
         std::to_string(m->mape_count);
}

class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  std::string line() {
    std::string s;
    if (!std::getline(in_, s)) fail("unexpected end of file");
    ++number_;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
  }

  std::vector<std::string> words() {
    std::istringstream ss(line());
    std::vector<std::string> w;
    for (std::string x; ss >> x;) w.push_back(x);
    return w;
  }

  /// Reads `key value...` and checks the key.
  std::vector<std::string> expect(const std::string& key, std::size_t values) {
    auto w = words();
    if (w.empty() || w[0] != key) fail("expected '" + key + "'");
    if (w.size() != values + 1) fail("'" + key + "' takes " + std::to_string(values) + " value(s)");
    w.erase(w.begin());
    return w;
  }

  double real(const std::string& s) {
    auto v = detail::parse_hex(s);
    if (!v) fail("bad number '" + s + "'");
    return *v;
  }

  std::uint64_t count(const std::string& s) {
    auto v = detail::parse_int(s);
    if (!v || *v < 0) fail("bad count '" + s + "'");
    return static_cast<std::uint64_t>(*v);
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw IngestionError("checkpoint line " + std::to_string(number_) + ": " + msg);
  }

 private:
  std::istringstream in_;
  std::size_t number_ = 0;
};

void write_model_config(std::string& out, const ModelConfig& m) {
  out += "model.nodes " + std::to_string(m.nodes) + "\n";
  out += "model.input_dim " + std::to_string(m.input_dim) + "\n";
  out += "model.output_dim " + std::to_string(m.output_dim) + "\n";
  out += "model.heads " + std::to_string(m.heads) + "\n";
  out += "model.embed " + std::to_string(m.embed) + "\n";
  out += "model.layers " + std::to_string(m.layers) + "\n";
  out += "model.units " + std::to_string(m.units) + "\n";
  out += "model.diffusion_steps " + std::to_string(m.hops) + "\n";
  out += "model.share_attention " + std::to_string(m.share_attention ? 1 : 0) + "\n";
  out += "model.stop_attention_gradient " + std::to_string(m.stop_attention_gradient ? 1 : 0) + "\n";
}

ModelConfig read_model_config(LineReader& r) {
  ModelConfig m;
  m.nodes = r.count(r.expect("model.nodes", 1)[0]);
  m.input_dim = r.count(r.expect("model.input_dim", 1)[0]);
  m.output_dim = r.count(r.expect("model.output_dim", 1)[0]);
  m.heads = r.count(r.expect("model.heads", 1)[0]);
  m.embed = r.count(r.expect("model.embed", 1)[0]);
  m.layers = r.count(r.expect("model.layers", 1)[0]);
  m.units = r.count(r.expect("model.units", 1)[0]);
  m.hops = r.count(r.expect("model.diffusion_steps", 1)[0]);
  m.share_attention = r.count(r.expect("model.share_attention", 1)[0]) != 0;
  m.stop_attention_gradient = r.count(r.expect("model.stop_attention_gradient", 1)[0]) != 0;
  return m;
}

Tensor read_values(LineReader& r, const Shape& shape) {
  Tensor t(shape);
  auto w = r.words();
  if (w.size() != t.size())
    r.fail("expected " + std::to_string(t.size()) + " values, found " + std::to_string(w.size()));
  for (std::size_t k = 0; k < w.size(); ++k) t[k] = r.real(w[k]);
  return t;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out = std::string(kMagic) + " " + std::to_string(c.version) + "\n";
  TrainConfig cfg = c.config;
  visit_fields(cfg, [&](const char* key, auto& field) {
    using T = std::decay_t<decltype(field)>;
    out += std::string("train.") + key + " ";
    if constexpr (std::is_same_v<T, double>)
      out += detail::format_hex(field);
    else if constexpr (std::is_same_v<T, bool>)
      out += field ? "1" : "0";
    else
      out += std::to_string(field);
    out += "\n";
  });
  write_model_config(out, c.model);
  out += "norm " + detail::format_hex(c.norm.mean) + " " + detail::format_hex(c.norm.std) + "\n";
  out += "epoch " + std::to_string(c.epoch) + "\n";
  out += "sensors " + std::to_string(c.sensor_ids.size()) + "\n";
  for (const auto& id : c.sensor_ids) out += id + "\n";
  const std::size_t n = c.sensor_ids.size();
  out += "adjacency " + std::to_string(c.adjacency.empty() ? 0 : n) + "\n";
  if (!c.adjacency.empty())
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) out += c.adjacency[i * n + j] ? '1' : '0';
      out += "\n";
    }
  out += "history " + std::to_string(c.history.size()) + "\n";
  for (const auto& h : c.history)
    out += std::to_string(h.epoch) + " " + detail::format_hex(h.lr) + " " + detail::format_hex(h.train_loss) + " " +
           std::to_string(h.steps) + " " + metric_fields(h.val) + "\n";
  out += "params " + std::to_string(c.params.size()) + "\n";
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    const Tensor& t = c.params.value(i);
    out += "tensor " + c.params.name(i) + " " + std::to_string(t.rank());
    for (std::size_t d : t.shape()) out += " " + std::to_string(d);
    out += "\n" + tensor_values(t) + "\n";
  }
  const OptimizerState& o = c.optimizer;
  out += "adam " + std::to_string(o.step) + " " + detail::format_hex(o.beta1) + " " + detail::format_hex(o.beta2) +
         " " + detail::format_hex(o.eps) + " " + std::to_string(o.m.size()) + "\n";
  for (std::size_t i = 0; i < o.m.size(); ++i) out += tensor_values(o.m[i]) + "\n" + tensor_values(o.v[i]) + "\n";
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(const std::string& text) {
  LineReader r(text);
  Checkpoint c;
  {
    auto w = r.words();
    if (w.size() != 2 || w[0] != kMagic) r.fail("not a garnn checkpoint");
    c.version = static_cast<int>(r.count(w[1]));
    if (c.version != kCheckpointVersion)
      throw CheckpointMismatchError("unsupported checkpoint version " + w[1] + " (this build reads version " +
                                    std::to_string(kCheckpointVersion) + ")");
  }
  visit_fields(c.config, [&](const char* key, auto& field) {
    using T = std::decay_t<decltype(field)>;
    const std::string v = r.expect(std::string("train.") + key, 1)[0];
    if constexpr (std::is_same_v<T, double>)
      field = r.real(v);
    else if constexpr (std::is_same_v<T, bool>)
      field = r.count(v) != 0;
    else
      field = static_cast<T>(r.count(v));
  });
  c.model = read_model_config(r);
  {
    auto w = r.expect("norm", 2);
    c.norm = {r.real(w[0]), r.real(w[1])};
  }
  c.epoch = r.count(r.expect("epoch", 1)[0]);
  const std::size_t n = r.count(r.expect("sensors", 1)[0]);
  for (std::size_t i = 0; i < n; ++i) c.sensor_ids.push_back(r.line());
  const std::size_t adj = r.count(r.expect("adjacency", 1)[0]);
  if (adj != 0 && adj != n) r.fail("adjacency size does not match the sensor count");
  for (std::size_t i = 0; i < adj; ++i) {
    const std::string row = r.line();
    if (row.size() != n || row.find_first_not_of("01") != std::string::npos) r.fail("bad adjacency row");
    for (char ch : row) c.adjacency.push_back(ch == '1');
  }
  const std::size_t h = r.count(r.expect("history", 1)[0]);
  for (std::size_t i = 0; i < h; ++i) {
    auto w = r.words();
    if (w.size() != 9) r.fail("history rows have 9 fields");
    EpochRecord e;
    e.epoch = r.count(w[0]);
    e.lr = r.real(w[1]);
    e.train_loss = r.real(w[2]);
    e.steps = r.count(w[3]);
    if (w[4] != "-") {
      MetricValues m;
      m.mae = r.real(w[4]);
      m.rmse = r.real(w[5]);
      if (w[6] != "-") m.mape = r.real(w[6]);
      m.count = r.count(w[7]);
      m.mape_count = r.count(w[8]);
      e.val = m;
    }
    c.history.push_back(e);
  }
  const std::size_t p = r.count(r.expect("params", 1)[0]);
  for (std::size_t i = 0; i < p; ++i) {
    auto w = r.words();
    if (w.size() < 3 || w[0] != "tensor") r.fail("expected 'tensor <name> <rank> <dims>'");
    const std::size_t rank = r.count(w[2]);
    if (w.size() != 3 + rank) r.fail("tensor rank does not match its dimensions");
    Shape shape;
    for (std::size_t d = 0; d < rank; ++d) shape.push_back(r.count(w[3 + d]));
    c.params.add(w[1], read_values(r, shape));
  }
  {
    auto w = r.expect("adam", 5);
    c.optimizer.step = r.count(w[0]);
    c.optimizer.beta1 = r.real(w[1]);
    c.optimizer.beta2 = r.real(w[2]);
    c.optimizer.eps = r.real(w[3]);
    const std::size_t k = r.count(w[4]);
    if (k != 0 && k != p) r.fail("optimizer moment count does not match the parameter count");
    for (std::size_t i = 0; i < k; ++i) {
      c.optimizer.m.push_back(read_values(r, c.params.value(i).shape()));
      c.optimizer.v.push_back(read_values(r, c.params.value(i).shape()));
    }
  }
  r.expect("end", 0);
  try {
    layout_of(c.model, c.params);
  } catch (const std::exception& e) {
    throw IngestionError(std::string("checkpoint parameters do not match the stored model config: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  detail::write_file_atomic(path, serialize_checkpoint(c));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const std::runtime_error&) {
    throw IngestionError("cannot open checkpoint '" + path + "'");
  }
  try {
    return parse_checkpoint(text);
  } catch (const IngestionError& e) {
    throw IngestionError(path + ": " + e.what());
  } catch (const CheckpointMismatchError& e) {
    throw CheckpointMismatchError(path + ": " + e.what());
  }
}

std::string history_text(std::span<const EpochRecord> history) {
  std::string out = "epoch lr train_loss steps val_mae val_rmse val_mape\n";
  for (const auto& h : history) {
    out += std::to_string(h.epoch) + " " + detail::format_double(h.lr) + " " + detail::format_double(h.train_loss) +
           " " + std::to_string(h.steps);
    if (h.val) {
      out += " " + detail::format_double(h.val->mae) + " " + detail::format_double(h.val->rmse) + " " +
             (h.val->mape ? detail::format_double(*h.val->mape) : std::string("-"));
    } else {
      out += " - - -";
    }
    out += "\n";
  }
  return out;
}

// ---- forecasting ----

namespace {

/// Runs fn(i) for i in [0, count) on up to `threads` workers, contiguous
/// chunks per worker.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * chunk; i < std::min(count, (w + 1) * chunk); ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<Tensor> forecast(const GaRnnModel& model, const DirectedSupports& supports,
                             std::span<const Tensor> inputs, std::span<const Tensor> known_future,
                             std::size_t horizon) {
  Tape tape;
  const Seq2SeqParams p = bind_model(tape, model, false);
  const std::vector<Var> states = encode(tape, inputs, supports, p);
  DecodeRequest req;
  req.horizon = horizon;
  req.known_future = known_future;
  const DecodeResult res = decode(tape, states, supports, p, req);
  std::vector<Tensor> out;
  for (const Var& v : res.predictions) out.push_back(v.value());
  return out;
}

HorizonData model_forecast(const GaRnnModel& model, const WindowSet& windows, const DirectedSupports& supports,
                           std::size_t threads) {
  HorizonData d = horizon_truth(windows);
  const NormStats& norm = windows.norm();
  parallel_for(windows.size(), threads, [&](std::size_t w) {
    const ForecastInstance inst = windows[w];
    const std::vector<Tensor> z = forecast(model, supports, inst.inputs, inst.known_future, windows.horizon());
    for (std::size_t p = 0; p < z.size(); ++p)
      for (std::size_t i = 0; i < windows.nodes(); ++i) d.predictions[p](w, i) = norm.denormalize(z[p](i, 0));
  });
  return d;
}

// ---- training loop ----

namespace {

struct ElementGradient {
  std::vector<Tensor> grads;
  double abs_sum = 0.0;
  std::size_t count = 0;
};

void element_gradient(const GaRnnModel& model, const DirectedSupports& supports, const ForecastInstance& inst,
                      std::size_t horizon, double truth_prob, std::uint64_t seed, ElementGradient& out) {
  for (auto& g : out.grads) g.fill(0.0);
  out.abs_sum = 0.0;
  out.count = 0;
  for (const auto& m : inst.target_mask.first(horizon))
    for (double x : m.values()) out.count += x != 0.0;
  if (out.count == 0) return;

  Tape tape;
  const Seq2SeqParams p = bind_model(tape, model, true);
  const std::vector<Var> states = encode(tape, inst.inputs, supports, p);
  std::mt19937_64 rng(seed);
  DecodeRequest req;
  req.horizon = horizon;
  req.targets = inst.targets;
  req.known_future = inst.known_future;
  req.use_truth_prob = truth_prob;
  req.rng = &rng;
  const DecodeResult res = decode(tape, states, supports, p, req);
  Var total = masked_abs_error_sum(res.predictions[0], inst.targets[0], inst.target_mask[0]);
  for (std::size_t s = 1; s < horizon; ++s)
    total = add(total, masked_abs_error_sum(res.predictions[s], inst.targets[s], inst.target_mask[s]));
  out.abs_sum = total.value().item();
  tape.backward(total);
  for (const auto& [index, leaf] : p.leaves) {
    const Tensor g = tape.gradient(leaf);
    Tensor& acc = out.grads[index];
    for (std::size_t k = 0; k < g.size(); ++k) acc[k] += g[k];
  }
}

Checkpoint snapshot(const Checkpoint& base, const GaRnnModel& model, const OptimizerState& opt, std::size_t epoch,
                    const std::vector<EpochRecord>& history) {
  Checkpoint c = base;
  c.params = model.params;
  c.optimizer = opt;
  c.epoch = epoch;
  c.history = history;
  return c;
}

}  // namespace

TrainResult train(const TrainConfig& config, const WindowSet& train_set, const WindowSet& val_set,
                  const SensorGraph& graph, const NormStats& norm, const TrainHooks& hooks) {
  config.validate();
  if (train_set.nodes() != graph.size() && !train_set.empty())
    throw ConfigError("train: series has " + std::to_string(train_set.nodes()) + " sensors but the graph has " +
                      std::to_string(graph.size()) + " vertices");
  if (!train_set.empty() && (train_set.lookback() != config.lookback || train_set.horizon() != config.horizon))
    throw ConfigError("train: window lengths do not match the configured lookback/horizon");

  const ModelConfig mc = config.model_config(graph.size());
  GaRnnModel model = init_model(mc, config.seed);
  OptimizerState opt = OptimizerState::zeros_like(model.params);

  Checkpoint base;
  base.config = config;
  base.model = mc;
  base.norm = norm;
  base.sensor_ids = graph.vertex_ids();
  base.adjacency = graph.adjacency();
  base.params = model.params;
  base.optimizer = opt;

  TrainResult result{base, base, std::nullopt};
  if (config.epochs == 0 || train_set.empty()) return result;

  const DirectedSupports supports = DirectedSupports::of(graph);
  const SamplingSchedule schedule{config.tau};
  std::seed_seq shuffle_seed{config.seed, std::uint64_t{1}};
  std::seed_seq sample_seed{config.seed, std::uint64_t{2}};
  std::mt19937_64 shuffle_rng(shuffle_seed);
  std::mt19937_64 sample_rng(sample_seed);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t batch = std::min(config.batch_size, train_set.size());
  const bool threaded = config.threads > 1 && batch > 1;
  std::vector<ElementGradient> scratch(threaded ? batch : 1);
  for (auto& s : scratch)
    for (const auto& v : model.params.values()) s.grads.emplace_back(v.shape());
  std::vector<Tensor> grads;
  for (const auto& v : model.params.values()) grads.emplace_back(v.shape());

  std::vector<EpochRecord> history;
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  bool step_limit = false;

  for (std::size_t epoch = 0; epoch < config.epochs && !step_limit; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = lr_at_epoch(epoch, config);
    double loss_sum = 0.0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t size = std::min(batch, order.size() - start);
      const double prob = sampling_probability(opt.step, schedule);
      std::vector<std::uint64_t> seeds(size);
      for (auto& s : seeds) s = sample_rng();

      for (auto& g : grads) g.fill(0.0);
      double abs_sum = 0.0;
      std::size_t count = 0;
      auto accumulate = [&](const ElementGradient& e) {
        abs_sum += e.abs_sum;
        count += e.count;
        for (std::size_t i = 0; i < grads.size(); ++i)
          for (std::size_t k = 0; k < grads[i].size(); ++k) grads[i][k] += e.grads[i][k];
      };
      if (!threaded) {
        for (std::size_t e = 0; e < size; ++e) {
          element_gradient(model, supports, train_set[order[start + e]], config.horizon, prob, seeds[e], scratch[0]);
          accumulate(scratch[0]);
        }
      } else {
        parallel_for(size, config.threads, [&](std::size_t e) {
          element_gradient(model, supports, train_set[order[start + e]], config.horizon, prob, seeds[e], scratch[e]);
        });
        for (std::size_t e = 0; e < size; ++e) accumulate(scratch[e]);
      }
      if (count == 0) continue;

      const double loss = abs_sum / static_cast<double>(count);
      if (!std::isfinite(loss)) {
        result.aborted = "non-finite training loss at optimizer step " + std::to_string(opt.step + 1);
        break;
      }
      for (auto& g : grads)
        for (std::size_t k = 0; k < g.size(); ++k) g[k] /= static_cast<double>(count);
      clip_global_norm(grads, config.clip_norm);
      try {
        adam_step(model.params, grads, opt, lr);
      } catch (const NonFiniteError& e) {
        result.aborted = std::string(e.what()) + " at optimizer step " + std::to_string(opt.step + 1);
        break;
      }
      loss_sum += loss;
      ++batches;
      if (config.max_steps && opt.step >= config.max_steps) {
        step_limit = true;
        break;
      }
    }
    if (result.aborted) break;

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    rec.steps = opt.step;
    if (!val_set.empty()) {
      const HorizonData d = model_forecast(model, val_set, supports, config.threads);
      rec.val = compute_metrics(d.predictions, d.truth, d.mask).average;
    }
    history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    const double score = rec.val ? rec.val->mae : rec.train_loss;
    if (!std::isfinite(score)) {
      result.aborted = "non-finite validation score after epoch " + std::to_string(epoch + 1);
      break;
    }
    if (score < best_score) {
      best_score = score;
      since_best = 0;
      result.best = snapshot(base, model, opt, epoch + 1, history);
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  // Updates are rejected before they touch any state, so the current
  // parameters are the last good ones even after an abort.
  result.final = snapshot(base, model, opt, history.empty() ? 0 : history.back().epoch, history);
  return result;
}

}  // namespace garnn
