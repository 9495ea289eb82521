#include "garnn/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <iostream>

#include "garnn/data.hpp"
#include "garnn/evaluation.hpp"
#include "garnn/graph.hpp"
#include "garnn/training.hpp"
#include "text_util.hpp"

namespace garnn {

namespace {

constexpr int kExitData = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMismatch = 3;
constexpr int kExitAborted = 4;

std::string to_text(double v) { return detail::format_double(v); }
std::string to_text(bool v) { return v ? "true" : "false"; }
std::string to_text(const std::string& v) { return v; }
template <class T>
std::string to_text(const T& v) {
  return std::to_string(v);
}

/// Options of one subcommand, remembered so the resolved values can be
/// echoed and filled from a config file.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "Flat key = value file; flags given on the command line win");
  }

  template <class T>
  CLI::Option* add(const std::string& name, T& var, const std::string& help) {
    echo_.emplace_back(name, [&var] { return to_text(var); });
    return app_->add_option("--" + name, var, help)->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    echo_.emplace_back(name, [&var] { return to_text(var); });
    return app_->add_flag("--" + name, var, help);
  }

  /// Applies config-file values to options not given on the command line.
  void apply_config_file() {
    if (config_path_.empty()) return;
    std::string text;
    try {
      text = detail::read_file(config_path_);
    } catch (const std::runtime_error&) {
      throw ConfigError("cannot open config file '" + config_path_ + "'");
    }
    std::istringstream in(text);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      const std::string where = config_path_ + ":" + std::to_string(line_no);
      if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
      std::string key = detail::trim(std::string_view(t).substr(0, eq));
      const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
      std::replace(key.begin(), key.end(), '_', '-');
      CLI::Option* opt = key == "config" ? nullptr : app_->get_option_no_throw("--" + key);
      if (!opt) throw ConfigError(where + ": unknown key '" + key + "'");
      if (opt->count() > 0) continue;
      opt->add_result(value);
      try {
        opt->run_callback();
      } catch (const CLI::Error& e) {
        throw ConfigError(where + ": " + e.what());
      }
    }
  }

  std::string resolved(const std::string& title) const {
    std::string out = "# " + title + "\n";
    for (const auto& [name, value] : echo_) out += name + " = " + value() + "\n";
    return out;
  }

 private:
  CLI::App* app_;
  std::string config_path_;
  std::vector<std::pair<std::string, std::function<std::string()>>> echo_;
};

std::string join(const std::filesystem::path& dir, const std::string& name) { return (dir / name).string(); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + dir + "': " + ec.message());
}

void ensure_parent(const std::string& file) {
  const std::filesystem::path parent = std::filesystem::path(file).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
}

// ---- synth ----

struct SynthArgs {
  std::size_t nodes = 6;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  double noise = 0.01;
  std::size_t regime_period = 0;
  double rho = 0.8;
  bool periodic = false;
  std::size_t season = kWeekSteps;
  double threshold = 2000.0;
  std::string out = ".";
  std::string series;
  std::string distances;
};

int cmd_synth(SynthArgs a) {
  if (a.series.empty()) a.series = join(a.out, "series.csv");
  if (a.distances.empty()) a.distances = join(a.out, "distances.csv");
  ensure_parent(a.series);
  ensure_parent(a.distances);
  const std::vector<DistanceRecord> records = ring_distances(a.nodes);
  const std::vector<std::string> ids = synth_sensor_ids(a.nodes);
  const SensorGraph g = build_graph(records, a.threshold, ids);
  SynthOptions o;
  o.steps = a.steps;
  o.seed = a.seed;
  o.noise = a.noise;
  o.regime_period = a.regime_period;
  o.rho = a.rho;
  const SeriesTable table = a.periodic ? synth_periodic(g, a.steps, a.season, a.seed, o) : synth_generate(g, o);
  write_series(a.series, table);
  write_distances(a.distances, records);
  std::cerr << "wrote " << table.rows() << " rows x " << table.sensors() << " sensors to " << a.series << " and "
            << records.size() << " distance records to " << a.distances << "\n";
  return 0;
}

// ---- shared pipeline pieces ----

struct Dataset {
  SeriesTable table;
  Splits splits;
};

Dataset load_dataset(const std::string& series_path) {
  Dataset d;
  d.table = load_series(series_path);
  d.splits = split_70_10_20(d.table);
  return d;
}

SensorGraph graph_for_series(const std::string& distances_path, double threshold, const SeriesTable& table) {
  const std::vector<DistanceRecord> records = load_distances(distances_path);
  return build_graph(records, threshold, table.sensor_ids);
}

/// Checks the series and the optional distance file against a checkpoint and
/// returns the graph the checkpoint was trained on.
SensorGraph checkpoint_graph(const Checkpoint& c, const SeriesTable& table, const std::string& distances_path,
                             double threshold) {
  if (table.sensor_ids != c.sensor_ids)
    throw CheckpointMismatchError("series sensors do not match the checkpoint (checkpoint has " +
                                  std::to_string(c.sensor_ids.size()) + " sensors, series has " +
                                  std::to_string(table.sensors()) + "; ids and order must agree)");
  const SensorGraph stored(c.sensor_ids, c.adjacency);
  if (!distances_path.empty()) {
    const SensorGraph g = graph_for_series(distances_path, threshold, table);
    if (!(g == stored))
      throw CheckpointMismatchError("graph from '" + distances_path + "' at threshold " + to_text(threshold) +
                                    " differs from the graph stored in the checkpoint");
  }
  return stored;
}

// ---- train ----

struct TrainArgs {
  TrainConfig config;
  std::string series;
  std::string distances;
  double threshold = 2000.0;
  std::string out = "run";
  std::string checkpoint;
};

int cmd_train(const TrainArgs& a, const std::string& resolved) {
  a.config.validate();
  ensure_dir(a.out);
  const std::filesystem::path out(a.out);
  detail::write_file_atomic(join(out, "config.ini"), resolved);

  const Dataset d = load_dataset(a.series);
  const SensorGraph g = graph_for_series(a.distances, a.threshold, d.table);
  const NormStats norm = compute_norm_stats(d.splits.train);
  const WindowSet train_set = make_windows(d.splits.train, norm, a.config.lookback, a.config.horizon);
  const WindowSet val_set = make_windows(d.splits.val, norm, a.config.lookback, a.config.horizon);
  if (train_set.empty())
    throw ConfigError("training split has " + std::to_string(d.splits.train.rows()) +
                      " rows, fewer than lookback + horizon = " +
                      std::to_string(a.config.lookback + a.config.horizon));
  std::cerr << "series: " << d.table.rows() << " rows x " << d.table.sensors() << " sensors; graph: " << g.edge_count()
            << " edges; windows: " << train_set.size() << " train, " << val_set.size() << " val\n";

  const auto started = std::chrono::steady_clock::now();
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    char buf[200];
    if (r.val)
      std::snprintf(buf, sizeof(buf), "epoch %zu  lr %.3g  train %.5f  val MAE %.4f  RMSE %.4f  (%.1fs)\n", r.epoch,
                    r.lr, r.train_loss, r.val->mae, r.val->rmse, secs);
    else
      std::snprintf(buf, sizeof(buf), "epoch %zu  lr %.3g  train %.5f  (%.1fs)\n", r.epoch, r.lr, r.train_loss, secs);
    std::cerr << buf;
  };
  const TrainResult result = train(a.config, train_set, val_set, g, norm, hooks);

  const std::string best_path = a.checkpoint.empty() ? join(out, "best.ckpt") : a.checkpoint;
  save_checkpoint(best_path, result.best);
  save_checkpoint(join(out, "final.ckpt"), result.final);
  detail::write_file_atomic(join(out, "history.log"), history_text(result.final.history));
  std::cerr << "wrote " << best_path << ", " << join(out, "final.ckpt") << " and " << join(out, "history.log") << "\n";
  if (result.aborted) {
    std::cerr << "training stopped: " << *result.aborted << "\n";
    return kExitAborted;
  }
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string checkpoint;
  std::string series;
  std::string distances;
  double threshold = 2000.0;
  std::string split = "test";
  std::string baseline = "none";
  std::size_t season = kWeekSteps;
  std::size_t threads = 1;
  std::string out;
};

int cmd_eval(const EvalArgs& a, const std::string& resolved) {
  const Checkpoint c = load_checkpoint(a.checkpoint);
  const Dataset d = load_dataset(a.series);
  const SensorGraph g = checkpoint_graph(c, d.table, a.distances, a.threshold);
  const SeriesTable& part = a.split == "train" ? d.splits.train : a.split == "val" ? d.splits.val : d.splits.test;
  const WindowSet windows = make_windows(part, c.norm, c.config.lookback, c.config.horizon);
  if (windows.empty())
    throw ConfigError(a.split + " split has " + std::to_string(part.rows()) + " rows, too few for one window");

  const std::size_t minutes = static_cast<std::size_t>(std::max<std::int64_t>(d.table.period_seconds() / 60, 1));
  const GaRnnModel model = c.to_model();
  const HorizonData fc = model_forecast(model, windows, DirectedSupports::of(g), a.threads);
  const MetricsReport report = compute_metrics(fc.predictions, fc.truth, fc.mask);
  std::string text = format_report(report, "GA-RNN, " + a.split + " split, " + std::to_string(windows.size()) +
                                               " windows", minutes);
  std::optional<MetricsReport> ha_report;
  if (a.baseline == "ha") {
    const HistoricalAverage ha(d.splits.train, a.season);
    const HorizonData hd = ha_forecast(ha, windows);
    ha_report = compute_metrics(hd.predictions, hd.truth, hd.mask);
    text += "\n" + format_report(*ha_report, "HA (unweighted mean per slot, season " + std::to_string(a.season) +
                                                 " steps), " + a.split + " split",
                                 minutes);
  }
  std::cout << text;
  if (!a.out.empty()) {
    ensure_dir(a.out);
    const std::filesystem::path out(a.out);
    detail::write_file_atomic(join(out, "eval_config.ini"), resolved);
    detail::write_file_atomic(join(out, "metrics.txt"), text);
    detail::write_file_atomic(join(out, "metrics.csv"), metrics_csv(report));
    if (ha_report) detail::write_file_atomic(join(out, "metrics_ha.csv"), metrics_csv(*ha_report));
  }
  return 0;
}

// ---- predict ----

struct PredictArgs {
  std::string checkpoint;
  std::string series;
  std::string distances;
  double threshold = 2000.0;
  std::string out;
};

int cmd_predict(const PredictArgs& a) {
  const Checkpoint c = load_checkpoint(a.checkpoint);
  const SeriesTable table = load_series(a.series);
  const SensorGraph g = checkpoint_graph(c, table, a.distances, a.threshold);
  const std::size_t lookback = c.config.lookback, horizon = c.config.horizon;
  if (table.rows() < lookback)
    throw ContractError("predict: series has " + std::to_string(table.rows()) + " rows but the model needs " +
                        std::to_string(lookback));
  const std::int64_t period = table.period_seconds();
  if (period <= 0) throw ContractError("predict: need at least two rows to infer the sampling period");

  const std::size_t n = table.sensors();
  std::vector<Tensor> inputs, known;
  for (std::size_t r = table.rows() - lookback; r < table.rows(); ++r) {
    Tensor x = Tensor::matrix(n, kInputChannels);
    const double tod = time_of_day(table.epoch_seconds[r]);
    for (std::size_t i = 0; i < n; ++i) {
      x(i, 0) = c.norm.normalize(table.values(r, i));
      x(i, 1) = tod;
    }
    inputs.push_back(std::move(x));
  }
  std::vector<std::int64_t> stamps;
  for (std::size_t p = 1; p <= horizon; ++p) {
    stamps.push_back(table.epoch_seconds.back() + static_cast<std::int64_t>(p) * period);
    known.push_back(Tensor::matrix(n, 1, time_of_day(stamps.back())));
  }
  const std::vector<Tensor> z = forecast(c.to_model(), DirectedSupports::of(g), inputs, known, horizon);
  Tensor values = Tensor::matrix(horizon, n);
  for (std::size_t p = 0; p < horizon; ++p)
    for (std::size_t i = 0; i < n; ++i) values(p, i) = c.norm.denormalize(z[p](i, 0));
  SeriesTable out;
  out.sensor_ids = table.sensor_ids;
  out.epoch_seconds = stamps;
  out.values = values;
  out.mask.assign(horizon * n, 1);
  ensure_parent(a.out);
  write_series(a.out, out);
  std::cerr << "wrote " << horizon << " forecast rows to " << a.out << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Graph-attention recurrent forecaster for correlated time series"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Write a synthetic series and matching distance file");
  Options so(synth_cmd);
  so.add("nodes", synth.nodes, "Number of sensors on the directed ring")->check(CLI::PositiveNumber);
  so.add("steps", synth.steps, "Number of time steps")->check(CLI::PositiveNumber);
  so.add("seed", synth.seed, "Random seed");
  so.add("noise", synth.noise, "Standard deviation of the innovation noise")->check(CLI::NonNegativeNumber);
  so.add("regime-period", synth.regime_period, "Steps between edge-weight regime switches (0: no switching)");
  so.add("rho", synth.rho, "Weight of the neighbour coupling term")->check(CLI::Range(0.0, 1.0));
  so.flag("periodic", synth.periodic, "Write an exactly periodic, noise-free series instead");
  so.add("season", synth.season, "Period of the --periodic series in steps")->check(CLI::PositiveNumber);
  so.add("threshold", synth.threshold, "Distance threshold for the edges that drive the dynamics");
  so.add("out", synth.out, "Output directory");
  so.add("series", synth.series, "Series output path (default <out>/series.csv)");
  so.add("distances", synth.distances, "Distance output path (default <out>/distances.csv)");

  TrainArgs tr;
  TrainConfig& tc = tr.config;
  CLI::App* train_cmd = app.add_subcommand("train", "Train on the 70% split, validating on the next 10%");
  Options to(train_cmd);
  to.add("series", tr.series, "Series CSV (timestamp,<sensor ids>...)");
  to.add("distances", tr.distances, "Distance CSV (from,to,dist)");
  to.add("threshold", tr.threshold, "Edge iff distance < threshold");
  to.add("out", tr.out, "Output directory");
  to.add("checkpoint", tr.checkpoint, "Best-checkpoint path (default <out>/best.ckpt)");
  to.add("seed", tc.seed, "Random seed for initialisation, shuffling and sampling");
  to.add("epochs", tc.epochs, "Maximum number of epochs");
  to.add("batch", tc.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  to.add("heads", tc.heads, "Attention heads per direction")->check(CLI::PositiveNumber);
  to.add("embed", tc.embed, "Attention embedding size")->check(CLI::PositiveNumber);
  to.add("units", tc.units, "Hidden units per recurrent layer")->check(CLI::PositiveNumber);
  to.add("layers", tc.layers, "Recurrent layers in encoder and decoder")->check(CLI::PositiveNumber);
  to.add("diffusion-steps", tc.hops, "Diffusion hops")->check(CLI::PositiveNumber);
  to.add("lookback", tc.lookback, "Input window length")->check(CLI::PositiveNumber);
  to.add("horizon", tc.horizon, "Forecast length")->check(CLI::PositiveNumber);
  to.add("threads", tc.threads, "Worker threads per batch")->check(CLI::PositiveNumber);
  to.add("learning-rate", tc.learning_rate, "Initial Adam learning rate")->check(CLI::PositiveNumber);
  to.add("lr-decay-start", tc.lr_decay_start_epoch, "Epoch of the first learning-rate decay");
  to.add("lr-decay-every", tc.lr_decay_every, "Epochs between decays")->check(CLI::PositiveNumber);
  to.add("lr-decay-factor", tc.lr_decay_factor, "Multiplier applied at each decay");
  to.add("tau", tc.tau, "Scheduled-sampling decay constant")->check(CLI::PositiveNumber);
  to.add("patience", tc.patience, "Epochs without validation improvement before stopping")
      ->check(CLI::PositiveNumber);
  to.add("clip-norm", tc.clip_norm, "Global gradient-norm bound (0: off)")->check(CLI::NonNegativeNumber);
  to.add("max-steps", tc.max_steps, "Stop after this many optimizer steps (0: no limit)");
  to.flag("share-attention", tc.share_attention, "Decoder reuses the encoder attention parameters");
  to.flag("stop-attention-gradient", tc.stop_attention_gradient, "Treat attention matrices as constants in backward");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Report per-horizon MAE/RMSE/MAPE on a split");
  Options eo(eval_cmd);
  eo.add("checkpoint", ev.checkpoint, "Checkpoint to evaluate");
  eo.add("series", ev.series, "Series CSV the checkpoint was trained on");
  eo.add("distances", ev.distances, "Optional distance CSV, checked against the stored graph");
  eo.add("threshold", ev.threshold, "Threshold used with --distances");
  eo.add("split", ev.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eo.add("baseline", ev.baseline, "Also report a baseline: none or ha")->check(CLI::IsMember({"none", "ha"}));
  eo.add("season", ev.season, "Historical-average season in steps")->check(CLI::PositiveNumber);
  eo.add("threads", ev.threads, "Worker threads")->check(CLI::PositiveNumber);
  eo.add("out", ev.out, "Directory for metrics.txt and metrics.csv");

  PredictArgs pr;
  CLI::App* predict_cmd = app.add_subcommand("predict", "Forecast the rows after the end of a series file");
  Options po(predict_cmd);
  po.add("checkpoint", pr.checkpoint, "Trained checkpoint");
  po.add("series", pr.series, "Recent observations; the last lookback rows are used");
  po.add("distances", pr.distances, "Optional distance CSV, checked against the stored graph");
  po.add("threshold", pr.threshold, "Threshold used with --distances");
  po.add("out", pr.out, "Forecast CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  auto require = [](const std::string& value, const char* flag) {
    if (value.empty()) throw ConfigError(std::string("missing required setting --") + flag);
  };
  try {
    if (synth_cmd->parsed()) {
      so.apply_config_file();
      return cmd_synth(synth);
    }
    if (train_cmd->parsed()) {
      to.apply_config_file();
      require(tr.series, "series");
      require(tr.distances, "distances");
      return cmd_train(tr, to.resolved("resolved train configuration"));
    }
    if (eval_cmd->parsed()) {
      eo.apply_config_file();
      require(ev.checkpoint, "checkpoint");
      require(ev.series, "series");
      return cmd_eval(ev, eo.resolved("resolved eval configuration"));
    }
    if (predict_cmd->parsed()) {
      po.apply_config_file();
      require(pr.checkpoint, "checkpoint");
      require(pr.series, "series");
      require(pr.out, "out");
      return cmd_predict(pr);
    }
  } catch (const CheckpointMismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace garnn
