#include "stpp/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "stpp/events.hpp"
#include "stpp/intensity.hpp"
#include "stpp/model.hpp"
#include "stpp/network.hpp"
#include "stpp/simulate.hpp"
#include "stpp/train.hpp"

namespace stpp {

namespace {

using json = nlohmann::json;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

// Network, weights and data-loading flags shared by most subcommands.
struct SpatialFlags {
  std::string network;
  std::string weights;
  double weight_bin_hours = 2.0;
  double min_incident_hours = 0.25;

  void add(CLI::App* app) {
    app->add_option("--network", network, "Road network JSON");
    app->add_option("--weights", weights, "Segment weights CSV (default: flow accumulation)");
    app->add_option("--weight-bin-hours", weight_bin_hours, "Width of weight time bins")
        ->check(CLI::PositiveNumber);
    app->add_option("--min-incident-hours", min_incident_hours,
                    "Drop incidents processed faster than this")
        ->check(CLI::NonNegativeNumber);
  }

  SpatialContext context(int num_sensors) const {
    if (network.empty()) {
      if (!weights.empty()) throw std::invalid_argument("--weights requires --network");
      return SpatialContext::isolated(num_sensors);
    }
    TrafficNetwork net = load_network(network);
    SegmentWeights w = weights.empty() ? SegmentWeights::flow_accumulated(net)
                                       : load_weights_csv(net, weights, weight_bin_hours);
    w = renormalize_weights(net, w);
    return SpatialContext::from_network(std::move(net), std::move(w));
  }

  std::vector<EventSequence> load(const std::string& path, int num_sensors) const {
    LoadOptions o;
    o.min_incident_hours = min_incident_hours;
    o.num_sensors = num_sensors;
    return load_dataset(path, o);
  }
};

struct EvalFlags {
  int n_sub = 10;
  std::size_t eta = 0;
  int n_pred = 200;
  bool normalize = false;

  void add(CLI::App* app) {
    app->add_option("--n-sub", n_sub, "Trapezoid sub-intervals per piece")->check(CLI::PositiveNumber);
    app->add_option("--eta", eta, "Online attention capacity (0 = full history)");
    app->add_option("--n-pred", n_pred, "Prediction grid points")->check(CLI::Range(2, 1000000));
    app->add_flag("--normalize-density", normalize,
                  "Divide the predicted time by the density mass on [t_n, T]");
  }
  EvalOptions options() const { return {n_sub, eta}; }
  PredictOptions predict() const { return {n_pred, normalize}; }
};

void write_prediction_rows(std::ostream& out, const ModelParams& params, const SpatialContext& sp,
                           const std::vector<EventSequence>& data, const EvalFlags& ef) {
  out << "sequence,prefix_len,t_hat,sensor_hat,t_next,sensor_next\n";
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto& seq = data[s];
    EventSequence prefix;
    prefix.horizon = seq.horizon;
    for (std::size_t i = 0; i <= seq.congestion.size(); ++i) {
      if (i > 0) {
        const double tn = prefix.congestion.back().t;
        prefix.incidents.clear();
        for (const auto& y : seq.incidents)
          if (y.t <= tn) prefix.incidents.push_back(y);
        const auto p = predict_next(params, sp, prefix, ef.predict(), ef.options());
        out << s << ',' << i << ',' << fmt(p.time) << ',' << p.sensor << ',';
        if (i < seq.congestion.size())
          out << fmt(seq.congestion[i].t) << ',' << seq.congestion[i].sensor << '\n';
        else
          out << ",\n";
      }
      if (i < seq.congestion.size()) prefix.congestion.push_back(seq.congestion[i]);
    }
  }
}

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool given(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  for (const auto& a : args)
    if (a == flag || a.rfind(flag + "=", 0) == 0 || (key == "output" && a == "-o")) return true;
  return false;
}

// Replaces `--config FILE` after the subcommand with `--key=value` arguments
// for every key not already on the command line. Lines are `key = value`;
// list values are separated by spaces or commas; `[section]` headers other
// than the subcommand's name are skipped.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  if (args.empty()) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config requires a file");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  const std::string& sub = args[0];
  std::vector<std::string> extra;
  bool active = true;
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(path + ":" + std::to_string(lineno) + ": bad section");
      active = trim(line.substr(1, line.size() - 2)) == sub;
      continue;
    }
    if (!active) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    if (given(args, key)) continue;
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
      extra.push_back("--" + key + "=" + value.substr(1, value.size() - 2));
      continue;
    }
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    std::replace(value.begin(), value.end(), ',', ' ');
    std::istringstream items(value);
    bool any = false;
    for (std::string item; items >> item; any = true) extra.push_back("--" + key + "=" + item);
    if (!any) extra.push_back("--" + key + "=");
  }
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention point process for traffic congestion events", "stpp"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  std::function<void()> action;
  // read by expand_config before parsing; registered here for the help text
  std::string config_path;
  auto config_for = [&config_path](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value file; command-line flags take precedence");
  };

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate synthetic event sequences");
  config_for(sim);
  GeneratorSpec gspec;
  std::string kind = "hawkes";
  std::string sim_out;
  std::string sim_ckpt;
  bool drop_truncated = false;
  SpatialFlags sim_sp;
  sim->add_option("--kind", kind, "hawkes|self-correcting|nonhomo1|nonhomo2|network-hawkes|fitted-model");
  sim->add_option("--mu", gspec.mu, "Background rate");
  sim->add_option("--alpha", gspec.alpha, "Excitation (hawkes, network-hawkes) or drop (self-correcting)");
  sim->add_option("--beta", gspec.beta, "Temporal decay");
  sim->add_option("--c", gspec.c, "Amplitude for nonhomo1");
  sim->add_option("--c1", gspec.c1, "First amplitude for nonhomo2");
  sim->add_option("--c2", gspec.c2, "Second amplitude for nonhomo2");
  sim->add_option("--mu0", gspec.mu0, "Per-sensor background rates (network-hawkes)");
  sim->add_option("--tailup-beta", gspec.tailup.beta, "Tail-up scale (network-hawkes)");
  sim->add_option("--tailup-sigma", gspec.tailup.sigma, "Tail-up range in meters (network-hawkes)");
  sim->add_option("--horizon", gspec.horizon, "Sequence horizon T")->check(CLI::PositiveNumber);
  sim->add_option("--n", gspec.count, "Number of sequences");
  sim->add_option("--cap", gspec.cap, "Maximum events per sequence")->check(CLI::PositiveNumber);
  sim->add_option("--seed", gspec.seed, "Random seed");
  sim->add_option("--ckpt", sim_ckpt, "Checkpoint for fitted-model");
  sim->add_flag("--drop-truncated", drop_truncated, "Omit sequences that hit the cap");
  sim->add_option("-o,--output", sim_out, "Output JSON-lines file")->required();
  sim_sp.add(sim);
  sim->callback([&] {
    action = [&] {
      gspec.kind = parse_generator_kind(kind);
      std::optional<ModelParams> params;
      if (!sim_ckpt.empty()) params = load_checkpoint(sim_ckpt);
      std::optional<SpatialContext> sp;
      if (!sim_sp.network.empty())
        sp = sim_sp.context(params ? params->config().num_sensors : 0);
      else if (params)
        sp = SpatialContext::isolated(params->config().num_sensors);
      const auto gen = generate(gspec, sp ? &*sp : nullptr, params ? &*params : nullptr);
      std::vector<EventSequence> seqs;
      std::size_t truncated = 0;
      for (const auto& g : gen) {
        if (g.truncated) ++truncated;
        if (!(g.truncated && drop_truncated)) seqs.push_back(g.seq);
      }
      save_dataset(seqs, sim_out);
      out << "wrote " << seqs.size() << " sequences to " << sim_out << " (" << truncated
          << " truncated)\n";
    };
  });

  // split
  auto* split = app.add_subcommand("split", "Seeded train/test split of a dataset");
  config_for(split);
  std::string split_in, split_train, split_test;
  double split_ratio = 0.8;
  std::uint64_t split_seed = 0;
  split->add_option("--data", split_in, "Input JSON-lines")->required();
  split->add_option("--ratio", split_ratio, "Training fraction");
  split->add_option("--seed", split_seed, "Random seed");
  split->add_option("--train", split_train, "Training output")->required();
  split->add_option("--test", split_test, "Test output")->required();
  split->callback([&] {
    action = [&] {
      LoadOptions o;
      o.min_incident_hours = 0.0;
      const auto data = load_dataset(split_in, o);
      const auto [tr, te] = split_dataset(data, split_ratio, split_seed);
      save_dataset(tr, split_train);
      save_dataset(te, split_test);
      out << "train " << tr.size() << ", test " << te.size() << '\n';
    };
  });

  // fit
  auto* fitc = app.add_subcommand("fit", "Train the model by maximum likelihood");
  config_for(fitc);
  std::string fit_data, fit_out, fit_trace, fit_init;
  ModelConfig mcfg;
  TrainConfig tcfg;
  int fit_sensors = 0;
  SpatialFlags fit_sp;
  fitc->add_option("--data", fit_data, "Training JSON-lines")->required();
  fitc->add_option("-o,--output", fit_out, "Checkpoint path")->required();
  fitc->add_option("--trace", fit_trace, "Training trace CSV (default: <output>.trace.csv)");
  fitc->add_option("--init", fit_init, "Start from this checkpoint");
  fitc->add_option("--sensors", fit_sensors, "Number of sensors (default: network or data)");
  fitc->add_option("--heads", mcfg.heads, "Attention heads")->check(CLI::PositiveNumber);
  fitc->add_option("--value-dim", mcfg.value_dim, "Value embedding width")->check(CLI::PositiveNumber);
  fitc->add_option("--hidden", mcfg.hidden, "Score network hidden width")->check(CLI::PositiveNumber);
  fitc->add_flag("--temporal-only", mcfg.temporal_only, "Scores ignore spatial correlation");
  fitc->add_option("--sigma-unit", mcfg.sigma_unit_m, "Range scale in meters")->check(CLI::PositiveNumber);
  fitc->add_option("--multipliers", mcfg.background_multipliers, "Time-of-day background multipliers");
  fitc->add_option("--multiplier-bin-hours", mcfg.multiplier_bin_hours, "Multiplier bin width");
  fitc->add_option("--epochs", tcfg.epochs, "Epochs")->check(CLI::PositiveNumber);
  fitc->add_option("--batch", tcfg.batch, "Batch size")->check(CLI::PositiveNumber);
  fitc->add_option("--lr", tcfg.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
  fitc->add_option("--seed", tcfg.seed, "Random seed");
  fitc->add_option("--n-sub", tcfg.n_sub, "Trapezoid sub-intervals per piece")->check(CLI::PositiveNumber);
  fitc->add_option("--eta", tcfg.eta, "Online attention capacity (0 = full history)");
  fitc->add_option("--clip", tcfg.clip, "Global gradient-norm clip")->check(CLI::PositiveNumber);
  fitc->add_option("--threads", tcfg.threads, "Worker threads (default: STPP_THREADS or 1)");
  fit_sp.add(fitc);
  fitc->callback([&] {
    action = [&] {
      std::optional<ModelParams> init;
      if (!fit_init.empty()) init = load_checkpoint(fit_init);
      int K = fit_sensors;
      if (init) K = init->config().num_sensors;
      const auto data = fit_sp.load(fit_data, 0);
      if (K == 0 && !fit_sp.network.empty()) K = static_cast<int>(load_network(fit_sp.network).num_sensors());
      if (K == 0) K = std::max(1, infer_num_sensors(data));
      const SpatialContext sp = fit_sp.context(K);
      mcfg.num_sensors = K;
      ModelParams params = init ? *init : ModelParams::initialize(mcfg, tcfg.seed);
      if (init) tcfg.init_background = false;
      tcfg.checkpoint = fit_out;
      tcfg.trace = fit_trace.empty() ? fit_out + ".trace.csv" : fit_trace;
      tcfg.on_epoch = [&](int epoch, double avg) {
        out << "epoch " << epoch << " avg_loglik " << fmt(avg) << '\n';
      };
      fit(std::move(params), data, sp, tcfg);
    };
  });

  // evaluate
  auto* evalc = app.add_subcommand("evaluate", "Held-out log-likelihood and next-event metrics");
  config_for(evalc);
  std::string ev_data, ev_ckpt, ev_out;
  SpatialFlags ev_sp;
  EvalFlags ev_flags;
  int ev_threads = 0;
  evalc->add_option("--data", ev_data, "Test JSON-lines")->required();
  evalc->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  evalc->add_option("-o,--output", ev_out, "Report JSON (default: stdout)");
  evalc->add_option("--threads", ev_threads, "Worker threads (default: STPP_THREADS or 1)");
  ev_sp.add(evalc);
  ev_flags.add(evalc);
  evalc->callback([&] {
    action = [&] {
      const ModelParams params = load_checkpoint(ev_ckpt);
      const int K = params.config().num_sensors;
      const auto data = ev_sp.load(ev_data, K);
      const SpatialContext sp = ev_sp.context(K);
      EvalConfig cfg;
      cfg.n_sub = ev_flags.n_sub;
      cfg.eta = ev_flags.eta;
      cfg.predict = ev_flags.predict();
      cfg.threads = ev_threads;
      const auto r = evaluate(params, sp, data, cfg);
      std::ostringstream doc;
      doc << "{\"sequences\":" << data.size() << ",\"avg_loglik\":" << fmt(r.avg_loglik)
          << ",\"accuracy\":" << fmt(r.accuracy) << ",\"time_mae\":" << fmt(r.time_mae)
          << ",\"predictions\":" << r.predictions << "}\n";
      if (ev_out.empty()) {
        out << doc.str();
      } else {
        auto f = open_output(ev_out);
        f << doc.str();
      }
    };
  });

  // predict
  auto* pred = app.add_subcommand("predict", "Next-event prediction after every prefix");
  config_for(pred);
  std::string pr_data, pr_ckpt, pr_out;
  SpatialFlags pr_sp;
  EvalFlags pr_flags;
  pred->add_option("--data", pr_data, "JSON-lines")->required();
  pred->add_option("--ckpt", pr_ckpt, "Checkpoint")->required();
  pred->add_option("-o,--output", pr_out, "Output CSV")->required();
  pr_sp.add(pred);
  pr_flags.add(pred);
  pred->callback([&] {
    action = [&] {
      const ModelParams params = load_checkpoint(pr_ckpt);
      const int K = params.config().num_sensors;
      const auto data = pr_sp.load(pr_data, K);
      const SpatialContext sp = pr_sp.context(K);
      for (const auto& s : data) check_compatible(params, sp, s);
      auto f = open_output(pr_out);
      write_prediction_rows(f, params, sp, data, pr_flags);
    };
  });

  // select-events
  auto* sel = app.add_subcommand("select-events", "Online attention retained sets per step");
  config_for(sel);
  std::string se_data, se_ckpt, se_out;
  std::size_t se_eta = 0;
  SpatialFlags se_sp;
  sel->add_option("--data", se_data, "JSON-lines")->required();
  sel->add_option("--ckpt", se_ckpt, "Checkpoint")->required();
  sel->add_option("--eta", se_eta, "Capacity (default: half the longest sequence)")
      ->check(CLI::PositiveNumber);
  sel->add_option("-o,--output", se_out, "Output JSON-lines")->required();
  se_sp.add(sel);
  sel->callback([&] {
    action = [&] {
      const ModelParams params = load_checkpoint(se_ckpt);
      const int K = params.config().num_sensors;
      const auto data = se_sp.load(se_data, K);
      const SpatialContext sp = se_sp.context(K);
      const std::size_t eta = se_eta > 0 ? se_eta : default_online_capacity(data);
      auto f = open_output(se_out);
      for (std::size_t s = 0; s < data.size(); ++s) {
        check_compatible(params, sp, data[s]);
        const auto traj = online_trajectory(params, sp, data[s], eta);
        for (std::size_t step = 1; step < traj.size(); ++step) {
          json row;
          row["sequence"] = s;
          row["step"] = step;
          row["retained"] = traj[step];
          f << row.dump() << '\n';
        }
      }
    };
  });

  // export-intensity
  auto* exi = app.add_subcommand("export-intensity", "Intensity components on a time grid");
  config_for(exi);
  std::string xi_data, xi_ckpt, xi_out;
  std::size_t xi_seq = 0;
  int xi_grid = 200;
  std::vector<int> xi_sensors;
  SpatialFlags xi_sp;
  EvalFlags xi_flags;
  exi->add_option("--data", xi_data, "JSON-lines")->required();
  exi->add_option("--ckpt", xi_ckpt, "Checkpoint")->required();
  exi->add_option("--sequence", xi_seq, "Sequence index");
  exi->add_option("--grid", xi_grid, "Grid points")->check(CLI::PositiveNumber);
  exi->add_option("--sensor", xi_sensors, "Sensors to export (default: all)");
  exi->add_option("-o,--output", xi_out, "Output CSV")->required();
  xi_sp.add(exi);
  xi_flags.add(exi);
  exi->callback([&] {
    action = [&] {
      const ModelParams params = load_checkpoint(xi_ckpt);
      const int K = params.config().num_sensors;
      const auto data = xi_sp.load(xi_data, K);
      if (xi_seq >= data.size()) throw std::out_of_range("sequence index out of range");
      const SpatialContext sp = xi_sp.context(K);
      check_compatible(params, sp, data[xi_seq]);
      std::vector<int> sensors = xi_sensors;
      if (sensors.empty())
        for (int k = 0; k < K; ++k) sensors.push_back(k);
      auto f = open_output(xi_out);
      f << "t,sensor,mu0,mu1,lambda_prime,lambda_star\n";
      for (int k : sensors) {
        const auto tr = intensity_trace(params, sp, data[xi_seq], k, xi_grid, xi_flags.options());
        for (std::size_t g = 0; g < tr.t.size(); ++g) {
          const auto& c = tr.values[g];
          f << fmt(tr.t[g]) << ',' << k << ',' << fmt(c.mu0) << ',' << fmt(c.mu1) << ','
            << fmt(c.lambda_prime) << ',' << fmt(c.total()) << '\n';
        }
      }
    };
  });

  // export-scores
  auto* exs = app.add_subcommand("export-scores", "Normalized attention weights per event pair");
  config_for(exs);
  std::string xs_data, xs_ckpt, xs_out;
  SpatialFlags xs_sp;
  exs->add_option("--data", xs_data, "JSON-lines")->required();
  exs->add_option("--ckpt", xs_ckpt, "Checkpoint")->required();
  exs->add_option("-o,--output", xs_out, "Output CSV")->required();
  xs_sp.add(exs);
  exs->callback([&] {
    action = [&] {
      const ModelParams params = load_checkpoint(xs_ckpt);
      const int K = params.config().num_sensors;
      const auto data = xs_sp.load(xs_data, K);
      const SpatialContext sp = xs_sp.context(K);
      auto f = open_output(xs_out);
      f << "sequence,i,j";
      for (int m = 0; m < params.config().heads; ++m) f << ",w_h" << m;
      f << '\n';
      for (std::size_t s = 0; s < data.size(); ++s) {
        check_compatible(params, sp, data[s]);
        for (const auto& e : score_matrix(params, sp, data[s])) {
          f << s << ',' << e.i << ',' << e.j;
          for (double w : e.weights) f << ',' << fmt(w);
          f << '\n';
        }
      }
    };
  });

  // export-covariance
  auto* exc = app.add_subcommand("export-covariance", "Tail-up correlation between sensors per bin");
  config_for(exc);
  std::string xc_ckpt, xc_out;
  SpatialFlags xc_sp;
  exc->add_option("--ckpt", xc_ckpt, "Checkpoint")->required();
  exc->add_option("-o,--output", xc_out, "Output CSV")->required();
  xc_sp.add(exc);
  exc->callback([&] {
    action = [&] {
      const ModelParams params = load_checkpoint(xc_ckpt);
      const int K = params.config().num_sensors;
      const SpatialContext sp = xc_sp.context(K);
      if (sp.num_sensors() != K) throw DataError("checkpoint and network disagree on sensor count");
      const double width = sp.has_network() ? sp.weights().bin_hours() : 0.0;
      auto f = open_output(xc_out);
      f << "bin_start_h,sensor_i,sensor_j,alpha\n";
      for (std::size_t b = 0; b < sp.num_bins(); ++b) {
        const double t = width * static_cast<double>(b);
        for (int i = 0; i < K; ++i)
          for (int j = 0; j < K; ++j)
            f << fmt(t) << ',' << i << ',' << j << ',' << fmt(sp.sensor_alpha(params.tailup(), t, i, j))
              << '\n';
      }
    };
  });

  // detect
  auto* det = app.add_subcommand("detect", "Threshold count series into congestion events");
  config_for(det);
  std::string dt_counts, dt_out;
  double dt_bin = 5.0;
  std::optional<double> dt_threshold;
  det->add_option("--counts", dt_counts, "Counts CSV (sensor,bin_start_min,count)")->required();
  det->add_option("--bin-minutes", dt_bin, "Bin width in minutes")->check(CLI::PositiveNumber);
  det->add_option("--threshold", dt_threshold, "Count threshold (default: mean + 2 sd per sensor)");
  det->add_option("-o,--output", dt_out, "Output JSON-lines (one sequence)")->required();
  det->callback([&] {
    action = [&] {
      const auto series = load_counts_csv(dt_counts, dt_bin);
      EventSequence seq;
      seq.horizon = 0.0;
      for (const auto& s : series) {
        const double hours = static_cast<double>(s.counts.size()) * s.bin_minutes / 60.0;
        seq.horizon = std::max(seq.horizon, hours);
        const double thr = dt_threshold ? *dt_threshold : default_threshold(s);
        for (const auto& e : detect_congestion(s, thr)) seq.congestion.push_back(e);
      }
      sort_sequence(seq);
      save_dataset({seq}, dt_out);
      out << "detected " << seq.congestion.size() << " events\n";
    };
  });

  try {
    const auto expanded = expand_config(args);
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // help requested on a subcommand
      for (auto* sub : app.get_subcommands()) out << sub->help();
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return 2;
  }
  try {
    if (action) action();
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}

}  // namespace stpp
