#include "stpp/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

#include "stpp/autodiff.hpp"
#include "stpp/random.hpp"

namespace stpp {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("STPP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(std::min<long>(v, 256));
  }
  return 1;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers; the first exception
// by index is rethrown.
template <class F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void write_trace(const std::filesystem::path& path, const std::vector<double>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace: " + path.string());
  out << "epoch,avg_loglik\n";
  char buf[64];
  for (std::size_t e = 0; e < trace.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g\n", e + 1, trace[e]);
    out << buf;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch < 1) throw std::invalid_argument("train: batch must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train: lr must be >= 0");
  if (n_sub < 1) throw std::invalid_argument("train: n_sub must be >= 1");
  if (!(clip > 0.0)) throw std::invalid_argument("train: clip must be positive");
}

std::vector<double> empirical_rates(const std::vector<EventSequence>& data, int num_sensors) {
  std::vector<double> counts(static_cast<std::size_t>(num_sensors), 0.0);
  double exposure = 0.0;
  for (const auto& s : data) {
    exposure += s.horizon;
    for (const auto& e : s.congestion)
      if (e.sensor >= 0 && e.sensor < num_sensors) counts[static_cast<std::size_t>(e.sensor)] += 1.0;
  }
  for (double& c : counts) c = exposure > 0.0 ? std::max(c / exposure, 1e-3) : 1e-3;
  return counts;
}

TrainResult fit(ModelParams init, const std::vector<EventSequence>& data,
                const SpatialContext& spatial, const TrainConfig& config) {
  config.validate();
  if (data.empty()) throw DataError("training data is empty");
  for (const auto& s : data) check_compatible(init, spatial, s);

  TrainResult result{std::move(init), {}};
  ModelParams& params = result.params;
  const int K = params.config().num_sensors;
  if (config.init_background) {
    const auto rates = empirical_rates(data, K);
    for (int k = 0; k < K; ++k) params.set_mu0(k, rates[static_cast<std::size_t>(k)]);
  }

  const int threads = resolve_threads(config.threads);
  EvalOptions opts;
  opts.n_sub = config.n_sub;
  opts.eta = config.eta;

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(splitmix64(config.seed));
  AdamState adam(params.size(), config.lr);
  const auto B = static_cast<std::size_t>(config.batch);
  std::vector<LikelihoodGradient> parts;
  std::vector<double> grad(params.size());

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, rng);
    double sum_ll = 0.0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t n = std::min(B, order.size() - start);
      parts.assign(n, {});
      parallel_for(n, threads, [&](std::size_t i) {
        const std::size_t idx = order[start + i];
        try {
          parts[i] = log_likelihood_gradient(params, spatial, data[idx], opts);
        } catch (const std::domain_error& e) {
          std::ostringstream msg;
          msg << "non-finite loss at sequence " << idx << " (epoch " << epoch
              << ", parameter norm " << norm2(params.values()) << "): " << e.what();
          throw std::runtime_error(msg.str());
        }
      });
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        sum_ll += parts[i].value;
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j] -= parts[i].gradient[j];
      }
      for (double& g : grad) g /= static_cast<double>(n);
      const double gn = norm2(grad);
      if (!std::isfinite(gn)) {
        std::ostringstream msg;
        msg << "non-finite gradient in batch starting at sequence " << order[start] << " (epoch "
            << epoch << ", parameter norm " << norm2(params.values()) << ")";
        throw std::runtime_error(msg.str());
      }
      clip_global_norm(grad, config.clip);
      if (config.lr > 0.0) adam_step(params.values(), grad, adam);
    }
    const double avg = sum_ll / static_cast<double>(data.size());
    result.trace.push_back(avg);
    if (!config.checkpoint.empty()) save_checkpoint(params, config.checkpoint);
    if (!config.trace.empty()) write_trace(config.trace, result.trace);
    if (config.on_epoch) config.on_epoch(epoch, avg);
  }
  return result;
}

EvalReport evaluate_predictor(const Predictor& predict, const std::vector<EventSequence>& test) {
  EvalReport r;
  std::size_t hits = 0;
  double abs_err = 0.0;
  for (const auto& s : test) {
    EventSequence prefix;
    prefix.horizon = s.horizon;
    for (std::size_t i = 0; i < s.congestion.size(); ++i) {
      if (i > 0) {
        const double tn = prefix.congestion.back().t;
        prefix.incidents.clear();
        for (const auto& y : s.incidents)
          if (y.t <= tn) prefix.incidents.push_back(y);
        const auto [t_hat, k_hat] = predict(prefix);
        hits += k_hat == s.congestion[i].sensor ? 1 : 0;
        abs_err += std::abs(t_hat - s.congestion[i].t);
        ++r.predictions;
      }
      prefix.congestion.push_back(s.congestion[i]);
    }
  }
  if (r.predictions > 0) {
    r.accuracy = static_cast<double>(hits) / static_cast<double>(r.predictions);
    r.time_mae = abs_err / static_cast<double>(r.predictions);
  }
  return r;
}

EvalReport evaluate(const ModelParams& params, const SpatialContext& spatial,
                    const std::vector<EventSequence>& test, const EvalConfig& config) {
  if (test.empty()) throw DataError("test data is empty");
  for (const auto& s : test) check_compatible(params, spatial, s);
  EvalOptions opts;
  opts.n_sub = config.n_sub;
  opts.eta = config.eta;
  const int threads = resolve_threads(config.threads);

  std::vector<double> ll(test.size());
  std::vector<EvalReport> per(test.size());
  parallel_for(test.size(), threads, [&](std::size_t i) {
    ll[i] = log_likelihood(params, spatial, test[i], opts);
    const Predictor p = [&](const EventSequence& prefix) {
      const auto pr = predict_next(params, spatial, prefix, config.predict, opts);
      return std::make_pair(pr.time, pr.sensor);
    };
    per[i] = evaluate_predictor(p, {test[i]});
  });

  EvalReport r;
  double hits = 0.0, err = 0.0, sum_ll = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    sum_ll += ll[i];
    hits += per[i].accuracy * static_cast<double>(per[i].predictions);
    err += per[i].time_mae * static_cast<double>(per[i].predictions);
    r.predictions += per[i].predictions;
  }
  r.avg_loglik = sum_ll / static_cast<double>(test.size());
  if (r.predictions > 0) {
    r.accuracy = hits / static_cast<double>(r.predictions);
    r.time_mae = err / static_cast<double>(r.predictions);
  }
  return r;
}

Predictor random_location_predictor(int num_sensors, std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(splitmix64(seed));
  return [rng, num_sensors](const EventSequence& prefix) {
    const int k = static_cast<int>(uniform_index(*rng, static_cast<std::uint64_t>(num_sensors)));
    return std::make_pair(prefix.congestion.empty() ? 0.0 : prefix.congestion.back().t, k);
  };
}

double hawkes_loglik(double mu, double alpha, double beta, const EventSequence& seq) {
  double ll = 0.0;
  double a = 0.0;
  double comp = mu * seq.horizon;
  for (std::size_t i = 0; i < seq.congestion.size(); ++i) {
    const double t = seq.congestion[i].t;
    if (i > 0) a = std::exp(-beta * (t - seq.congestion[i - 1].t)) * (1.0 + a);
    ll += std::log(mu + alpha * beta * a);
    comp += alpha * (1.0 - std::exp(-beta * (seq.horizon - t)));
  }
  return ll - comp;
}

namespace {

template <class S>
S hawkes_loglik_generic(const S& mu, const S& alpha, const S& beta,
                        const std::vector<EventSequence>& data) {
  using std::exp;
  using std::log;
  const S ab = alpha * beta;
  std::optional<S> total;
  auto add = [&](const S& v) { total = total ? *total + v : v; };
  for (const auto& s : data) {
    std::optional<S> a;
    std::optional<S> tail;
    for (std::size_t i = 0; i < s.congestion.size(); ++i) {
      const double t = s.congestion[i].t;
      if (i > 0) {
        const S decay = exp(beta * (s.congestion[i - 1].t - t));
        a = a ? decay * (*a + 1.0) : decay;
      }
      add(a ? S(log(mu + ab * *a)) : S(log(mu)));
      const S left = 1.0 - exp(beta * (t - s.horizon));
      tail = tail ? *tail + left : left;
    }
    add(S(mu * (-s.horizon)));
    if (tail) add(S(-(alpha * *tail)));
  }
  return *total;
}

}  // namespace

HawkesFit fit_hawkes_mle(const std::vector<EventSequence>& data, const HawkesFitOptions& opts) {
  std::size_t events = 0;
  double exposure = 0.0;
  for (const auto& s : data) {
    events += s.congestion.size();
    exposure += s.horizon;
  }
  if (events == 0) throw DataError("degenerate data");
  if (opts.starts < 1 || opts.iterations < 1) throw std::invalid_argument("hawkes fit: bad options");
  const double rate = static_cast<double>(events) / exposure;
  const double scale = static_cast<double>(data.size());

  Rng rng(splitmix64(opts.seed));
  HawkesFit best;
  bool have = false;
  for (int s = 0; s < opts.starts; ++s) {
    std::vector<double> raw = {softplus_inverse(rate * uniform(rng, 0.3, 1.0)),
                               softplus_inverse(uniform(rng, 0.1, 0.9)),
                               softplus_inverse(uniform(rng, 0.5, 3.0))};
    AdamState adam(3, opts.lr);
    auto objective = [&](std::span<const ad::Var> x) {
      const ad::Var ll = hawkes_loglik_generic(softplus(x[0]), softplus(x[1]), softplus(x[2]), data);
      return ll * (-1.0 / scale);
    };
    for (int it = 0; it < opts.iterations; ++it) {
      if (it == (opts.iterations * 3) / 4) adam.lr = opts.lr * 0.1;
      auto [value, grad] = ad::gradient(objective, raw);
      if (!std::isfinite(value)) break;
      adam_step(raw, grad, adam);
    }
    HawkesFit f{softplus(raw[0]), softplus(raw[1]), softplus(raw[2]), 0.0};
    for (const auto& seq : data) f.loglik += hawkes_loglik(f.mu, f.alpha, f.beta, seq);
    if (!std::isfinite(f.loglik)) continue;
    if (!have || f.loglik > best.loglik) {
      best = f;
      have = true;
    }
  }
  if (!have) throw std::runtime_error("hawkes fit: every start diverged");
  return best;
}

double poisson_rate(const std::vector<EventSequence>& data) {
  std::size_t events = 0;
  double exposure = 0.0;
  for (const auto& s : data) {
    events += s.congestion.size();
    exposure += s.horizon;
  }
  if (exposure <= 0.0) throw DataError("poisson rate: empty data");
  return static_cast<double>(events) / exposure;
}

double poisson_loglik(double rate, const EventSequence& seq) {
  return static_cast<double>(seq.congestion.size()) * std::log(rate) - rate * seq.horizon;
}

}  // namespace stpp
