#include "stpp/intensity.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "evaluator.hpp"
#include "stpp/online.hpp"

namespace stpp {

using detail::DoubleBackend;
using detail::Evaluator;
using detail::TapeBackend;

namespace detail {

double multiplier_at(const ModelConfig& c, double t) {
  if (c.background_multipliers.empty()) return 1.0;
  const auto nb = c.background_multipliers.size();
  const double period = c.multiplier_bin_hours * static_cast<double>(nb);
  double r = std::fmod(t, period);
  if (r < 0.0) r += period;
  auto b = static_cast<std::size_t>(std::floor(r / c.multiplier_bin_hours));
  if (b >= nb) b = nb - 1;
  return c.background_multipliers[b];
}

}  // namespace detail

SpatialContext SpatialContext::isolated(int num_sensors) {
  if (num_sensors < 1) throw std::invalid_argument("spatial context: need at least one sensor");
  SpatialContext sp;
  sp.num_sensors_ = num_sensors;
  const auto k2 = static_cast<std::size_t>(num_sensors * num_sensors);
  sp.pairs_.assign(k2, std::nullopt);
  sp.pair_factor_.assign(k2, std::numeric_limits<double>::quiet_NaN());
  for (int k = 0; k < num_sensors; ++k) {
    const auto idx = static_cast<std::size_t>(k * num_sensors + k);
    sp.pairs_[idx] = FlowRelation{0.0, true};
    sp.pair_factor_[idx] = 1.0;
    const double y = num_sensors > 1 ? static_cast<double>(k) / (num_sensors - 1) : 0.0;
    sp.coords_.emplace_back(0.0, y);
  }
  return sp;
}

SpatialContext SpatialContext::from_network(TrafficNetwork net, SegmentWeights weights) {
  if (net.num_sensors() == 0) throw NetworkError("network has no sensors");
  if (weights.num_segments() != net.num_segments())
    throw NetworkError("weights do not match the network");
  SpatialContext sp;
  sp.num_sensors_ = static_cast<int>(net.num_sensors());
  sp.net_ = std::make_shared<const TrafficNetwork>(std::move(net));
  sp.weights_ = std::make_shared<const SegmentWeights>(std::move(weights));
  const auto& n = *sp.net_;
  const auto K = static_cast<std::size_t>(sp.num_sensors_);
  sp.coords_ = n.sensor_coordinates();
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = 0; b < K; ++b)
      sp.pairs_.push_back(flow_relation(n, n.sensor(a).location, n.sensor(b).location));
  const std::size_t nb = sp.weights_->num_bins();
  sp.pair_factor_.assign(nb * K * K, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t bin = 0; bin < nb; ++bin)
    for (std::size_t a = 0; a < K; ++a)
      for (std::size_t b = 0; b < K; ++b) {
        const auto& rel = sp.pairs_[a * K + b];
        if (rel)
          sp.pair_factor_[(bin * K + a) * K + b] =
              sp.weight_factor(bin, n.sensor(a).location, n.sensor(b).location, *rel);
      }
  return sp;
}

std::size_t SpatialContext::num_bins() const { return weights_ ? weights_->num_bins() : 1; }

std::size_t SpatialContext::bin_of(double t) const { return weights_ ? weights_->bin_of(t) : 0; }

std::vector<double> SpatialContext::bin_boundaries(double t0, double t1) const {
  std::vector<double> out;
  if (num_bins() <= 1) return out;
  const double w = weights_->bin_hours();
  for (double x = std::floor(t0 / w) * w + w; x < t1; x += w)
    if (x > t0) out.push_back(x);
  return out;
}

double SpatialContext::weight_factor(std::size_t bin, const NetworkLocation& u,
                                     const NetworkLocation& v, const FlowRelation& rel) const {
  if (!weights_) return 1.0;
  const double wu = weights_->get(bin, net_->segment_index(u.segment));
  const double wv = weights_->get(bin, net_->segment_index(v.segment));
  return std::sqrt(rel.u_upstream ? wu / wv : wv / wu);
}

double SpatialContext::sensor_weight_factor(std::size_t bin, int k, int k2) const {
  const auto K = static_cast<std::size_t>(num_sensors_);
  return pair_factor_[(bin * K + static_cast<std::size_t>(k)) * K + static_cast<std::size_t>(k2)];
}

double SpatialContext::sensor_alpha(const TailupParams& p, double t, int k, int k2) const {
  const auto& rel = sensor_relation(k, k2);
  if (!rel) return 0.0;
  return tailup_covariance(rel->distance_m, p) * sensor_weight_factor(bin_of(t), k, k2);
}

void check_compatible(const ModelParams& params, const SpatialContext& spatial,
                      const EventSequence& seq) {
  const int K = params.config().num_sensors;
  if (spatial.num_sensors() != K)
    throw DataError("model has " + std::to_string(K) + " sensors but the network has " +
                    std::to_string(spatial.num_sensors()));
  validate_sequence(seq, K);
  if (!seq.incidents.empty()) {
    if (!spatial.has_network()) throw DataError("incidents require a road network");
    for (const auto& y : seq.incidents) spatial.network().check_location(y.location);
  }
}

namespace {

Evaluator<DoubleBackend> make_eval(const ModelParams& params, const SpatialContext& spatial,
                                   const EventSequence& seq,
                                   double cutoff = std::numeric_limits<double>::infinity()) {
  return Evaluator<DoubleBackend>(params, spatial, seq, DoubleBackend{&params}, cutoff);
}

void check_sensor(const ModelParams& params, int k) {
  if (k < 0 || k >= params.config().num_sensors)
    throw std::out_of_range("sensor index " + std::to_string(k) + " out of range");
}

OnlineTrajectory trajectory_with(Evaluator<DoubleBackend>& ev, const EventSequence& seq,
                                 int heads, std::size_t eta) {
  OnlineSelection sel(heads, eta);
  OnlineTrajectory traj;
  const auto snapshot = [&] {
    std::vector<std::vector<std::size_t>> sets;
    for (int m = 0; m < heads; ++m) sets.push_back(sel.retained(m));
    traj.push_back(std::move(sets));
  };
  snapshot();
  const auto& times = ev.times();
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    const int k = seq.congestion[i].sensor;
    const auto bin = ev.regime_at(t).bin;
    sel.observe(i, t, [&](int m, std::size_t j) { return ev.raw_score(m, t, k, bin, j); });
    snapshot();
  }
  return traj;
}

}  // namespace

double background(const ModelParams& params, double t, int k) {
  check_sensor(params, k);
  return params.mu0(k) * detail::multiplier_at(params.config(), t);
}

double exogenous(const ModelParams& params, const SpatialContext& spatial,
                 const EventSequence& seq, double t, int k) {
  check_sensor(params, k);
  auto ev = make_eval(params, spatial, seq);
  return ev.mu1(k, ev.regime_at(t)).value_or(0.0);
}

IntensityComponents intensity_components(const ModelParams& params, const SpatialContext& spatial,
                                         const EventSequence& seq, double t, int k,
                                         const EvalOptions& opts) {
  check_sensor(params, k);
  auto ev = make_eval(params, spatial, seq);
  OnlineTrajectory traj;
  if (opts.eta > 0) traj = trajectory_with(ev, seq, params.config().heads, opts.eta);
  const auto r = ev.regime_at(t);
  const auto h = ev.history_before(t, opts.eta > 0 ? &traj : nullptr);
  IntensityComponents c;
  c.mu0 = ev.mu0(k, r);
  c.mu1 = ev.mu1(k, r).value_or(0.0);
  c.lambda_prime = ev.lambda_prime(t, k, r, h).value_or(0.0);
  return c;
}

double intensity(const ModelParams& params, const SpatialContext& spatial,
                 const EventSequence& seq, double t, int k, const EvalOptions& opts) {
  check_sensor(params, k);
  auto ev = make_eval(params, spatial, seq);
  OnlineTrajectory traj;
  if (opts.eta > 0) traj = trajectory_with(ev, seq, params.config().heads, opts.eta);
  return ev.intensity(t, k, ev.regime_at(t), ev.history_before(t, opts.eta > 0 ? &traj : nullptr));
}

double compensator(const ModelParams& params, const SpatialContext& spatial,
                   const EventSequence& seq, int k, double t0, double t1,
                   const EvalOptions& opts) {
  check_sensor(params, k);
  auto ev = make_eval(params, spatial, seq);
  OnlineTrajectory traj;
  if (opts.eta > 0) traj = trajectory_with(ev, seq, params.config().heads, opts.eta);
  return ev.compensator(k, t0, t1, opts.n_sub, opts.eta > 0 ? &traj : nullptr);
}

double log_likelihood(const ModelParams& params, const SpatialContext& spatial,
                      const EventSequence& seq, const EvalOptions& opts) {
  auto ev = make_eval(params, spatial, seq);
  OnlineTrajectory traj;
  if (opts.eta > 0) traj = trajectory_with(ev, seq, params.config().heads, opts.eta);
  return ev.log_likelihood(opts.n_sub, opts.eta > 0 ? &traj : nullptr);
}

LikelihoodGradient log_likelihood_gradient(const ModelParams& params, const SpatialContext& spatial,
                                           const EventSequence& seq, const EvalOptions& opts) {
  OnlineTrajectory traj;
  if (opts.eta > 0) {
    auto dev = make_eval(params, spatial, seq);
    traj = trajectory_with(dev, seq, params.config().heads, opts.eta);
  }
  ad::Tape tape;
  tape.reserve(params.size() + 64 * (seq.congestion.size() + 1) * (seq.congestion.size() + 1));
  const std::uint32_t first = tape.leaves(params.values());
  Evaluator<TapeBackend> ev(params, spatial, seq, TapeBackend{&params, &tape, first});
  const ad::Var ll = ev.log_likelihood(opts.n_sub, opts.eta > 0 ? &traj : nullptr);
  LikelihoodGradient out;
  out.value = tape.value(ll);
  if (!std::isfinite(out.value)) throw std::domain_error("non-finite log-likelihood");
  tape.backward(ll);
  const auto adj = tape.adjoints(first, params.size());
  out.gradient.assign(adj.begin(), adj.end());
  return out;
}

double conditional_density(const ModelParams& params, const SpatialContext& spatial,
                           const EventSequence& prefix, double t, int k,
                           const EvalOptions& opts) {
  check_sensor(params, k);
  const double tn = prefix.congestion.empty() ? 0.0 : prefix.congestion.back().t;
  if (t < tn) throw std::invalid_argument("conditional density: t precedes the last event");
  auto ev = make_eval(params, spatial, prefix, tn);
  OnlineTrajectory traj;
  if (opts.eta > 0) traj = trajectory_with(ev, prefix, params.config().heads, opts.eta);
  const auto* tp = opts.eta > 0 ? &traj : nullptr;
  const auto h = ev.history_upto(tn, tp);
  const double lam = ev.intensity(t, k, ev.regime_at(t), h);
  return lam * std::exp(-ev.compensator(k, tn, t, opts.n_sub, tp));
}

Prediction predict_next(const ModelParams& params, const SpatialContext& spatial,
                        const EventSequence& prefix, const PredictOptions& popts,
                        const EvalOptions& opts) {
  if (popts.n_pred < 2) throw std::invalid_argument("predict: n_pred must be >= 2");
  const int K = params.config().num_sensors;
  const double tn = prefix.congestion.empty() ? 0.0 : prefix.congestion.back().t;
  const double T = prefix.horizon;
  auto ev = make_eval(params, spatial, prefix, tn);
  OnlineTrajectory traj;
  if (opts.eta > 0) traj = trajectory_with(ev, prefix, params.config().heads, opts.eta);
  const auto h = ev.history_upto(tn, opts.eta > 0 ? &traj : nullptr);

  const auto n = static_cast<std::size_t>(popts.n_pred);
  std::vector<double> grid(n);
  const double step = (T - tn) / static_cast<double>(n - 1);
  for (std::size_t g = 0; g < n; ++g) grid[g] = g + 1 == n ? T : tn + step * static_cast<double>(g);
  std::vector<typename Evaluator<DoubleBackend>::Regime> regimes;
  regimes.reserve(n);
  for (double tau : grid) regimes.push_back(ev.regime_at(tau));

  Prediction out;
  out.sensor_mass.assign(static_cast<std::size_t>(K), 0.0);
  std::vector<double> total_f(n, 0.0);
  const bool shared = params.config().temporal_only;
  std::vector<double> lp_shared;
  if (shared) {
    lp_shared.resize(n);
    for (std::size_t g = 0; g < n; ++g)
      lp_shared[g] = ev.lambda_prime(grid[g], 0, regimes[g], h).value_or(0.0);
  }
  for (int k = 0; k < K; ++k) {
    double cum = 0.0;
    double prev_lam = 0.0;
    double prev_f = 0.0;
    double mass = 0.0;
    for (std::size_t g = 0; g < n; ++g) {
      const auto& r = regimes[g];
      double lam = ev.mu0(k, r) + ev.mu1(k, r).value_or(0.0);
      lam += shared ? lp_shared[g] : ev.lambda_prime(grid[g], k, r, h).value_or(0.0);
      if (g > 0) cum += 0.5 * (grid[g] - grid[g - 1]) * (lam + prev_lam);
      const double f = lam * std::exp(-cum);
      if (g > 0) mass += 0.5 * (grid[g] - grid[g - 1]) * (f + prev_f);
      total_f[g] += f;
      prev_lam = lam;
      prev_f = f;
    }
    out.sensor_mass[static_cast<std::size_t>(k)] = mass;
  }
  double t_hat = 0.0;
  double total_mass = 0.0;
  for (std::size_t g = 1; g < n; ++g) {
    const double dg = grid[g] - grid[g - 1];
    t_hat += 0.5 * dg * (grid[g] * total_f[g] + grid[g - 1] * total_f[g - 1]);
    total_mass += 0.5 * dg * (total_f[g] + total_f[g - 1]);
  }
  if (popts.normalize_density && total_mass > 0.0) t_hat /= total_mass;
  out.time = t_hat;
  out.sensor = 0;
  for (int k = 1; k < K; ++k)
    if (out.sensor_mass[static_cast<std::size_t>(k)] > out.sensor_mass[static_cast<std::size_t>(out.sensor)])
      out.sensor = k;
  return out;
}

IntensityTrace intensity_trace(const ModelParams& params, const SpatialContext& spatial,
                               const EventSequence& seq, int k, int n_grid,
                               const EvalOptions& opts) {
  check_sensor(params, k);
  if (n_grid < 1) throw std::invalid_argument("intensity trace: n_grid must be >= 1");
  auto ev = make_eval(params, spatial, seq);
  OnlineTrajectory traj;
  if (opts.eta > 0) traj = trajectory_with(ev, seq, params.config().heads, opts.eta);
  IntensityTrace out;
  out.sensor = k;
  for (int g = 0; g < n_grid; ++g) {
    const double t = seq.horizon * g / n_grid;
    const auto r = ev.regime_at(t);
    const auto h = ev.history_before(t, opts.eta > 0 ? &traj : nullptr);
    IntensityComponents c;
    c.mu0 = ev.mu0(k, r);
    c.mu1 = ev.mu1(k, r).value_or(0.0);
    c.lambda_prime = ev.lambda_prime(t, k, r, h).value_or(0.0);
    out.t.push_back(t);
    out.values.push_back(c);
  }
  return out;
}

std::vector<ScoreEntry> score_matrix(const ModelParams& params, const SpatialContext& spatial,
                                     const EventSequence& seq) {
  auto ev = make_eval(params, spatial, seq);
  const int M = params.config().heads;
  const auto& times = ev.times();
  std::vector<ScoreEntry> out;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double t = times[i];
    const int k = seq.congestion[i].sensor;
    const auto bin = ev.regime_at(t).bin;
    const std::size_t first = out.size();
    for (std::size_t j = 0; j < i; ++j) out.push_back({i, j, std::vector<double>(static_cast<std::size_t>(M), 0.0)});
    for (int m = 0; m < M; ++m) {
      double total = 0.0;
      for (std::size_t j = 0; j < i && times[j] < t; ++j) {
        const double u = ev.raw_score(m, t, k, bin, j);
        out[first + j].weights[static_cast<std::size_t>(m)] = u;
        total += u;
      }
      if (total > 0.0)
        for (std::size_t j = 0; j < i; ++j) out[first + j].weights[static_cast<std::size_t>(m)] /= total;
    }
  }
  return out;
}

OnlineTrajectory online_trajectory(const ModelParams& params, const SpatialContext& spatial,
                                   const EventSequence& seq, std::size_t eta) {
  auto ev = make_eval(params, spatial, seq);
  return trajectory_with(ev, seq, params.config().heads, eta);
}

double online_intensity(const ModelParams& params, const SpatialContext& spatial,
                        const EventSequence& seq, double t, int k, std::size_t eta) {
  EvalOptions opts;
  opts.eta = eta;
  return intensity(params, spatial, seq, t, k, opts);
}

std::size_t default_online_capacity(const std::vector<EventSequence>& data) {
  std::size_t longest = 0;
  for (const auto& s : data) longest = std::max(longest, s.congestion.size());
  return std::max<std::size_t>(1, (longest + 1) / 2);
}

}  // namespace stpp
