#include "stpp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace stpp {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double round9(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return std::strtod(buf, nullptr);
}

double total(std::span<const double> r) {
  double s = 0.0;
  for (double v : r) s += v;
  return s;
}

}  // namespace

HawkesModel::HawkesModel(double mu, double alpha, double beta) : mu_(mu), alpha_(alpha), beta_(beta) {
  if (!(mu > 0.0) || !(alpha >= 0.0) || !(beta > 0.0))
    throw std::invalid_argument("hawkes: need mu > 0, alpha >= 0, beta > 0");
}

void HawkesModel::rates(double t, const EventSequence& h, std::span<double> out) const {
  double s = 0.0;
  for (const auto& e : h.congestion)
    if (e.t < t) s += std::exp(-beta_ * (t - e.t));
  out[0] = mu_ + alpha_ * beta_ * s;
}

double HawkesModel::integrated(int, double a, double b, const EventSequence& h) const {
  double s = 0.0;
  for (const auto& e : h.congestion)
    if (e.t <= a) s += std::exp(-beta_ * (a - e.t)) - std::exp(-beta_ * (b - e.t));
  return mu_ * (b - a) + alpha_ * s;
}

SelfCorrectingModel::SelfCorrectingModel(double mu, double alpha) : mu_(mu), alpha_(alpha) {
  if (!(mu > 0.0) || !(alpha >= 0.0))
    throw std::invalid_argument("self-correcting: need mu > 0, alpha >= 0");
}

void SelfCorrectingModel::rates(double t, const EventSequence& h, std::span<double> out) const {
  std::size_t n = 0;
  for (const auto& e : h.congestion)
    if (e.t < t) ++n;
  out[0] = std::exp(mu_ * t - alpha_ * static_cast<double>(n));
}

double SelfCorrectingModel::integrated(int, double a, double b, const EventSequence& h) const {
  std::size_t n = 0;
  for (const auto& e : h.congestion)
    if (e.t <= a) ++n;
  return std::exp(-alpha_ * static_cast<double>(n)) * (std::exp(mu_ * b) - std::exp(mu_ * a)) / mu_;
}

NormalBumpModel::NormalBumpModel(std::vector<Bump> bumps) : bumps_(std::move(bumps)) {
  for (const auto& b : bumps_)
    if (!(b.amplitude >= 0.0) || !(b.scale > 0.0))
      throw std::invalid_argument("nonhomogeneous: amplitudes must be >= 0 and scales > 0");
}

void NormalBumpModel::rates(double t, const EventSequence&, std::span<double> out) const {
  double s = 0.0;
  for (const auto& b : bumps_) s += b.amplitude * normal_pdf(b.scale * (t - b.center));
  out[0] = s;
}

double NormalBumpModel::integrated(int, double a, double b, const EventSequence&) const {
  double s = 0.0;
  for (const auto& u : bumps_)
    s += u.amplitude * (normal_cdf(u.scale * (b - u.center)) - normal_cdf(u.scale * (a - u.center))) /
         u.scale;
  return s;
}

NetworkHawkesModel::NetworkHawkesModel(std::vector<double> mu, std::vector<double> gain, double beta)
    : mu_(std::move(mu)), gain_(std::move(gain)), beta_(beta) {
  if (mu_.empty()) throw std::invalid_argument("network hawkes: need at least one sensor");
  if (gain_.size() != mu_.size() * mu_.size())
    throw std::invalid_argument("network hawkes: gain matrix must be K x K");
  for (double m : mu_)
    if (!(m > 0.0)) throw std::invalid_argument("network hawkes: background rates must be positive");
  for (double g : gain_)
    if (!(g >= 0.0)) throw std::invalid_argument("network hawkes: gains must be non-negative");
  if (!(beta > 0.0)) throw std::invalid_argument("network hawkes: beta must be positive");
}

void NetworkHawkesModel::rates(double t, const EventSequence& h, std::span<double> out) const {
  const auto K = mu_.size();
  for (std::size_t k = 0; k < K; ++k) out[k] = mu_[k];
  for (const auto& e : h.congestion) {
    if (!(e.t < t)) continue;
    const double d = beta_ * std::exp(-beta_ * (t - e.t));
    for (std::size_t k = 0; k < K; ++k) out[k] += gain_[k * K + static_cast<std::size_t>(e.sensor)] * d;
  }
}

double NetworkHawkesModel::integrated(int k, double a, double b, const EventSequence& h) const {
  double s = mu_[static_cast<std::size_t>(k)] * (b - a);
  for (const auto& e : h.congestion) {
    if (!(e.t <= a)) continue;
    s += gain(k, e.sensor) * (std::exp(-beta_ * (a - e.t)) - std::exp(-beta_ * (b - e.t)));
  }
  return s;
}

FittedModel::FittedModel(const ModelParams& params, const SpatialContext& spatial,
                         std::vector<IncidentEvent> incidents, int n_sub)
    : params_(params), spatial_(spatial), incidents_(std::move(incidents)), n_sub_(n_sub) {}

EventSequence FittedModel::with_incidents(const EventSequence& h) const {
  EventSequence s;
  s.horizon = h.horizon;
  s.congestion = h.congestion;
  s.incidents = incidents_;
  return s;
}

void FittedModel::rates(double t, const EventSequence& h, std::span<double> out) const {
  const auto s = with_incidents(h);
  for (int k = 0; k < num_sensors(); ++k) out[static_cast<std::size_t>(k)] = intensity(params_, spatial_, s, t, k);
}

double FittedModel::integrated(int k, double a, double b, const EventSequence& h) const {
  EvalOptions opts;
  opts.n_sub = n_sub_;
  return compensator(params_, spatial_, with_incidents(h), k, a, b, opts);
}

Simulated thinning_simulate(const IntensityModel& model, double horizon, Rng& rng,
                            const ThinningOptions& opts) {
  if (!(horizon > 0.0)) throw std::invalid_argument("thinning: horizon must be positive");
  if (opts.cap < 1) throw std::invalid_argument("thinning: cap must be >= 1");
  if (opts.probes < 2) throw std::invalid_argument("thinning: need at least two probes");
  const auto K = static_cast<std::size_t>(model.num_sensors());
  const double base_window = opts.window > 0.0 ? opts.window : horizon / 10.0;
  Simulated out;
  out.seq.horizon = horizon;
  std::vector<double> r(K);
  double t = 0.0;
  double window = base_window;
  while (t < horizon) {
    const double end = std::min(t + window, horizon);
    double peak = 0.0;
    for (int p = 0; p < opts.probes; ++p) {
      const double tau = t + (end - t) * p / (opts.probes - 1);
      model.rates(tau, out.seq, r);
      peak = std::max(peak, total(r));
    }
    const double bound = opts.bound_factor * peak;
    if (!(bound > 0.0)) {
      t = end;
      continue;
    }
    const double tau = t + exponential(rng, bound);
    if (tau >= end) {
      t = end;
      continue;
    }
    model.rates(tau, out.seq, r);
    const double lam = total(r);
    if (lam > bound) {
      window *= 0.5;  // bound violated: retry from t with a shorter lookahead
      continue;
    }
    const double u = uniform01(rng);
    if (u * bound >= lam) {
      t = tau;
      continue;
    }
    // accepted: pick the sensor proportionally to its rate
    double pick = uniform01(rng) * lam;
    std::size_t k = 0;
    while (k + 1 < K && pick >= r[k]) {
      pick -= r[k];
      ++k;
    }
    t = tau;
    const double stamp = round9(tau);
    const double last = out.seq.congestion.empty() ? -1.0 : out.seq.congestion.back().t;
    if (stamp >= horizon || stamp <= last) continue;
    if (out.seq.congestion.size() >= opts.cap) {
      out.truncated = true;
      break;
    }
    out.seq.congestion.push_back({stamp, static_cast<int>(k)});
    window = base_window;
  }
  return out;
}

GeneratorKind parse_generator_kind(const std::string& name) {
  if (name == "hawkes") return GeneratorKind::kHawkes;
  if (name == "self-correcting") return GeneratorKind::kSelfCorrecting;
  if (name == "nonhomo1") return GeneratorKind::kNonhomo1;
  if (name == "nonhomo2") return GeneratorKind::kNonhomo2;
  if (name == "network-hawkes") return GeneratorKind::kNetworkHawkes;
  if (name == "fitted-model") return GeneratorKind::kFittedModel;
  throw std::invalid_argument("unknown generator kind '" + name + "'");
}

std::string generator_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::kHawkes: return "hawkes";
    case GeneratorKind::kSelfCorrecting: return "self-correcting";
    case GeneratorKind::kNonhomo1: return "nonhomo1";
    case GeneratorKind::kNonhomo2: return "nonhomo2";
    case GeneratorKind::kNetworkHawkes: return "network-hawkes";
    case GeneratorKind::kFittedModel: return "fitted-model";
  }
  return "unknown";
}

void GeneratorSpec::validate() const {
  if (!(horizon > 0.0)) throw std::invalid_argument("generator: horizon must be positive");
  if (cap < 1) throw std::invalid_argument("generator: cap must be >= 1");
  switch (kind) {
    case GeneratorKind::kHawkes:
    case GeneratorKind::kNetworkHawkes:
      if (!(mu > 0.0) || !(alpha >= 0.0) || !(beta > 0.0))
        throw std::invalid_argument("generator: need mu > 0, alpha >= 0, beta > 0");
      break;
    case GeneratorKind::kSelfCorrecting:
      if (!(mu > 0.0) || !(alpha >= 0.0))
        throw std::invalid_argument("generator: need mu > 0, alpha >= 0");
      break;
    case GeneratorKind::kNonhomo1:
      if (!(c >= 0.0)) throw std::invalid_argument("generator: need c >= 0");
      break;
    case GeneratorKind::kNonhomo2:
      if (!(c1 >= 0.0) || !(c2 >= 0.0)) throw std::invalid_argument("generator: need c1, c2 >= 0");
      break;
    case GeneratorKind::kFittedModel: break;
  }
}

std::vector<double> network_gains(const SpatialContext& spatial, double alpha,
                                  const TailupParams& tailup) {
  const int K = spatial.num_sensors();
  std::vector<double> g(static_cast<std::size_t>(K * K), 0.0);
  for (int k = 0; k < K; ++k)
    for (int from = 0; from < K; ++from)
      g[static_cast<std::size_t>(k * K + from)] = alpha * spatial.sensor_alpha(tailup, 0.0, from, k);
  return g;
}

std::vector<GeneratedSequence> generate(const GeneratorSpec& spec, const SpatialContext* spatial,
                                        const ModelParams* params) {
  spec.validate();
  if ((spec.kind == GeneratorKind::kNetworkHawkes || spec.kind == GeneratorKind::kFittedModel) &&
      spatial == nullptr)
    throw std::invalid_argument("generator: " + generator_name(spec.kind) + " needs a network");
  if (spec.kind == GeneratorKind::kFittedModel && params == nullptr)
    throw std::invalid_argument("generator: fitted-model needs a checkpoint");

  std::shared_ptr<const IntensityModel> shared;
  switch (spec.kind) {
    case GeneratorKind::kHawkes:
      shared = std::make_shared<HawkesModel>(spec.mu, spec.alpha, spec.beta);
      break;
    case GeneratorKind::kSelfCorrecting:
      shared = std::make_shared<SelfCorrectingModel>(spec.mu, spec.alpha);
      break;
    case GeneratorKind::kNetworkHawkes: {
      const auto K = static_cast<std::size_t>(spatial->num_sensors());
      std::vector<double> mu0 = spec.mu0.empty() ? std::vector<double>(K, spec.mu) : spec.mu0;
      if (mu0.size() != K) throw std::invalid_argument("generator: mu0 needs one rate per sensor");
      shared = std::make_shared<NetworkHawkesModel>(std::move(mu0),
                                                    network_gains(*spatial, spec.alpha, spec.tailup),
                                                    spec.beta);
      break;
    }
    case GeneratorKind::kFittedModel:
      if (params->config().num_sensors != spatial->num_sensors())
        throw std::invalid_argument("generator: checkpoint and network disagree on sensor count");
      shared = std::make_shared<FittedModel>(*params, *spatial, std::vector<IncidentEvent>{});
      break;
    default: break;
  }

  ThinningOptions topts;
  topts.cap = spec.cap;
  std::vector<GeneratedSequence> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    Rng rng = derived_rng(spec.seed, i);
    std::shared_ptr<const IntensityModel> truth = shared;
    if (spec.kind == GeneratorKind::kNonhomo1) {
      const double u = uniform01(rng);
      truth = std::make_shared<NormalBumpModel>(
          std::vector<NormalBumpModel::Bump>{{spec.c * u, 1.0, 0.5}});
    } else if (spec.kind == GeneratorKind::kNonhomo2) {
      const double u1 = uniform01(rng);
      const double u2 = uniform01(rng);
      truth = std::make_shared<NormalBumpModel>(std::vector<NormalBumpModel::Bump>{
          {spec.c1 * u1, 6.0, 0.35}, {spec.c2 * u2, 6.0, 0.75}});
    }
    auto sim = thinning_simulate(*truth, spec.horizon, rng, topts);
    out.push_back({std::move(sim.seq), sim.truncated, truth});
  }
  return out;
}

}  // namespace stpp
