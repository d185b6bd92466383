#pragma once

// Intensity evaluation shared by the double-valued paths (prediction,
// traces, simulation) and the taped path used for gradients. The backend
// decides what a scalar is; the arithmetic is written once.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "stpp/autodiff.hpp"
#include "stpp/intensity.hpp"

namespace stpp::detail {

double multiplier_at(const ModelConfig& c, double t);

struct DoubleBackend {
  using S = double;
  const ModelParams* params;

  [[nodiscard]] double param(std::size_t i) const { return params->values()[i]; }
  [[nodiscard]] double zero() const { return 0.0; }
  [[nodiscard]] double score(int m, double dt, const double* alpha) const {
    const auto shape = params->mlp_shape();
    const double x[2] = {dt, alpha != nullptr ? *alpha : 0.0};
    return ad::mlp_forward(shape, params->mlp_block(m),
                           std::span<const double>(x, static_cast<std::size_t>(shape.input_dim)));
  }
};

struct TapeBackend {
  using S = ad::Var;
  const ModelParams* params;
  ad::Tape* tape;
  std::uint32_t first;

  [[nodiscard]] ad::Var param(std::size_t i) const {
    return tape->at(first + static_cast<std::uint32_t>(i));
  }
  [[nodiscard]] ad::Var zero() const { return tape->constant(0.0); }
  [[nodiscard]] ad::Var score(int m, double dt, const ad::Var* alpha) const {
    const auto shape = params->mlp_shape();
    const double x[2] = {dt, 0.0};
    const std::uint32_t nodes[2] = {ad::Tape::kNoNode,
                                    alpha != nullptr ? alpha->index : ad::Tape::kNoNode};
    const auto n = static_cast<std::size_t>(shape.input_dim);
    return tape->mlp(shape, params->mlp_block(m),
                     first + static_cast<std::uint32_t>(params->mlp_offset(m)),
                     std::span<const double>(x, n), std::span<const std::uint32_t>(nodes, n));
  }
};

template <class S>
void accumulate(std::optional<S>& acc, const S& v) {
  if (acc) {
    acc = *acc + v;
  } else {
    acc = v;
  }
}

template <class B>
class Evaluator {
 public:
  using S = typename B::S;
  using HeadSets = std::vector<std::vector<std::size_t>>;

  struct Regime {
    std::size_t bin = 0;
    double mult = 1.0;
    std::vector<std::size_t> active;  // incident indices
  };

  struct History {
    std::size_t prefix = 0;            // events [0, prefix)
    const HeadSets* heads = nullptr;   // online sets when set
    [[nodiscard]] bool empty() const { return prefix == 0; }
  };

  Evaluator(const ModelParams& params, const SpatialContext& spatial, const EventSequence& seq,
            B backend, double incident_cutoff = std::numeric_limits<double>::infinity())
      : p_(params), sp_(spatial), seq_(seq), be_(backend), cutoff_(incident_cutoff) {
    const auto& c = p_.config();
    k_ = c.num_sensors;
    heads_ = c.heads;
    n_ = seq_.congestion.size();
    times_.reserve(n_);
    for (const auto& e : seq_.congestion) times_.push_back(e.t);
    mu0_.resize(static_cast<std::size_t>(k_));
    alpha_pair_.resize(sp_.num_bins() * static_cast<std::size_t>(k_ * k_));
    if (!seq_.incidents.empty()) {
      if (!sp_.has_network()) throw DataError("incidents require a road network");
      const auto& net = sp_.network();
      inc_rel_.resize(static_cast<std::size_t>(k_) * seq_.incidents.size());
      for (int k = 0; k < k_; ++k)
        for (std::size_t j = 0; j < seq_.incidents.size(); ++j)
          inc_rel_[static_cast<std::size_t>(k) * seq_.incidents.size() + j] =
              flow_relation(net, net.sensor(static_cast<std::size_t>(k)).location,
                            seq_.incidents[j].location);
      alpha_inc_.resize(sp_.num_bins() * inc_rel_.size());
    }
  }

  [[nodiscard]] std::size_t size() const { return n_; }
  [[nodiscard]] const std::vector<double>& times() const { return times_; }

  Regime regime_at(double t) const {
    Regime r;
    const double horizon = seq_.horizon;
    const double tb = t >= horizon ? std::nextafter(horizon, 0.0) : t;
    r.bin = sp_.bin_of(tb);
    r.mult = multiplier_at(p_.config(), tb);
    for (std::size_t j = 0; j < seq_.incidents.size(); ++j) {
      const auto& y = seq_.incidents[j];
      if (y.t <= cutoff_ && y.t <= t && t < y.t + y.z) r.active.push_back(j);
    }
    return r;
  }

  // Events strictly before t.
  History history_before(double t, const std::vector<HeadSets>* traj) const {
    const auto n = static_cast<std::size_t>(
        std::lower_bound(times_.begin(), times_.end(), t) - times_.begin());
    return {n, traj != nullptr ? &(*traj)[n] : nullptr};
  }
  // Events at or before t (right limit).
  History history_upto(double t, const std::vector<HeadSets>* traj) const {
    const auto n = static_cast<std::size_t>(
        std::upper_bound(times_.begin(), times_.end(), t) - times_.begin());
    return {n, traj != nullptr ? &(*traj)[n] : nullptr};
  }

  S mu0(int k, const Regime& r) {
    auto& m = mu0_[static_cast<std::size_t>(k)];
    if (!m) m = softplus(be_.param(p_.mu0_offset() + static_cast<std::size_t>(k)));
    return r.mult == 1.0 ? *m : *m * r.mult;
  }

  std::optional<S> mu1(int k, const Regime& r) {
    std::optional<S> acc;
    for (std::size_t j : r.active) {
      const auto a = alpha_incident(r.bin, k, j);
      if (a) accumulate(acc, S(gamma() * *a));
    }
    return acc;
  }

  // Tail-up correlation between sensor k (query) and sensor k2 (past event).
  const std::optional<S>& alpha_sensor(std::size_t bin, int k, int k2) {
    auto& slot = alpha_pair_[(bin * static_cast<std::size_t>(k_) + static_cast<std::size_t>(k)) *
                                 static_cast<std::size_t>(k_) +
                             static_cast<std::size_t>(k2)];
    if (!slot.done) {
      slot.done = true;
      const auto& rel = sp_.sensor_relation(k, k2);
      if (rel) slot.value = tailup(rel->distance_m, sp_.sensor_weight_factor(bin, k, k2));
    }
    return slot.value;
  }

  const std::optional<S>& alpha_incident(std::size_t bin, int k, std::size_t j) {
    const std::size_t idx = static_cast<std::size_t>(k) * seq_.incidents.size() + j;
    auto& slot = alpha_inc_[bin * inc_rel_.size() + idx];
    if (!slot.done) {
      slot.done = true;
      const auto& rel = inc_rel_[idx];
      if (rel) {
        const auto& loc = sp_.network().sensor(static_cast<std::size_t>(k)).location;
        slot.value = tailup(rel->distance_m,
                            sp_.weight_factor(bin, loc, seq_.incidents[j].location, *rel));
      }
    }
    return slot.value;
  }

  // Unnormalized score of past event j seen from a query at (t, k).
  S raw_score(int m, double t, int k, std::size_t bin, std::size_t j) {
    const double dt = t - times_[j];
    if (p_.config().temporal_only) return be_.score(m, dt, nullptr);
    const auto& a = alpha_sensor(bin, k, seq_.congestion[j].sensor);
    return be_.score(m, dt, a ? &*a : nullptr);
  }

  std::optional<S> lambda_prime(double t, int k, const Regime& r, const History& h) {
    if (h.empty()) return std::nullopt;
    ensure_values();
    S total = be_.param(p_.bias_index());
    for (int m = 0; m < heads_; ++m) {
      std::optional<S> num;
      std::optional<S> den;
      auto visit = [&](std::size_t j) {
        const S u = raw_score(m, t, k, r.bin, j);
        accumulate(num, S(u * c_[static_cast<std::size_t>(m) * n_ + j]));
        accumulate(den, u);
      };
      if (h.heads != nullptr) {
        for (std::size_t j : (*h.heads)[static_cast<std::size_t>(m)]) visit(j);
      } else {
        for (std::size_t j = 0; j < h.prefix; ++j) visit(j);
      }
      if (num) total = total + *num / *den;
    }
    return softplus(total);
  }

  S intensity(double t, int k, const Regime& r, const History& h) {
    std::optional<S> acc = mu0(k, r);
    if (auto v = mu1(k, r)) accumulate(acc, *v);
    if (auto v = lambda_prime(t, k, r, h)) accumulate(acc, *v);
    return *acc;
  }

  // Integral over [t0, t1] of the background and promotion terms when
  // `base` is set, plus the self-excitation term when `excitation` is set.
  std::optional<S> integrate(int k, double t0, double t1, int n_sub,
                             const std::vector<HeadSets>* traj, bool base, bool excitation) {
    if (n_sub < 1) throw std::invalid_argument("compensator: n_sub must be >= 1");
    if (!(t0 <= t1)) throw std::invalid_argument("compensator: need t0 <= t1");
    const auto cuts = breakpoints(t0, t1);
    std::optional<S> total;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double a = cuts[c];
      const double b = cuts[c + 1];
      if (!(b > a)) continue;
      const Regime r = regime_at(0.5 * (a + b));
      if (base) {
        S level = mu0(k, r);
        if (auto v = mu1(k, r)) level = level + *v;
        accumulate(total, S(level * (b - a)));
      }
      if (!excitation) continue;
      const History h = history_upto(a, traj);
      if (h.empty()) continue;
      const double step = (b - a) / n_sub;
      for (int g = 0; g <= n_sub; ++g) {
        const double tau = g == n_sub ? b : a + step * g;
        const double w = (g == 0 || g == n_sub) ? 0.5 * step : step;
        if (auto v = lambda_prime(tau, k, r, h)) accumulate(total, S(*v * w));
      }
    }
    return total;
  }

  S compensator(int k, double t0, double t1, int n_sub, const std::vector<HeadSets>* traj) {
    auto v = integrate(k, t0, t1, n_sub, traj, true, true);
    return v ? *v : be_.zero();
  }

  S log_likelihood(int n_sub, const std::vector<HeadSets>* traj) {
    using std::log;
    std::optional<S> total;
    for (std::size_t i = 0; i < n_; ++i) {
      const double t = times_[i];
      const int k = seq_.congestion[i].sensor;
      const S lam = intensity(t, k, regime_at(t), history_before(t, traj));
      if (!(ad::value_of(lam) > 0.0))
        throw std::domain_error("zero intensity at observed event " + std::to_string(i));
      accumulate(total, S(log(lam)));
    }
    const double horizon = seq_.horizon;
    const bool shared = p_.config().temporal_only;
    for (int k = 0; k < k_; ++k) {
      if (auto v = integrate(k, 0.0, horizon, n_sub, traj, true, !shared))
        accumulate(total, S(-*v));
    }
    if (shared) {
      // Self-excitation does not depend on the sensor without spatial scores.
      if (auto v = integrate(0, 0.0, horizon, n_sub, traj, false, true))
        accumulate(total, S(*v * static_cast<double>(-k_)));
    }
    return total ? *total : be_.zero();
  }

  std::vector<double> breakpoints(double t0, double t1) const {
    std::vector<double> cuts{t0, t1};
    auto add = [&](double x) {
      if (x > t0 && x < t1) cuts.push_back(x);
    };
    for (double t : times_) add(t);
    for (const auto& y : seq_.incidents) {
      if (y.t > cutoff_) continue;
      add(y.t);
      add(y.t + y.z);
    }
    for (double x : sp_.bin_boundaries(t0, t1)) add(x);
    const auto& c = p_.config();
    if (!c.background_multipliers.empty()) {
      const double w = c.multiplier_bin_hours;
      for (double x = std::floor(t0 / w) * w + w; x < t1; x += w) add(x);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    return cuts;
  }

 private:
  struct Slot {
    bool done = false;
    std::optional<S> value;
  };

  S gamma() {
    if (!gamma_) gamma_ = softplus(be_.param(p_.gamma_index()));
    return *gamma_;
  }

  S tailup(double distance, double factor) {
    using std::exp;
    if (!beta_) {
      beta_ = softplus(be_.param(p_.beta_index()));
      sigma_ = softplus(be_.param(p_.sigma_index())) * p_.config().sigma_unit_m;
    }
    if (distance == 0.0) return factor == 1.0 ? *beta_ : *beta_ * factor;
    const S decay = exp(S((-distance) / *sigma_));
    return (*beta_ * decay) * factor;
  }

  // c[m][i] = e_i^T W_m^v W_m, the value of event i projected on the output.
  void ensure_values() {
    if (!c_.empty() || n_ == 0) return;
    const auto& cfg = p_.config();
    const auto pd = static_cast<std::size_t>(cfg.value_dim);
    c_.reserve(static_cast<std::size_t>(heads_) * n_);
    for (int m = 0; m < heads_; ++m) {
      std::vector<S> u;
      for (std::size_t d = 0; d < static_cast<std::size_t>(kEmbeddingDim); ++d) {
        std::optional<S> acc;
        for (std::size_t q = 0; q < pd; ++q)
          accumulate(acc, S(be_.param(p_.value_offset(m) + d * pd + q) *
                            be_.param(p_.output_offset() + static_cast<std::size_t>(m) * pd + q)));
        u.push_back(*acc);
      }
      for (std::size_t i = 0; i < n_; ++i) {
        const auto xy = sp_.coordinates(seq_.congestion[i].sensor);
        const double e[kEmbeddingDim] = {times_[i] / seq_.horizon, xy.first, xy.second};
        std::optional<S> acc;
        for (std::size_t d = 0; d < static_cast<std::size_t>(kEmbeddingDim); ++d)
          if (e[d] != 0.0) accumulate(acc, S(u[d] * e[d]));
        c_.push_back(acc ? *acc : be_.zero());
      }
    }
  }

  const ModelParams& p_;
  const SpatialContext& sp_;
  const EventSequence& seq_;
  B be_;
  double cutoff_;
  int k_ = 1;
  int heads_ = 1;
  std::size_t n_ = 0;
  std::vector<double> times_;
  std::vector<std::optional<S>> mu0_;
  std::optional<S> gamma_, beta_, sigma_;
  std::vector<Slot> alpha_pair_;
  std::vector<std::optional<FlowRelation>> inc_rel_;
  std::vector<Slot> alpha_inc_;
  std::vector<S> c_;
};

}  // namespace stpp::detail
