#pragma once

// Conditional intensity of the attention point process: background rate,
// incident promotion, attention-driven self-excitation, compensators, the
// sequence log-likelihood and next-event prediction.

#include <cstddef>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "stpp/events.hpp"
#include "stpp/model.hpp"
#include "stpp/network.hpp"

namespace stpp {

/// Road network, segment weights and the derived sensor geometry. Without a
/// network every sensor is its own isolated location: alpha is beta between
/// a sensor and itself and zero across sensors, and incidents are rejected.
class SpatialContext {
 public:
  static SpatialContext isolated(int num_sensors);
  static SpatialContext from_network(TrafficNetwork net, SegmentWeights weights);

  [[nodiscard]] int num_sensors() const { return num_sensors_; }
  [[nodiscard]] bool has_network() const { return net_ != nullptr; }
  [[nodiscard]] const TrafficNetwork& network() const { return *net_; }
  [[nodiscard]] const SegmentWeights& weights() const { return *weights_; }
  [[nodiscard]] std::pair<double, double> coordinates(int k) const {
    return coords_[static_cast<std::size_t>(k)];
  }

  [[nodiscard]] std::size_t num_bins() const;
  [[nodiscard]] std::size_t bin_of(double t) const;
  /// Weight-bin boundaries strictly inside (t0, t1).
  [[nodiscard]] std::vector<double> bin_boundaries(double t0, double t1) const;

  /// Orientation between sensor k (as u) and sensor k2 (as v); empty when
  /// flow-unconnected.
  [[nodiscard]] const std::optional<FlowRelation>& sensor_relation(int k, int k2) const {
    return pairs_[static_cast<std::size_t>(k * num_sensors_ + k2)];
  }
  /// sqrt(w(upstream) / w(downstream)) for a flow-connected pair.
  [[nodiscard]] double weight_factor(std::size_t bin, const NetworkLocation& u,
                                     const NetworkLocation& v, const FlowRelation& rel) const;
  [[nodiscard]] double sensor_weight_factor(std::size_t bin, int k, int k2) const;
  /// Tail-up correlation between sensors k and k2 at time t.
  [[nodiscard]] double sensor_alpha(const TailupParams& p, double t, int k, int k2) const;

 private:
  int num_sensors_ = 1;
  std::shared_ptr<const TrafficNetwork> net_;
  std::shared_ptr<const SegmentWeights> weights_;
  std::vector<std::optional<FlowRelation>> pairs_;
  std::vector<double> pair_factor_;  // [bin][k][k2], NaN when unconnected
  std::vector<std::pair<double, double>> coords_;
};

struct EvalOptions {
  int n_sub = 10;       // trapezoid sub-intervals per piece
  std::size_t eta = 0;  // online attention capacity; 0 uses the full history
};

struct IntensityComponents {
  double mu0 = 0.0;
  double mu1 = 0.0;
  double lambda_prime = 0.0;
  [[nodiscard]] double total() const { return mu0 + mu1 + lambda_prime; }
};

/// Background rate, including the time-of-day multiplier when configured.
double background(const ModelParams& params, double t, int k);

/// Incident promotion at (t, k) from incidents in `seq` active at t.
double exogenous(const ModelParams& params, const SpatialContext& spatial,
                 const EventSequence& seq, double t, int k);

/// Components of lambda*(t, k) given the congestion events of `seq` strictly
/// before t and its incidents called at or before t.
IntensityComponents intensity_components(const ModelParams& params, const SpatialContext& spatial,
                                         const EventSequence& seq, double t, int k,
                                         const EvalOptions& opts = {});
double intensity(const ModelParams& params, const SpatialContext& spatial,
                 const EventSequence& seq, double t, int k, const EvalOptions& opts = {});

/// Integral of lambda*(., k) over [t0, t1], piecewise trapezoid split at
/// event times, incident starts and ends, and weight and multiplier bins.
double compensator(const ModelParams& params, const SpatialContext& spatial,
                   const EventSequence& seq, int k, double t0, double t1,
                   const EvalOptions& opts = {});

double log_likelihood(const ModelParams& params, const SpatialContext& spatial,
                      const EventSequence& seq, const EvalOptions& opts = {});

struct LikelihoodGradient {
  double value = 0.0;
  std::vector<double> gradient;  // d(loglik)/d(raw parameter), same layout as ModelParams
};
LikelihoodGradient log_likelihood_gradient(const ModelParams& params, const SpatialContext& spatial,
                                           const EventSequence& seq, const EvalOptions& opts = {});

/// lambda*(t, k) * exp(-integral from t_n to t), with t_n the last congestion
/// event of `prefix` (0 when empty). Requires t >= t_n.
double conditional_density(const ModelParams& params, const SpatialContext& spatial,
                           const EventSequence& prefix, double t, int k,
                           const EvalOptions& opts = {});

struct PredictOptions {
  int n_pred = 200;
  bool normalize_density = false;
};

struct Prediction {
  double time = 0.0;
  int sensor = 0;
  std::vector<double> sensor_mass;  // integral of f*(., k) over [t_n, T]
};

/// Next event after the last event of `prefix`, predicted on [t_n, horizon].
/// Only incidents called by t_n are taken into account.
Prediction predict_next(const ModelParams& params, const SpatialContext& spatial,
                        const EventSequence& prefix, const PredictOptions& popts = {},
                        const EvalOptions& opts = {});

struct IntensityTrace {
  int sensor = 0;
  std::vector<double> t;
  std::vector<IntensityComponents> values;
};

/// Components on `n_grid` evenly spaced points of [0, horizon).
IntensityTrace intensity_trace(const ModelParams& params, const SpatialContext& spatial,
                               const EventSequence& seq, int k, int n_grid,
                               const EvalOptions& opts = {});

/// Normalized attention weight of event j in the history of event i, per head,
/// for every pair j < i. Zero where t_j is not strictly before t_i.
struct ScoreEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  std::vector<double> weights;
};
std::vector<ScoreEntry> score_matrix(const ModelParams& params, const SpatialContext& spatial,
                                     const EventSequence& seq);

/// Retained sets per head after each event of `seq` under online selection.
/// Entry i holds the sets after observing events 0..i-1.
using OnlineTrajectory = std::vector<std::vector<std::vector<std::size_t>>>;
OnlineTrajectory online_trajectory(const ModelParams& params, const SpatialContext& spatial,
                                   const EventSequence& seq, std::size_t eta);

/// Default online capacity: half the longest sequence in `data`, rounded up,
/// at least 1.
std::size_t default_online_capacity(const std::vector<EventSequence>& data);

/// lambda*(t, k) with each head attending only to its online-retained events
/// observed strictly before t.
double online_intensity(const ModelParams& params, const SpatialContext& spatial,
                        const EventSequence& seq, double t, int k, std::size_t eta);

/// Checks sensors and incidents of `seq` against the model and spatial context.
void check_compatible(const ModelParams& params, const SpatialContext& spatial,
                      const EventSequence& seq);

}  // namespace stpp
