#pragma once

// Ogata thinning and the synthetic generators: univariate Hawkes,
// self-correcting, two nonhomogeneous Poisson shapes, a multivariate Hawkes
// on a road network, and sampling from a fitted model.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stpp/events.hpp"
#include "stpp/intensity.hpp"
#include "stpp/model.hpp"
#include "stpp/random.hpp"

namespace stpp {

/// Ground-truth conditional intensity. `history` holds the events strictly
/// before the query time (or before `a` for integrals).
class IntensityModel {
 public:
  virtual ~IntensityModel() = default;
  [[nodiscard]] virtual int num_sensors() const = 0;
  virtual void rates(double t, const EventSequence& history, std::span<double> out) const = 0;
  /// Integral of lambda_k over [a, b] with no events inside (a, b).
  [[nodiscard]] virtual double integrated(int k, double a, double b,
                                          const EventSequence& history) const = 0;
};

class ConstantRate final : public IntensityModel {
 public:
  explicit ConstantRate(double rate) : rate_(rate) {}
  int num_sensors() const override { return 1; }
  void rates(double, const EventSequence&, std::span<double> out) const override { out[0] = rate_; }
  double integrated(int, double a, double b, const EventSequence&) const override {
    return rate_ * (b - a);
  }

 private:
  double rate_;
};

/// mu + alpha * sum beta * exp(-beta (t - t_j)).
class HawkesModel final : public IntensityModel {
 public:
  HawkesModel(double mu, double alpha, double beta);
  int num_sensors() const override { return 1; }
  void rates(double t, const EventSequence& h, std::span<double> out) const override;
  double integrated(int k, double a, double b, const EventSequence& h) const override;

 private:
  double mu_, alpha_, beta_;
};

/// exp(mu t - alpha N(t)).
class SelfCorrectingModel final : public IntensityModel {
 public:
  SelfCorrectingModel(double mu, double alpha);
  int num_sensors() const override { return 1; }
  void rates(double t, const EventSequence& h, std::span<double> out) const override;
  double integrated(int k, double a, double b, const EventSequence& h) const override;

 private:
  double mu_, alpha_;
};

/// Sum of scaled normal bumps: sum_i amp_i * phi(scale_i (t - center_i)),
/// phi the standard normal density.
class NormalBumpModel final : public IntensityModel {
 public:
  struct Bump {
    double amplitude;
    double scale;
    double center;
  };
  explicit NormalBumpModel(std::vector<Bump> bumps);
  int num_sensors() const override { return 1; }
  void rates(double t, const EventSequence& h, std::span<double> out) const override;
  double integrated(int k, double a, double b, const EventSequence& h) const override;

 private:
  std::vector<Bump> bumps_;
};

/// lambda_k = mu_k + sum_j gain[k][s_j] * beta * exp(-beta (t - t_j)).
class NetworkHawkesModel final : public IntensityModel {
 public:
  NetworkHawkesModel(std::vector<double> mu, std::vector<double> gain, double beta);
  int num_sensors() const override { return static_cast<int>(mu_.size()); }
  void rates(double t, const EventSequence& h, std::span<double> out) const override;
  double integrated(int k, double a, double b, const EventSequence& h) const override;
  [[nodiscard]] double gain(int k, int from) const {
    return gain_[static_cast<std::size_t>(k) * mu_.size() + static_cast<std::size_t>(from)];
  }
  [[nodiscard]] const std::vector<double>& mu() const { return mu_; }
  [[nodiscard]] double beta() const { return beta_; }

 private:
  std::vector<double> mu_;
  std::vector<double> gain_;  // K x K, row = receiving sensor
  double beta_;
};

/// Intensity of a fitted attention model; incidents come from `incidents`.
class FittedModel final : public IntensityModel {
 public:
  FittedModel(const ModelParams& params, const SpatialContext& spatial,
              std::vector<IncidentEvent> incidents, int n_sub = 10);
  int num_sensors() const override { return params_.config().num_sensors; }
  void rates(double t, const EventSequence& h, std::span<double> out) const override;
  double integrated(int k, double a, double b, const EventSequence& h) const override;

 private:
  EventSequence with_incidents(const EventSequence& h) const;
  const ModelParams& params_;
  const SpatialContext& spatial_;
  std::vector<IncidentEvent> incidents_;
  int n_sub_;
};

struct ThinningOptions {
  std::size_t cap = 500;          // maximum events per sequence
  double window = 0.0;            // lookahead; 0 = horizon / 10
  int probes = 20;                // probe points per window
  double bound_factor = 1.5;
};

struct Simulated {
  EventSequence seq;
  bool truncated = false;
};

/// Ogata thinning with an adaptive lookahead bound. Event times are rounded
/// to 9 significant digits so that written datasets reload exactly.
Simulated thinning_simulate(const IntensityModel& model, double horizon, Rng& rng,
                            const ThinningOptions& opts = {});

enum class GeneratorKind { kHawkes, kSelfCorrecting, kNonhomo1, kNonhomo2, kNetworkHawkes, kFittedModel };

GeneratorKind parse_generator_kind(const std::string& name);
std::string generator_name(GeneratorKind kind);

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::kHawkes;
  double mu = 10.0;    // hawkes, self-correcting, network-hawkes background
  double alpha = 1.0;  // hawkes branching ratio, self-correcting drop, network gain scale
  double beta = 1.0;   // hawkes and network-hawkes decay
  double c = 100.0;    // nonhomo1
  double c1 = 50.0;    // nonhomo2
  double c2 = 50.0;
  std::vector<double> mu0;  // network-hawkes per-sensor background (defaults to mu)
  TailupParams tailup{1.0, 1000.0};
  double horizon = 1.0;
  std::size_t count = 500;
  std::uint64_t seed = 0;
  std::size_t cap = 500;

  void validate() const;
};

struct GeneratedSequence {
  EventSequence seq;
  bool truncated = false;
  std::shared_ptr<const IntensityModel> truth;
};

/// Sequence i draws from derived_rng(seed, i): first any per-sequence
/// amplitudes, then the thinning stream. `spatial` is needed for the network
/// and fitted kinds, `params` for the fitted kind.
std::vector<GeneratedSequence> generate(const GeneratorSpec& spec,
                                        const SpatialContext* spatial = nullptr,
                                        const ModelParams* params = nullptr);

/// Branching-gain matrix of the network generator: alpha * tail-up
/// correlation from sensor `from` to sensor k, weights taken at time 0.
std::vector<double> network_gains(const SpatialContext& spatial, double alpha,
                                  const TailupParams& tailup);

}  // namespace stpp
