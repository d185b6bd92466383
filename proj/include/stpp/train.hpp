#pragma once

// Maximum-likelihood training, held-out evaluation and parametric baselines.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "stpp/events.hpp"
#include "stpp/intensity.hpp"
#include "stpp/model.hpp"

namespace stpp {

struct TrainConfig {
  int epochs = 20;
  int batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int n_sub = 10;
  std::size_t eta = 0;  // online attention capacity, 0 = full history
  double clip = 10.0;   // global gradient norm
  int threads = 0;      // 0 = STPP_THREADS or 1
  // Start each sensor's background rate at its empirical event rate.
  bool init_background = true;
  std::filesystem::path checkpoint;  // written after every epoch when set
  std::filesystem::path trace;       // epoch,avg_loglik CSV when set
  std::function<void(int epoch, double avg_loglik)> on_epoch;

  void validate() const;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> trace;  // average training log-likelihood per sequence, per epoch
};

/// Mini-batch Adam on the mean negative log-likelihood of the batch.
/// Deterministic for a given seed, independent of the thread count.
TrainResult fit(ModelParams init, const std::vector<EventSequence>& data,
                const SpatialContext& spatial, const TrainConfig& config);

/// Per-sensor empirical rate: events / (sequences * horizon), floored at 1e-3.
std::vector<double> empirical_rates(const std::vector<EventSequence>& data, int num_sensors);

struct EvalConfig {
  int n_sub = 10;
  std::size_t eta = 0;
  PredictOptions predict;
  int threads = 0;
};

struct EvalReport {
  double avg_loglik = 0.0;  // per sequence
  double accuracy = 0.0;    // next-location hit rate
  double time_mae = 0.0;    // mean |t_hat - t|
  std::size_t predictions = 0;
};

/// Next-event predictor on a prefix: (time, sensor).
using Predictor = std::function<std::pair<double, int>(const EventSequence& prefix)>;

/// Scores `predict` on every event that has at least one predecessor; the
/// prefix holds the earlier events and incidents called by the last of them.
EvalReport evaluate_predictor(const Predictor& predict, const std::vector<EventSequence>& test);

EvalReport evaluate(const ModelParams& params, const SpatialContext& spatial,
                    const std::vector<EventSequence>& test, const EvalConfig& config = {});

/// Uniformly random sensor, time = last event time.
Predictor random_location_predictor(int num_sensors, std::uint64_t seed);

struct HawkesFit {
  double mu = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double loglik = 0.0;  // total over the data
};

struct HawkesFitOptions {
  int starts = 5;
  int iterations = 1500;
  double lr = 0.05;
  std::uint64_t seed = 0;
};

/// Univariate Hawkes log-likelihood with the recursive kernel sum; sensors
/// are ignored.
double hawkes_loglik(double mu, double alpha, double beta, const EventSequence& seq);

/// Maximum-likelihood Hawkes fit by Adam on softplus-mapped parameters with
/// several random starts. Throws DataError("degenerate data") without events.
HawkesFit fit_hawkes_mle(const std::vector<EventSequence>& data, const HawkesFitOptions& opts = {});

/// Homogeneous Poisson MLE rate over all sensors: events / (sequences * horizon).
double poisson_rate(const std::vector<EventSequence>& data);
double poisson_loglik(double rate, const EventSequence& seq);

/// Worker count from STPP_THREADS (at least 1) unless `requested` > 0.
int resolve_threads(int requested);

}  // namespace stpp
