#pragma once

// Goodness-of-fit helpers: time rescaling, Kolmogorov-Smirnov and
// correlation.

#include <span>
#include <vector>

#include "stpp/events.hpp"

namespace stpp {

class IntensityModel;

/// Time rescaling over many sequences. Each sensor's compensator maps its
/// events to a unit-rate Poisson process; the per-sensor, per-sequence
/// processes are joined end to end, so under the true model the intervals of
/// the joined process are i.i.d. unit exponentials. Cutting each stream at
/// its last event instead would bias short sequences towards small values.
class RescaledIntervals {
 public:
  void add(const IntensityModel& model, const EventSequence& seq);
  [[nodiscard]] const std::vector<double>& intervals() const { return intervals_; }

 private:
  std::vector<double> intervals_;
  double carry_ = 0.0;  // compensator mass since the last event of the joined process
};

/// sup |F_n(x) - (1 - exp(-x))|.
double ks_statistic_exp1(std::span<const double> sample);

/// Asymptotic Kolmogorov tail probability with Stephens' small-sample
/// correction.
double ks_pvalue(double d, std::size_t n);

double pearson(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> x);
double variance(std::span<const double> x);  // unbiased

}  // namespace stpp
