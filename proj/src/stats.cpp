#include "stpp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stpp/simulate.hpp"

namespace stpp {

void RescaledIntervals::add(const IntensityModel& model, const EventSequence& seq) {
  const int K = model.num_sensors();
  std::vector<double> acc(static_cast<std::size_t>(K), 0.0);
  EventSequence history;
  history.horizon = seq.horizon;
  history.incidents = seq.incidents;
  double a = 0.0;
  auto advance = [&](double b) {
    if (b > a)
      for (int k = 0; k < K; ++k) acc[static_cast<std::size_t>(k)] += model.integrated(k, a, b, history);
    a = b;
  };
  // streams are visited in sensor order; events of sensor k close intervals of stream k
  std::vector<std::vector<double>> marks(static_cast<std::size_t>(K));
  for (const auto& e : seq.congestion) {
    advance(e.t);
    marks[static_cast<std::size_t>(e.sensor)].push_back(acc[static_cast<std::size_t>(e.sensor)]);
    history.congestion.push_back(e);
  }
  advance(seq.horizon);
  for (int k = 0; k < K; ++k) {
    double prev = 0.0;
    for (double m : marks[static_cast<std::size_t>(k)]) {
      intervals_.push_back(carry_ + (m - prev));
      carry_ = 0.0;
      prev = m;
    }
    carry_ += acc[static_cast<std::size_t>(k)] - prev;
  }
}

double ks_statistic_exp1(std::span<const double> sample) {
  if (sample.empty()) throw std::invalid_argument("ks: empty sample");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = -std::expm1(-s[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_pvalue(double d, std::size_t n) {
  if (n == 0) throw std::invalid_argument("ks: empty sample");
  const double sn = std::sqrt(static_cast<double>(n));
  const double x = (sn + 0.12 + 0.11 / sn) * d;
  if (x < 1e-3) return 1.0;
  double p = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * x * x);
    p += (j % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean: empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("variance: need two values");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson: size mismatch");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace stpp
