#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "stpp/events.hpp"
#include "stpp/intensity.hpp"
#include "stpp/model.hpp"
#include "stpp/network.hpp"
#include "stpp/random.hpp"

namespace testutil {

// a, b merge into c, c flows into d; e is a separate road.
//   sensor 0: a @ 500, sensor 1: b @ 500, sensor 2: c @ 1000, sensor 3: e @ 100
inline stpp::TrafficNetwork toy_network() {
  stpp::NetworkSpec spec;
  spec.segments = {{"a", 1000.0, {"c"}}, {"b", 1000.0, {"c"}}, {"c", 2000.0, {"d"}},
                   {"d", 1000.0, {}},    {"e", 500.0, {}}};
  spec.sensors = {{0, {"a", 500.0}}, {1, {"b", 500.0}}, {2, {"c", 1000.0}}, {3, {"e", 100.0}}};
  return stpp::build_network(spec);
}

inline stpp::SpatialContext toy_context() {
  auto net = toy_network();
  auto w = stpp::SegmentWeights::flow_accumulated(net);
  return stpp::SpatialContext::from_network(std::move(net), std::move(w));
}

inline stpp::ModelParams random_params(const stpp::ModelConfig& cfg, std::uint64_t seed,
                                       double jitter = 0.5) {
  auto p = stpp::ModelParams::initialize(cfg, seed);
  stpp::Rng rng(stpp::splitmix64(seed ^ 0x9e3779b97f4a7c15ULL));
  auto v = p.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += stpp::uniform(rng, -jitter, jitter);
  // keep the positive scalars in a comfortable range
  p.set_gamma(stpp::uniform(rng, 0.5, 2.0));
  p.set_tailup({stpp::uniform(rng, 0.3, 1.5), stpp::uniform(rng, 500.0, 3000.0)});
  for (int k = 0; k < cfg.num_sensors; ++k) p.set_mu0(k, stpp::uniform(rng, 0.5, 3.0));
  return p;
}

inline stpp::EventSequence random_sequence(stpp::Rng& rng, int n, int num_sensors,
                                           double horizon = 1.0) {
  stpp::EventSequence s;
  s.horizon = horizon;
  std::vector<double> t;
  for (int i = 0; i < n; ++i) t.push_back(stpp::uniform(rng, 0.0, horizon));
  std::sort(t.begin(), t.end());
  for (double x : t)
    s.congestion.push_back({x, static_cast<int>(stpp::uniform_index(rng, static_cast<std::uint64_t>(num_sensors)))});
  return s;
}

// Straight replay of the event-selection pseudocode with full score lists.
// raw(m, i, j) is the unnormalized score of event i against past event j.
// Returns the retained sets per head after each event (entry i = after i events).
template <class Raw>
std::vector<std::vector<std::vector<std::size_t>>> replay_selection(const std::vector<double>& times,
                                                                    int heads, std::size_t eta,
                                                                    Raw&& raw) {
  std::vector<std::vector<std::vector<std::size_t>>> out(1, std::vector<std::vector<std::size_t>>(heads));
  std::vector<std::vector<std::size_t>> kept(heads);
  std::vector<std::vector<std::vector<double>>> history(heads, std::vector<std::vector<double>>(times.size()));
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (int m = 0; m < heads; ++m) {
      auto& a = kept[m];
      double total = 0.0;
      for (auto j : a)
        if (times[j] < times[i]) total += raw(m, i, j);
      for (auto j : a)
        if (times[j] < times[i]) history[m][j].push_back(raw(m, i, j) / total);
      a.push_back(i);
      if (i + 1 > eta) {
        bool found = false;
        std::size_t victim = 0;
        double best = 0.0;
        for (auto j : a) {
          if (!(times[j] < times[i])) continue;
          double sum = 0.0;
          for (double v : history[m][j]) sum += v;
          const double mean = sum / static_cast<double>(history[m][j].size());
          if (!found || mean < best || (mean == best && j < victim)) {
            found = true;
            victim = j;
            best = mean;
          }
        }
        if (found) a.erase(std::find(a.begin(), a.end(), victim));
      }
      std::sort(a.begin(), a.end());
    }
    out.push_back(kept);
  }
  return out;
}

// Simpson-free reference: composite trapezoid on a uniform grid.
template <class F>
double trapz(F&& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) s += f(a + h * i);
  return s * h;
}

}  // namespace testutil
