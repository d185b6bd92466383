#include <doctest.h>

#include <map>
#include <vector>

#include "helpers.hpp"
#include "stpp/attention.hpp"
#include "stpp/intensity.hpp"
#include "stpp/online.hpp"

using namespace stpp;

namespace {

std::vector<std::size_t> ids(std::initializer_list<std::size_t> l) { return l; }

}  // namespace

TEST_CASE("capacity one keeps only the newest event") {
  OnlineSelection sel(1, 1);
  sel.observe(0, 0.1, [](int, std::size_t) { return 1.0; });
  CHECK(sel.retained(0) == ids({0}));
  sel.observe(1, 0.2, [](int, std::size_t) { return 5.0; });
  CHECK(sel.retained(0) == ids({1}));
  sel.observe(2, 0.3, [](int, std::size_t) { return 0.1; });
  CHECK(sel.retained(0) == ids({2}));
}

TEST_CASE("hand simulation with capacity two") {
  // step 2: scores 1 and 3 normalize to 0.25, 0.75; averages 0.625 and 0.75, evict 0
  // step 3: scores 1 and 1 normalize to 0.5 each; averages 0.625 and 0.5, evict 2
  OnlineSelection sel(1, 2);
  const std::vector<double> times = {0.0, 1.0, 2.0, 3.0};
  const std::map<std::pair<std::size_t, std::size_t>, double> table = {
      {{1, 0}, 2.0}, {{2, 0}, 1.0}, {{2, 1}, 3.0}, {{3, 1}, 1.0}, {{3, 2}, 1.0}};
  sel.observe(0, times[0], [&](int, std::size_t j) { return table.at({0, j}); });
  sel.observe(1, times[1], [&](int, std::size_t j) { return table.at({1, j}); });
  CHECK(sel.retained(0) == ids({0, 1}));
  CHECK(sel.average(0, 0) == 1.0);
  sel.observe(2, times[2], [&](int, std::size_t j) { return table.at({2, j}); });
  CHECK(sel.retained(0) == ids({1, 2}));
  CHECK(sel.average(0, 1) == doctest::Approx(0.75));
  sel.observe(3, times[3], [&](int, std::size_t j) { return table.at({3, j}); });
  CHECK(sel.retained(0) == ids({1, 3}));
  CHECK(sel.average(0, 1) == doctest::Approx(0.625));
  CHECK(sel.count(0, 1) == 2);
}

TEST_CASE("ties evict the oldest") {
  // events 0 and 1 share a time stamp, so both collect exactly one score of 0.5
  const std::vector<double> times = {0.0, 0.0, 1.0};
  OnlineSelection sel(2, 2);
  for (std::size_t i = 0; i < times.size(); ++i) sel.observe(i, times[i], [](int, std::size_t) { return 1.0; });
  CHECK(sel.average(0, 1) == 0.5);
  CHECK(sel.retained(0) == ids({1, 2}));
  CHECK(sel.retained(1) == ids({1, 2}));
  const auto replay = testutil::replay_selection(times, 2, 2, [](int, std::size_t, std::size_t) { return 1.0; });
  CHECK(sel.retained(0) == replay.back()[0]);
}

TEST_CASE("no eviction while the capacity is not reached") {
  OnlineSelection sel(3, 5);
  for (std::size_t i = 0; i < 5; ++i) {
    sel.observe(i, 0.1 * static_cast<double>(i), [](int m, std::size_t j) { return 1.0 + m + static_cast<double>(j); });
    for (int m = 0; m < 3; ++m) CHECK(sel.retained(m).size() == i + 1);
  }
}

TEST_CASE("simultaneous events are never scored against each other") {
  OnlineSelection sel(1, 1);
  sel.observe(0, 0.5, [](int, std::size_t) { return 1.0; });
  int calls = 0;
  sel.observe(1, 0.5, [&](int, std::size_t) {
    ++calls;
    return 1.0;
  });
  CHECK(calls == 0);
  // nothing strictly earlier: both survive
  CHECK(sel.retained(0) == ids({0, 1}));
  CHECK(sel.count(0, 0) == 0);
  sel.observe(2, 0.7, [&](int, std::size_t j) { return j == 0 ? 1.0 : 3.0; });
  CHECK(sel.retained(0) == ids({1, 2}));
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(OnlineSelection(1, 0), std::invalid_argument);
  CHECK_THROWS_AS(OnlineSelection(0, 3), std::invalid_argument);
  OnlineSelection sel(1, 2);
  sel.observe(0, 0.5, [](int, std::size_t) { return 1.0; });
  CHECK_THROWS_AS(sel.observe(1, 0.4, [](int, std::size_t) { return 1.0; }), std::invalid_argument);
  CHECK_THROWS_AS(sel.observe(0, 0.6, [](int, std::size_t) { return 1.0; }), std::invalid_argument);
  CHECK_THROWS_AS(sel.observe(1, 0.6, [](int, std::size_t) { return 0.0; }), std::domain_error);
}

TEST_CASE("random replays match the pseudocode") {
  Rng rng(77);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 12;
    std::vector<double> times;
    for (std::size_t i = 0; i < n; ++i) times.push_back(uniform(rng, 0.0, 1.0));
    std::sort(times.begin(), times.end());
    std::vector<double> table(3 * n * n);
    for (auto& v : table) v = uniform(rng, 0.05, 2.0);
    auto raw = [&](int m, std::size_t i, std::size_t j) { return table[(static_cast<std::size_t>(m) * n + i) * n + j]; };
    for (std::size_t eta : {1u, 2u, 3u, 5u}) {
      OnlineSelection sel(3, eta);
      const auto expected = testutil::replay_selection(times, 3, eta, raw);
      for (std::size_t i = 0; i < n; ++i) {
        sel.observe(i, times[i], [&](int m, std::size_t j) { return raw(m, i, j); });
        for (int m = 0; m < 3; ++m) {
          CHECK(sel.retained(m) == expected[i + 1][static_cast<std::size_t>(m)]);
          if (i + 1 >= eta) CHECK(sel.retained(m).size() <= eta);
        }
      }
    }
  }
}

TEST_CASE("per-event cost is bounded by capacity times heads") {
  OnlineSelection sel(3, 4);
  std::size_t prev = 0;
  for (std::size_t i = 0; i < 2000; ++i) {
    sel.observe(i, 0.001 * static_cast<double>(i), [&](int m, std::size_t j) {
      return 1.0 + 0.1 * m + static_cast<double>((i * 7 + j * 13) % 11);
    });
    CHECK(sel.score_evaluations() - prev <= 4 * 3);
    prev = sel.score_evaluations();
    for (int m = 0; m < 3; ++m) CHECK(sel.retained(m).size() <= 4);
  }
  CHECK(sel.observed() == 2000);
}

TEST_CASE("model trajectory matches a replay with the model's scores") {
  const auto sp = testutil::toy_context();
  ModelConfig cfg;
  cfg.num_sensors = 4;
  cfg.heads = 3;
  cfg.value_dim = 2;
  cfg.hidden = 5;
  const auto p = testutil::random_params(cfg, 12);
  const auto ap = AttentionParams::from_model(p);
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const auto s = testutil::random_sequence(rng, 15, 4);
    std::vector<double> times;
    for (const auto& e : s.congestion) times.push_back(e.t);
    auto raw = [&](int m, std::size_t i, std::size_t j) {
      const auto& ei = s.congestion[i];
      const auto& ej = s.congestion[j];
      return score(ap.score_nets[static_cast<std::size_t>(m)], ei.t, ej.t,
                   sp.sensor_alpha(p.tailup(), ei.t, ei.sensor, ej.sensor));
    };
    for (std::size_t eta : {2u, 5u}) {
      const auto traj = online_trajectory(p, sp, s, eta);
      const auto expected = testutil::replay_selection(times, 3, eta, raw);
      REQUIRE(traj.size() == expected.size());
      for (std::size_t i = 0; i < traj.size(); ++i)
        for (std::size_t m = 0; m < 3; ++m) CHECK(traj[i][m] == expected[i][m]);
    }
  }
}

TEST_CASE("online intensity attends to the retained events only") {
  ModelConfig cfg;
  cfg.num_sensors = 1;
  cfg.heads = 2;
  cfg.value_dim = 2;
  cfg.hidden = 4;
  const auto p = testutil::random_params(cfg, 5);
  const auto sp = SpatialContext::isolated(1);
  Rng rng(8);
  const auto s = testutil::random_sequence(rng, 20, 1);
  const std::size_t eta = 4;
  const auto traj = online_trajectory(p, sp, s, eta);
  const auto ap = AttentionParams::from_model(p);
  for (double t : {0.3, 0.6, 0.97}) {
    std::size_t before = 0;
    while (before < s.congestion.size() && s.congestion[before].t < t) ++before;
    // rebuild lambda' head by head from the retained sets
    double pre = ap.bias;
    for (int m = 0; m < 2; ++m) {
      std::vector<PastEvent> hist;
      for (auto j : traj[before][static_cast<std::size_t>(m)])
        hist.push_back({s.congestion[j].t, embed_event(s.congestion[j].t, s.horizon, sp.coordinates(0)),
                        p.tailup().beta});
      const auto h = attention_head(ap.score_nets[static_cast<std::size_t>(m)],
                                    ap.value_maps[static_cast<std::size_t>(m)], ap.value_dim, t, hist);
      for (int c = 0; c < ap.value_dim; ++c)
        pre += h[static_cast<std::size_t>(c)] * ap.output[static_cast<std::size_t>(m * ap.value_dim + c)];
    }
    const double expected = p.mu0(0) + softplus(pre);
    CHECK(online_intensity(p, sp, s, t, 0, eta) == doctest::Approx(expected).epsilon(1e-12));
  }
}
