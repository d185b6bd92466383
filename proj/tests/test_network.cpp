#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "stpp/network.hpp"

using namespace stpp;

namespace {

// Eleven segments: 1 splits into 6 and 7; 4 and 5 merge into 9; 6 and 9
// merge into 11; 2 and 3 merge into 8; 7 and 8 merge into 10.
TrafficNetwork fig_network() {
  NetworkSpec spec;
  auto seg = [&](const std::string& id, std::vector<std::string> to) {
    spec.segments.push_back({id, 1000.0, std::move(to)});
  };
  seg("w1", {"w6", "w7"});
  seg("w2", {"w8"});
  seg("w3", {"w8"});
  seg("w4", {"w9"});
  seg("w5", {"w9"});
  seg("w6", {"w11"});
  seg("w7", {"w10"});
  seg("w8", {"w10"});
  seg("w9", {"w11"});
  seg("w10", {});
  seg("w11", {});
  spec.sensors = {{0, {"w5", 200.0}}, {1, {"w11", 300.0}}, {2, {"w10", 50.0}}};
  return build_network(spec);
}

// Minimum over simple paths from u's segment to v's segment.
std::optional<double> enumerate_distance(const TrafficNetwork& net, const NetworkLocation& u,
                                         const NetworkLocation& v) {
  const auto su = net.segment_index(u.segment);
  const auto sv = net.segment_index(v.segment);
  double best = std::numeric_limits<double>::infinity();
  if (su == sv && u.offset_m <= v.offset_m) best = v.offset_m - u.offset_m;
  std::vector<bool> on(net.num_segments(), false);
  std::function<void(std::size_t, double)> walk = [&](std::size_t s, double acc) {
    for (auto nxt : net.successors(s)) {
      if (nxt == sv) best = std::min(best, acc + v.offset_m);
      if (on[nxt]) continue;
      on[nxt] = true;
      walk(nxt, acc + net.segment(nxt).length_m);
      on[nxt] = false;
    }
  };
  on[su] = true;
  walk(su, net.segment(su).length_m - u.offset_m);
  if (std::isinf(best)) return std::nullopt;
  return best;
}

std::optional<double> undirected(const TrafficNetwork& net, const NetworkLocation& u, const NetworkLocation& v) {
  auto a = enumerate_distance(net, u, v);
  auto b = enumerate_distance(net, v, u);
  if (a && b) return std::min(*a, *b);
  return a ? a : b;
}

}  // namespace

TEST_CASE("building networks") {
  SUBCASE("two chained segments") {
    NetworkSpec spec;
    spec.segments = {{"A", 5.0, {"B"}}, {"B", 5.0, {}}};
    spec.sensors = {{0, {"B", 1.0}}};
    const auto net = build_network(spec);
    CHECK(net.num_segments() == 2);
    CHECK(net.num_sensors() == 1);
  }
  SUBCASE("figure topology") {
    const auto net = fig_network();
    CHECK(net.num_segments() == 11);
    CHECK(net.junctions().size() == 5);
  }
  SUBCASE("invalid input") {
    NetworkSpec spec;
    spec.segments = {{"A", 5.0, {"Z"}}};
    CHECK_THROWS_WITH_AS(build_network(spec), doctest::Contains("dangling reference"), NetworkError);
    spec.segments = {{"A", 0.0, {}}};
    CHECK_THROWS_AS(build_network(spec), NetworkError);
    spec.segments = {{"A", 5.0, {}}, {"A", 3.0, {}}};
    CHECK_THROWS_AS(build_network(spec), NetworkError);
    spec.segments = {{"A", 5.0, {}}};
    spec.sensors = {{0, {"A", 6.0}}};
    CHECK_THROWS_AS(build_network(spec), NetworkError);
    spec.sensors = {{0, {"A", 1.0}}, {0, {"A", 2.0}}};
    CHECK_THROWS_AS(build_network(spec), NetworkError);
    spec.sensors = {{1, {"A", 1.0}}};
    CHECK_THROWS_AS(build_network(spec), NetworkError);
  }
}

TEST_CASE("network JSON") {
  const std::string text =
      R"({"segments":[{"id":"L1","length_m":1200.0,"to":["L2"]},{"id":"L2","length_m":800.0,"to":[]}],)"
      R"("sensors":[{"id":0,"segment":"L2","offset_m":300.0}]})";
  const auto net = build_network(parse_network_json(text));
  CHECK(net.num_segments() == 2);
  CHECK(net.sensor(0).location.offset_m == 300.0);
  const auto again = build_network(parse_network_json(network_to_json(net)));
  CHECK(again.segment(0).id == "L1");
  CHECK(again.segment(0).to == std::vector<std::string>{"L2"});
  CHECK_THROWS_AS(parse_network_json(R"({"segments":[],"sensors":[],"extra":1})"), NetworkError);
  CHECK_THROWS_AS(
      parse_network_json(R"({"segments":[{"id":"L1","length_m":1.0,"to":[],"lanes":3}],"sensors":[]})"),
      NetworkError);
  CHECK_THROWS_AS(parse_network_json("{not json"), NetworkError);
}

TEST_CASE("stream distance") {
  SUBCASE("hand path sum") {
    NetworkSpec spec;
    spec.segments = {{"A", 5.0, {"B"}}, {"B", 10.0, {}}};
    const auto net = build_network(spec);
    const NetworkLocation u{"A", 2.0}, v{"B", 4.0};
    CHECK(stream_distance(net, u, v).value() == doctest::Approx(7.0));
    CHECK(stream_distance(net, v, u).value() == doctest::Approx(7.0));
    CHECK(stream_distance(net, u, u).value() == 0.0);
    CHECK(flow_connected(net, u, v));
    CHECK(flow_connected(net, u, u));
    const auto rel = flow_relation(net, v, u).value();
    CHECK_FALSE(rel.u_upstream);
    CHECK(net.directed_distance(u, v).value() == doctest::Approx(7.0));
    CHECK_FALSE(net.directed_distance(v, u).has_value());
  }
  SUBCASE("flow-unconnected branches") {
    const auto net = fig_network();
    const NetworkLocation u{"w5", 200.0}, v{"w11", 300.0}, r{"w10", 50.0};
    CHECK(stream_distance(net, u, v).value() == doctest::Approx(800.0 + 1000.0 + 300.0));
    CHECK_FALSE(stream_distance(net, u, r).has_value());
    CHECK_FALSE(flow_connected(net, u, r));
    // siblings below a split share no flow either
    CHECK_FALSE(flow_connected(net, {"w6", 1.0}, {"w7", 1.0}));
  }
  SUBCASE("shortest route through a cycle") {
    NetworkSpec spec;
    spec.segments = {{"A", 100.0, {"B", "C"}}, {"B", 10.0, {"D"}}, {"C", 50.0, {"D"}}, {"D", 20.0, {"A"}}};
    const auto net = build_network(spec);
    CHECK(stream_distance(net, {"A", 90.0}, {"D", 5.0}).value() == doctest::Approx(25.0));
    // around the loop in the other direction is shorter
    CHECK(stream_distance(net, {"D", 5.0}, {"A", 1.0}).value() == doctest::Approx(16.0));
    CHECK(stream_distance(net, {"A", 5.0}, {"A", 1.0}).value() == doctest::Approx(4.0));
  }
}

TEST_CASE("stream distance matches path enumeration on random small networks") {
  Rng rng(2024);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + static_cast<int>(uniform_index(rng, 5));
    NetworkSpec spec;
    for (int i = 0; i < n; ++i) spec.segments.push_back({"s" + std::to_string(i), uniform(rng, 1.0, 20.0), {}});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && uniform(rng, 0.0, 1.0) < 0.3) spec.segments[i].to.push_back("s" + std::to_string(j));
    const auto net = build_network(spec);
    for (int q = 0; q < 10; ++q) {
      const auto a = uniform_index(rng, static_cast<std::uint64_t>(n));
      const auto b = uniform_index(rng, static_cast<std::uint64_t>(n));
      const NetworkLocation u{net.segment(a).id, uniform(rng, 0.0, net.segment(a).length_m)};
      const NetworkLocation v{net.segment(b).id, uniform(rng, 0.0, net.segment(b).length_m)};
      const auto got = stream_distance(net, u, v);
      const auto want = undirected(net, u, v);
      REQUIRE(got.has_value() == want.has_value());
      if (got) CHECK(*got == doctest::Approx(*want).epsilon(1e-12));
      CHECK(flow_connected(net, u, v) == want.has_value());
    }
  }
}

TEST_CASE("segment weights") {
  const auto net = fig_network();
  const auto acc = SegmentWeights::flow_accumulated(net);
  CHECK(validate_weights(net, acc).empty());
  const auto id = [&](const char* s) { return net.segment_index(s); };
  CHECK(acc.get(0, id("w1")) == doctest::Approx(acc.get(0, id("w6")) + acc.get(0, id("w7"))));
  CHECK(acc.get(0, id("w11")) == doctest::Approx(acc.get(0, id("w6")) + acc.get(0, id("w9"))));

  SUBCASE("a violated split is reported") {
    SegmentWeights w = acc;
    w.set(0, id("w1"), 1.0);
    w.set(0, id("w6"), 1.0);
    w.set(0, id("w7"), 1.0);
    const auto v = validate_weights(net, w);
    REQUIRE_FALSE(v.empty());
    bool found = false;
    for (const auto& x : v)
      if (x.inbound == doctest::Approx(1.0) && x.outbound == doctest::Approx(2.0)) found = true;
    CHECK(found);
    CHECK_THROWS_AS(renormalize_weights(net, w), NetworkError);
  }
  SUBCASE("small violations are projected") {
    SegmentWeights w = acc;
    w.set(0, id("w9"), acc.get(0, id("w9")) * 1.02);
    CHECK_FALSE(validate_weights(net, w).empty());
    const auto fixed = renormalize_weights(net, w);
    CHECK(validate_weights(net, fixed).empty());
  }
  SUBCASE("single segment") {
    NetworkSpec spec;
    spec.segments = {{"A", 5.0, {}}};
    const auto one = build_network(spec);
    SegmentWeights w(2.0, 1, 1);
    w.set(0, 0, 3.7);
    CHECK(validate_weights(one, w).empty());
  }
  SUBCASE("missing entries and bins") {
    SegmentWeights w(2.0, 1, net.num_segments());
    CHECK_THROWS_AS(validate_weights(net, w), NetworkError);
    // a single bin is time-invariant; with several, times past the last bin are missing
    CHECK(acc.bin_of(50.0) == 0);
    SegmentWeights two(2.0, 2, 1);
    CHECK(two.bin_of(1.99) == 0);
    CHECK(two.bin_of(2.0) == 1);
    CHECK_THROWS_AS((void)two.bin_of(4.5), NetworkError);
    CHECK_THROWS_AS(w.set(0, 0, -1.0), NetworkError);
  }
}

TEST_CASE("weights CSV") {
  NetworkSpec spec;
  spec.segments = {{"A", 5.0, {"B"}}, {"B", 5.0, {}}};
  const auto net = build_network(spec);
  const auto w = parse_weights_csv(net, "bin_start_h,segment,weight\n0,A,1\n0,B,1\n2,A,2\n2,B,2\n");
  CHECK(w.num_bins() == 2);
  CHECK(w.get(1, 0) == 2.0);
  CHECK_THROWS_AS(parse_weights_csv(net, "bin,segment,weight\n0,A,1\n"), NetworkError);
  CHECK_THROWS_AS(parse_weights_csv(net, "bin_start_h,segment,weight\n0,A,1\n"), NetworkError);
  CHECK_THROWS_AS(parse_weights_csv(net, "bin_start_h,segment,weight\n0,A,1\n0,Q,1\n"), NetworkError);
  CHECK_THROWS_AS(parse_weights_csv(net, "bin_start_h,segment,weight\n0,A,x\n0,B,1\n"), NetworkError);
}

TEST_CASE("tail-up correlation") {
  SUBCASE("hand evaluation") {
    NetworkSpec spec;
    spec.segments = {{"A", 1.0, {"B"}}, {"B", 5.0, {}}};
    const auto net = build_network(spec);
    SegmentWeights w(2.0, 2, 2);
    for (std::size_t b = 0; b < 2; ++b) {
      w.set(b, 0, 1.0);
      w.set(b, 1, 4.0);
    }
    const TailupParams p{1.0, 2.0};
    const NetworkLocation u{"A", 0.0}, v{"B", 1.0};
    CHECK(tailup_correlation(net, w, 0.5, u, v, p) == doctest::Approx(std::exp(-1.0) * 0.5));
    CHECK(tailup_correlation(net, w, 0.5, u, v, p) == doctest::Approx(0.18394).epsilon(1e-4));
    // the formula is applied in the flow direction whichever way it is queried
    CHECK(tailup_correlation(net, w, 0.5, v, u, p) == tailup_correlation(net, w, 0.5, u, v, p));
    CHECK(tailup_correlation(net, w, 0.5, v, v, p) == doctest::Approx(1.0));
    CHECK_THROWS_AS(tailup_correlation(net, w, 4.5, u, v, p), NetworkError);
  }
  SUBCASE("figure example") {
    const auto net = fig_network();
    const auto w = SegmentWeights::flow_accumulated(net);
    const TailupParams p{0.8, 1500.0};
    const NetworkLocation u{"w5", 200.0}, v{"w11", 300.0}, r{"w10", 50.0};
    const double expected = 0.8 * std::exp(-2100.0 / 1500.0) *
                            std::sqrt(w.get(0, net.segment_index("w5")) / w.get(0, net.segment_index("w11")));
    CHECK(tailup_correlation(net, w, 0.0, u, v, p) == doctest::Approx(expected));
    CHECK(tailup_correlation(net, w, 0.0, u, r, p) == 0.0);
  }
  SUBCASE("properties on random locations") {
    const auto net = fig_network();
    const auto w = SegmentWeights::flow_accumulated(net);
    const TailupParams p{1.3, 800.0};
    Rng rng(4);
    for (int q = 0; q < 500; ++q) {
      const auto a = uniform_index(rng, net.num_segments());
      const auto b = uniform_index(rng, net.num_segments());
      const NetworkLocation u{net.segment(a).id, uniform(rng, 0.0, 1000.0)};
      const NetworkLocation v{net.segment(b).id, uniform(rng, 0.0, 1000.0)};
      const double c = tailup_correlation(net, w, 0.0, u, v, p);
      const auto rel = flow_relation(net, u, v);
      CHECK((c == 0.0) == !rel.has_value());
      if (rel) {
        const double wu = w.get(0, a), wv = w.get(0, b);
        const double ratio = rel->u_upstream ? wu / wv : wv / wu;
        CHECK(c > 0.0);
        CHECK(c <= p.beta * std::sqrt(ratio) * (1 + 1e-12));
        // moving the downstream end further away never increases the correlation
        if (rel->u_upstream && v.offset_m + 10.0 <= 1000.0 && a != b) {
          const double further = tailup_correlation(net, w, 0.0, u, {v.segment, v.offset_m + 10.0}, p);
          CHECK(further <= c);
        }
      }
    }
  }
}

TEST_CASE("sensor coordinates are normalized") {
  const auto net = testutil::toy_network();
  for (const auto& [x, y] : net.sensor_coordinates()) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
    CHECK(y >= 0.0);
    CHECK(y <= 1.0);
  }
}
