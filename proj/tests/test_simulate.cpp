#include <doctest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "helpers.hpp"
#include "stpp/simulate.hpp"
#include "stpp/stats.hpp"

using namespace stpp;

namespace {

EventSequence history(std::initializer_list<double> times, int sensor = 0) {
  EventSequence h;
  for (double t : times) h.congestion.push_back({t, sensor});
  return h;
}

double rate0(const IntensityModel& m, double t, const EventSequence& h) {
  std::vector<double> out(static_cast<std::size_t>(m.num_sensors()));
  m.rates(t, h, out);
  return out[0];
}

std::vector<double> pooled_intervals(const std::vector<GeneratedSequence>& seqs) {
  RescaledIntervals r;
  for (const auto& g : seqs)
    if (!g.truncated) r.add(*g.truth, g.seq);
  return r.intervals();
}

// Expected event counts of a multivariate exponential Hawkes process on [0, T]:
// m' = beta (G m - (m - mu)), counts = integral of m, by RK4.
std::vector<double> expected_counts(const std::vector<double>& mu, const std::vector<double>& gain, double beta,
                                    double T) {
  const std::size_t K = mu.size();
  std::vector<double> m = mu, count(K, 0.0);
  auto deriv = [&](const std::vector<double>& x) {
    std::vector<double> d(K);
    for (std::size_t k = 0; k < K; ++k) {
      double g = 0.0;
      for (std::size_t j = 0; j < K; ++j) g += gain[k * K + j] * x[j];
      d[k] = beta * (g - (x[k] - mu[k]));
    }
    return d;
  };
  const int steps = 20000;
  const double h = T / steps;
  for (int s = 0; s < steps; ++s) {
    auto k1 = deriv(m);
    std::vector<double> t2(K), t3(K), t4(K);
    for (std::size_t k = 0; k < K; ++k) t2[k] = m[k] + 0.5 * h * k1[k];
    auto k2 = deriv(t2);
    for (std::size_t k = 0; k < K; ++k) t3[k] = m[k] + 0.5 * h * k2[k];
    auto k3 = deriv(t3);
    for (std::size_t k = 0; k < K; ++k) t4[k] = m[k] + h * k3[k];
    auto k4 = deriv(t4);
    for (std::size_t k = 0; k < K; ++k) {
      const double next = m[k] + h / 6 * (k1[k] + 2 * k2[k] + 2 * k3[k] + k4[k]);
      count[k] += 0.5 * h * (m[k] + next);
      m[k] = next;
    }
  }
  return count;
}

}  // namespace

TEST_CASE("generator intensities") {
  SUBCASE("hawkes") {
    HawkesModel m(10.0, 1.0, 1.0);
    CHECK(rate0(m, 0.0, {}) == 10.0);
    CHECK(rate0(m, 0.3 + 1e-12, history({0.3})) == doctest::Approx(11.0));
    CHECK(rate0(m, 1.3, history({0.3})) == doctest::Approx(10.0 + std::exp(-1.0)));
    const auto h = history({0.1, 0.4});
    CHECK(m.integrated(0, 0.45, 0.9, h) ==
          doctest::Approx(testutil::trapz([&](double t) { return rate0(m, t, h); }, 0.45, 0.9, 20000)).epsilon(1e-8));
  }
  SUBCASE("self-correcting") {
    SelfCorrectingModel m(10.0, 1.0);
    CHECK(rate0(m, 0.0, {}) == 1.0);
    CHECK(rate0(m, 0.5, history({0.1, 0.2, 0.4})) == doctest::Approx(std::exp(5.0 - 3.0)));
    const auto h = history({0.1});
    CHECK(m.integrated(0, 0.1, 0.6, h) == doctest::Approx((std::exp(6.0 - 1.0) - std::exp(1.0 - 1.0)) / 10.0));
  }
  SUBCASE("nonhomogeneous") {
    NormalBumpModel one({{100.0, 1.0, 0.5}});
    CHECK(rate0(one, 0.5, {}) == doctest::Approx(100.0 / std::sqrt(2 * std::numbers::pi)));
    CHECK(rate0(one, 0.5, {}) == doctest::Approx(39.894).epsilon(1e-4));
    NormalBumpModel two({{50.0, 6.0, 0.35}, {50.0, 6.0, 0.75}});
    // two local maxima, pulled slightly towards each other by the overlap
    auto f = [&](double t) { return rate0(two, t, {}); };
    std::vector<double> peaks;
    for (int i = 1; i < 1000; ++i) {
      const double t = i / 1000.0;
      if (f(t) > f(t - 1e-3) && f(t) >= f(t + 1e-3)) peaks.push_back(t);
    }
    REQUIRE(peaks.size() == 2);
    CHECK(std::abs(peaks[0] - 0.35) < 0.05);
    CHECK(std::abs(peaks[1] - 0.75) < 0.05);
    CHECK(two.integrated(0, 0.0, 1.0, {}) ==
          doctest::Approx(testutil::trapz(f, 0.0, 1.0, 20000)).epsilon(1e-8));
  }
  SUBCASE("network hawkes with one sensor is the univariate process") {
    NetworkHawkesModel net({10.0}, {0.7}, 2.0);
    HawkesModel uni(10.0, 0.7, 2.0);
    const auto h = history({0.1, 0.25, 0.3});
    for (double t : {0.31, 0.5, 0.9}) CHECK(rate0(net, t, h) == doctest::Approx(rate0(uni, t, h)).epsilon(1e-14));
    CHECK(net.integrated(0, 0.3, 0.8, h) == doctest::Approx(uni.integrated(0, 0.3, 0.8, h)).epsilon(1e-14));
  }
}

TEST_CASE("thinning basics") {
  Rng rng(1);
  CHECK(thinning_simulate(ConstantRate(0.0), 1.0, rng).seq.congestion.empty());
  NormalBumpModel zero({{0.0, 1.0, 0.5}});
  CHECK(thinning_simulate(zero, 1.0, rng).seq.congestion.empty());

  ThinningOptions o;
  o.cap = 5;
  const auto capped = thinning_simulate(ConstantRate(100.0), 1.0, rng, o);
  CHECK(capped.truncated);
  CHECK(capped.seq.congestion.size() == 5);

  const auto s = thinning_simulate(HawkesModel(10.0, 0.5, 1.0), 1.0, rng);
  CHECK_NOTHROW(validate_sequence(s.seq));
  // times survive a text round trip unchanged
  const auto again = parse_sequence_line(format_sequence_line(s.seq));
  for (std::size_t i = 0; i < s.seq.congestion.size(); ++i) CHECK(again.congestion[i].t == s.seq.congestion[i].t);
}

TEST_CASE("constant rate mean count") {
  const int runs = 4000;
  double sum = 0.0;
  for (int r = 0; r < runs; ++r) {
    Rng rng = derived_rng(11, static_cast<std::uint64_t>(r));
    sum += static_cast<double>(thinning_simulate(ConstantRate(5.0), 1.0, rng).seq.congestion.size());
  }
  const double se = std::sqrt(5.0 / runs);
  CHECK(std::abs(sum / runs - 5.0) < 3 * se);
}

TEST_CASE("nonhomogeneous halves follow the integrals") {
  NormalBumpModel m({{50.0, 6.0, 0.35}, {50.0, 6.0, 0.75}});
  double n1 = 0, n2 = 0;
  for (int r = 0; r < 1500; ++r) {
    Rng rng = derived_rng(12, static_cast<std::uint64_t>(r));
    for (const auto& e : thinning_simulate(m, 1.0, rng).seq.congestion) (e.t < 0.5 ? n1 : n2) += 1;
  }
  const double p = m.integrated(0, 0.0, 0.5, {}) / m.integrated(0, 0.0, 1.0, {});
  const double n = n1 + n2;
  const double chi2 = (n1 - n * p) * (n1 - n * p) / (n * p) + (n2 - n * (1 - p)) * (n2 - n * (1 - p)) / (n * (1 - p));
  const double pvalue = std::erfc(std::sqrt(chi2 / 2));  // one degree of freedom
  CHECK(pvalue > 0.01);
}

TEST_CASE("self-correcting counts are under-dispersed") {
  GeneratorSpec spec;
  spec.kind = GeneratorKind::kSelfCorrecting;
  spec.count = 800;
  spec.seed = 4;
  std::vector<double> counts;
  for (const auto& g : generate(spec)) counts.push_back(static_cast<double>(g.seq.congestion.size()));
  CHECK(variance(counts) < mean(counts));
}

TEST_CASE("time rescaling on moderate samples") {
  for (auto kind : {GeneratorKind::kHawkes, GeneratorKind::kSelfCorrecting, GeneratorKind::kNonhomo1,
                    GeneratorKind::kNonhomo2}) {
    GeneratorSpec spec;
    spec.kind = kind;
    spec.alpha = kind == GeneratorKind::kHawkes ? 0.5 : 1.0;
    spec.count = 80;
    spec.seed = 21;
    const auto iv = pooled_intervals(generate(spec));
    REQUIRE(iv.size() > 500);
    INFO(generator_name(kind) << ": " << iv.size() << " intervals");
    CHECK(ks_pvalue(ks_statistic_exp1(iv), iv.size()) > 0.01);
  }
}

TEST_CASE("rescaling detects a wrong model") {
  GeneratorSpec spec;
  spec.kind = GeneratorKind::kSelfCorrecting;
  spec.count = 80;
  spec.seed = 2;
  RescaledIntervals r;
  const ConstantRate wrong(20.0);
  for (const auto& g : generate(spec)) r.add(wrong, g.seq);
  const auto& iv = r.intervals();
  CHECK(ks_pvalue(ks_statistic_exp1(iv), iv.size()) < 1e-6);
}

TEST_CASE("network generator") {
  const auto sp = testutil::toy_context();
  const TailupParams tp{0.8, 1500.0};
  const auto gains = network_gains(sp, 0.5, tp);
  // sensor 3 sits on its own road
  for (int k = 0; k < 3; ++k) {
    CHECK(gains[static_cast<std::size_t>(k * 4 + 3)] == 0.0);
    CHECK(gains[static_cast<std::size_t>(3 * 4 + k)] == 0.0);
  }
  CHECK(gains[0] == doctest::Approx(0.5 * 0.8));
  CHECK(gains[2 * 4 + 0] == doctest::Approx(0.5 * sp.sensor_alpha(tp, 0.0, 2, 0)));
  // the two merging branches do not share flow
  CHECK(gains[0 * 4 + 1] == 0.0);

  GeneratorSpec spec;
  spec.kind = GeneratorKind::kNetworkHawkes;
  spec.mu0 = {3.0, 4.0, 2.0, 5.0};
  spec.alpha = 0.5;
  spec.beta = 2.0;
  spec.tailup = tp;
  spec.count = 2000;
  spec.seed = 8;
  const auto data = generate(spec, &sp);
  const auto want = expected_counts(spec.mu0, gains, spec.beta, 1.0);
  std::array<std::vector<double>, 4> counts;
  for (const auto& g : data) {
    REQUIRE_FALSE(g.truncated);
    std::array<double, 4> c{};
    for (const auto& e : g.seq.congestion) c[static_cast<std::size_t>(e.sensor)] += 1;
    for (std::size_t k = 0; k < 4; ++k) counts[k].push_back(c[k]);
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const double se = std::sqrt(variance(counts[k]) / static_cast<double>(counts[k].size()));
    INFO("sensor " << k << " mean " << mean(counts[k]) << " expected " << want[k]);
    CHECK(std::abs(mean(counts[k]) - want[k]) < 3 * se);
  }
  // the isolated sensor's counts are uncorrelated with the others
  CHECK(std::abs(pearson(counts[3], counts[2])) < 3.0 / std::sqrt(2000.0) * 1.5);
  CHECK(std::abs(pearson(counts[3], counts[0])) < 3.0 / std::sqrt(2000.0) * 1.5);
}

TEST_CASE("generation is deterministic under the seed") {
  GeneratorSpec spec;
  spec.kind = GeneratorKind::kNonhomo2;
  spec.count = 30;
  spec.seed = 99;
  const auto a = generate(spec);
  const auto b = generate(spec);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(format_sequence_line(a[i].seq) == format_sequence_line(b[i].seq));
  spec.seed = 100;
  const auto c = generate(spec);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= format_sequence_line(a[i].seq) != format_sequence_line(c[i].seq);
  CHECK(differs);
}

TEST_CASE("generator names and validation") {
  for (auto k : {GeneratorKind::kHawkes, GeneratorKind::kSelfCorrecting, GeneratorKind::kNonhomo1,
                 GeneratorKind::kNonhomo2, GeneratorKind::kNetworkHawkes, GeneratorKind::kFittedModel})
    CHECK(parse_generator_kind(generator_name(k)) == k);
  CHECK_THROWS_AS(parse_generator_kind("poisson"), std::invalid_argument);
  GeneratorSpec spec;
  spec.mu = -1.0;
  CHECK_THROWS_AS(generate(spec), std::invalid_argument);
  spec = {};
  spec.kind = GeneratorKind::kNetworkHawkes;
  CHECK_THROWS_AS(generate(spec), std::invalid_argument);
}

TEST_CASE("sampling from a fitted model") {
  const auto sp = SpatialContext::isolated(2);
  ModelConfig cfg;
  cfg.num_sensors = 2;
  cfg.heads = 1;
  cfg.value_dim = 2;
  cfg.hidden = 4;
  const auto p = testutil::random_params(cfg, 3);
  GeneratorSpec spec;
  spec.kind = GeneratorKind::kFittedModel;
  spec.count = 40;
  spec.seed = 5;
  const auto data = generate(spec, &sp, &p);
  const auto iv = pooled_intervals(data);
  REQUIRE(iv.size() > 50);
  CHECK(ks_pvalue(ks_statistic_exp1(iv), iv.size()) > 0.01);
}

TEST_CASE("statistics helpers") {
  CHECK(ks_pvalue(0.0, 100) == doctest::Approx(1.0));
  // Kolmogorov 5% point: 1.358
  const double n = 400.0;
  const double d = 1.358 / (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n));
  CHECK(ks_pvalue(d, 400) == doctest::Approx(0.05).epsilon(0.02));
  CHECK(ks_statistic_exp1(std::vector<double>{std::log(2.0)}) == doctest::Approx(0.5));
  const std::vector<double> x = {1, 2, 3, 4}, y = {2, 4, 6, 8.5};
  CHECK(pearson(x, y) > 0.99);
  CHECK(pearson(x, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(mean(x) == 2.5);
  CHECK(variance(x) == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("rescaled streams are joined across sequences") {
  const ConstantRate two(2.0);
  RescaledIntervals r;
  r.add(two, history({0.25, 0.5}));
  r.add(two, history({}));
  r.add(two, history({0.1}));
  const std::vector<double> want = {0.5, 0.5, 1.0 + 2.0 + 0.2};
  REQUIRE(r.intervals().size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(r.intervals()[i] == doctest::Approx(want[i]));
}
