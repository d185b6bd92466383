#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "helpers.hpp"
#include "stpp/events.hpp"

using namespace stpp;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("stpp_test_events_" + name);
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("threshold crossings") {
  CountSeries s;
  s.counts = {1, 2, 3};
  CHECK(detect_congestion(s, 5.0).empty());

  s.counts = {3, 3, 9, 9, 3};
  const auto ev = detect_congestion(s, 5.0);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].t == doctest::Approx(1.0 / 6.0));

  // one event per run; a run at the very first bin counts
  s.sensor = 4;
  s.counts = {7, 7, 1, 8, 2, 9, 9, 9};
  const auto runs = detect_congestion(s, 5.0);
  REQUIRE(runs.size() == 3);
  CHECK(runs[0].t == 0.0);
  CHECK(runs[1].t == doctest::Approx(15.0 / 60.0));
  CHECK(runs[2].t == doctest::Approx(25.0 / 60.0));
  CHECK(runs[2].sensor == 4);
  // exceedance means count >= threshold
  s.counts = {4, 5};
  CHECK(detect_congestion(s, 5.0).size() == 1);
  CHECK_THROWS_AS(detect_congestion(s, 0.0), DataError);
}

TEST_CASE("default threshold is mean plus two standard deviations") {
  CountSeries s;
  s.counts = {2, 4, 4, 4, 5, 5, 7, 9};  // mean 5, population sd 2
  CHECK(default_threshold(s) == doctest::Approx(9.0));
}

TEST_CASE("counts CSV") {
  const auto series = parse_counts_csv("sensor,bin_start_min,count\n0,0,3\n0,5,9\n1,0,2\n0,10,4\n1,5,1\n");
  REQUIRE(series.size() == 2);
  CHECK(series[0].counts == std::vector<std::int64_t>{3, 9, 4});
  CHECK(series[1].counts == std::vector<std::int64_t>{2, 1});
  CHECK_THROWS_AS(parse_counts_csv("a,b,c\n"), DataError);
  CHECK_THROWS_AS(parse_counts_csv("sensor,bin_start_min,count\n0,0,3\n0,10,3\n"), DataError);
  CHECK_THROWS_AS(parse_counts_csv("sensor,bin_start_min,count\n0,3,3\n"), DataError);
  CHECK_THROWS_AS(parse_counts_csv("sensor,bin_start_min,count\n0,0,x\n"), DataError);
}

TEST_CASE("sequence lines") {
  SUBCASE("empty sequence") {
    const auto s = parse_sequence_line(R"({"T":24.0,"congestion":[],"incidents":[]})");
    CHECK(s.horizon == 24.0);
    CHECK(s.congestion.empty());
    CHECK(parse_sequence_line(R"({"T":24.0})").congestion.empty());
  }
  SUBCASE("fields") {
    const auto s = parse_sequence_line(
        R"({"T":24.0,"congestion":[{"t":7.25,"sensor":3}],"incidents":[{"t":7.0,"segment":"L1","offset_m":500.0,"z":0.6}]})");
    REQUIRE(s.congestion.size() == 1);
    CHECK(s.congestion[0].sensor == 3);
    REQUIRE(s.incidents.size() == 1);
    CHECK(s.incidents[0].location.segment == "L1");
    CHECK(s.incidents[0].z == 0.6);
  }
  SUBCASE("short incidents are filtered") {
    const std::string line =
        R"({"T":24.0,"incidents":[{"t":1.0,"segment":"L1","offset_m":5.0,"z":0.2},{"t":2.0,"segment":"L1","offset_m":5.0,"z":0.3}]})";
    CHECK(parse_sequence_line(line).incidents.size() == 1);
    LoadOptions keep;
    keep.min_incident_hours = 0.0;
    CHECK(parse_sequence_line(line, keep).incidents.size() == 2);
  }
  SUBCASE("errors") {
    CHECK_THROWS_WITH_AS(parse_sequence_line(R"({"T":24.0,"congestion":[{"t":25.0,"sensor":0}]})"),
                         "time beyond horizon", DataError);
    CHECK_THROWS_AS(parse_sequence_line(R"({"T":24.0,"congestion":[{"t":5.0,"sensor":0},{"t":4.0,"sensor":0}]})"),
                    DataError);
    CHECK_THROWS_AS(parse_sequence_line(R"({"T":24.0,"congestion":[{"t":5.0,"sensor":0,"x":1}]})"), DataError);
    CHECK_THROWS_AS(parse_sequence_line(R"({"congestion":[]})"), DataError);
    CHECK_THROWS_AS(parse_sequence_line(R"([1,2])"), DataError);
    CHECK_THROWS_AS(parse_sequence_line(R"({"T":0})"), DataError);
    LoadOptions o;
    o.num_sensors = 2;
    CHECK_THROWS_AS(parse_sequence_line(R"({"T":1,"congestion":[{"t":0.5,"sensor":2}]})", o), DataError);
  }
  SUBCASE("same-time events ordered by sensor") {
    CHECK_NOTHROW(parse_sequence_line(R"({"T":1,"congestion":[{"t":0.5,"sensor":0},{"t":0.5,"sensor":1}]})"));
    CHECK_THROWS_AS(parse_sequence_line(R"({"T":1,"congestion":[{"t":0.5,"sensor":1},{"t":0.5,"sensor":0}]})"),
                    DataError);
  }
}

TEST_CASE("sorting") {
  EventSequence s;
  s.horizon = 2.0;
  s.congestion = {{1.5, 0}, {0.5, 2}, {0.5, 1}};
  s.incidents = {{1.0, {"b", 1.0}, 1.0}, {1.0, {"a", 3.0}, 1.0}, {0.2, {"a", 1.0}, 1.0}};
  sort_sequence(s);
  CHECK(s.congestion[0].sensor == 1);
  CHECK(s.congestion[2].t == 1.5);
  CHECK(s.incidents[0].t == 0.2);
  CHECK(s.incidents[1].location.segment == "a");
  CHECK_NOTHROW(validate_sequence(s));
}

TEST_CASE("dataset round trip") {
  Rng rng(9);
  std::vector<EventSequence> seqs;
  for (int i = 0; i < 20; ++i) {
    auto s = testutil::random_sequence(rng, static_cast<int>(uniform_index(rng, 30)), 5, 24.0);
    s.incidents.push_back({uniform(rng, 0.0, 24.0), {"L\"1", uniform(rng, 0.0, 100.0)}, uniform(rng, 0.3, 2.0)});
    seqs.push_back(s);
  }
  seqs.push_back(EventSequence{24.0, {}, {}});
  const auto path = temp_file("roundtrip.jsonl");
  save_dataset(seqs, path);
  const auto once = load_dataset(path);
  REQUIRE(once.size() == seqs.size());
  save_dataset(once, path);
  const auto twice = load_dataset(path);
  for (std::size_t i = 0; i < once.size(); ++i) {
    REQUIRE(once[i].congestion.size() == twice[i].congestion.size());
    for (std::size_t j = 0; j < once[i].congestion.size(); ++j) {
      CHECK(once[i].congestion[j].t == twice[i].congestion[j].t);
      CHECK(once[i].congestion[j].t == doctest::Approx(seqs[i].congestion[j].t).epsilon(1e-8));
      CHECK(once[i].congestion[j].sensor == seqs[i].congestion[j].sensor);
    }
    CHECK(format_sequence_line(once[i]) == format_sequence_line(twice[i]));
  }
  CHECK(once[0].incidents[0].location.segment == "L\"1");
  CHECK(infer_num_sensors(once) <= 5);
  std::filesystem::remove(path);
}

TEST_CASE("dataset errors carry the line number") {
  const auto path = temp_file("bad.jsonl");
  write_text(path, "{\"T\":1}\n\n{\"T\":1,\"congestion\":[{\"t\":2,\"sensor\":0}]}\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains(":3: time beyond horizon"), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_dataset(temp_file("missing.jsonl")), DataError);
}

TEST_CASE("mangled lines either load cleanly or raise a data error") {
  const std::string good =
      R"({"T":24.0,"congestion":[{"t":1.5,"sensor":0},{"t":7.25,"sensor":3}],"incidents":[{"t":7.0,"segment":"L1","offset_m":500.0,"z":0.6}]})";
  const std::string alphabet = "{}[]\":,.-0123456789eTtz ";
  Rng rng(31);
  int parsed = 0;
  for (int rep = 0; rep < 3000; ++rep) {
    std::string line = good;
    const int edits = 1 + static_cast<int>(uniform_index(rng, 3));
    for (int e = 0; e < edits; ++e) {
      const auto pos = uniform_index(rng, line.size());
      const char c = alphabet[uniform_index(rng, alphabet.size())];
      switch (uniform_index(rng, 3)) {
        case 0: line[pos] = c; break;
        case 1: line.erase(pos, 1); break;
        default: line.insert(pos, 1, c); break;
      }
    }
    try {
      const auto s = parse_sequence_line(line);
      CHECK_NOTHROW(validate_sequence(s));
      ++parsed;
    } catch (const DataError&) {
    }
  }
  CHECK(parsed > 0);
}

TEST_CASE("train/test split") {
  std::vector<EventSequence> seqs;
  for (int i = 0; i < 10; ++i) seqs.push_back(EventSequence{static_cast<double>(i + 1), {}, {}});
  const auto [train, test] = split_dataset(seqs, 0.8, 5);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  const auto [train2, test2] = split_dataset(seqs, 0.8, 5);
  for (std::size_t i = 0; i < train.size(); ++i) CHECK(train[i].horizon == train2[i].horizon);
  std::set<double> all;
  for (const auto& s : train) all.insert(s.horizon);
  for (const auto& s : test) all.insert(s.horizon);
  CHECK(all.size() == 10);

  std::vector<EventSequence> five(seqs.begin(), seqs.begin() + 5);
  const auto [a, b] = split_dataset(five, 0.5, 1);
  CHECK(a.size() == 3);
  CHECK(b.size() == 2);
  CHECK_THROWS_AS(split_dataset({seqs[0]}, 0.5, 1), DataError);
  CHECK_THROWS_AS(split_dataset(seqs, 1.0, 1), DataError);
}
