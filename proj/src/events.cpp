#include "stpp/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "stpp/random.hpp"

namespace stpp {

namespace {

using json = nlohmann::json;

bool incident_less(const IncidentEvent& a, const IncidentEvent& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.location.segment != b.location.segment) return a.location.segment < b.location.segment;
  return a.location.offset_m < b.location.offset_m;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const char* where) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw DataError("unknown field '" + key + "' in " + where);
  }
}

std::string fmt9(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

}  // namespace

void validate_sequence(const EventSequence& seq, int num_sensors) {
  if (!(seq.horizon > 0.0) || !std::isfinite(seq.horizon))
    throw DataError("horizon must be positive");
  const CongestionEvent* prev = nullptr;
  for (const auto& e : seq.congestion) {
    if (!(e.t >= 0.0)) throw DataError("negative event time");
    if (!(e.t < seq.horizon)) throw DataError("time beyond horizon");
    if (e.sensor < 0 || (num_sensors > 0 && e.sensor >= num_sensors))
      throw DataError("sensor id " + std::to_string(e.sensor) + " out of range");
    if (prev && (e.t < prev->t || (e.t == prev->t && e.sensor <= prev->sensor)))
      throw DataError("unsorted times in congestion events");
    prev = &e;
  }
  const IncidentEvent* iprev = nullptr;
  for (const auto& y : seq.incidents) {
    if (!(y.t >= 0.0)) throw DataError("negative incident time");
    if (!(y.t < seq.horizon)) throw DataError("time beyond horizon");
    if (!(y.z > 0.0)) throw DataError("incident processing time must be positive");
    if (iprev && incident_less(y, *iprev)) throw DataError("unsorted times in incidents");
    iprev = &y;
  }
}

void sort_sequence(EventSequence& seq) {
  std::stable_sort(seq.congestion.begin(), seq.congestion.end(),
                   [](const CongestionEvent& a, const CongestionEvent& b) {
                     return a.t != b.t ? a.t < b.t : a.sensor < b.sensor;
                   });
  std::stable_sort(seq.incidents.begin(), seq.incidents.end(), incident_less);
}

std::vector<CongestionEvent> detect_congestion(const CountSeries& series, double threshold) {
  if (!(threshold > 0.0)) throw DataError("threshold must be positive");
  if (!(series.bin_minutes > 0.0)) throw DataError("bin duration must be positive");
  std::vector<CongestionEvent> out;
  bool above = false;
  for (std::size_t i = 0; i < series.counts.size(); ++i) {
    const bool now = static_cast<double>(series.counts[i]) >= threshold;
    if (now && !above)
      out.push_back({static_cast<double>(i) * series.bin_minutes / 60.0, series.sensor});
    above = now;
  }
  return out;
}

double default_threshold(const CountSeries& series) {
  if (series.counts.empty()) throw DataError("empty count series");
  double mean = 0.0;
  for (auto c : series.counts) mean += static_cast<double>(c);
  mean /= static_cast<double>(series.counts.size());
  double var = 0.0;
  for (auto c : series.counts) var += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean);
  var /= static_cast<double>(series.counts.size());
  const double thr = mean + 2.0 * std::sqrt(var);
  return thr > 0.0 ? thr : 1.0;
}

std::vector<CountSeries> parse_counts_csv(const std::string& text, double bin_minutes) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("counts file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "sensor,bin_start_min,count")
    throw DataError("counts file header must be 'sensor,bin_start_min,count'");
  std::map<int, std::map<long long, std::int64_t>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    int sensor = 0;
    double start = 0.0;
    long long count = 0;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lld%c", &sensor, &start, &count, &tail) != 3 ||
        count < 0 || sensor < 0)
      throw DataError("malformed counts line " + std::to_string(line_no));
    const double q = start / bin_minutes;
    if (std::abs(q - std::round(q)) > 1e-9 || q < 0)
      throw DataError("bin_start_min not aligned on line " + std::to_string(line_no));
    if (!rows[sensor].emplace(std::llround(q), count).second)
      throw DataError("duplicate count bin on line " + std::to_string(line_no));
  }
  std::vector<CountSeries> out;
  for (const auto& [sensor, bins] : rows) {
    CountSeries s{sensor, bin_minutes, {}};
    long long expect = 0;
    for (const auto& [bin, c] : bins) {
      if (bin != expect) throw DataError("count bins not contiguous for sensor " + std::to_string(sensor));
      s.counts.push_back(c);
      ++expect;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<CountSeries> load_counts_csv(const std::filesystem::path& path, double bin_minutes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_counts_csv(ss.str(), bin_minutes);
}

EventSequence parse_sequence_line(const std::string& line, const LoadOptions& opts) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed line: ") + e.what());
  }
  if (!doc.is_object()) throw DataError("malformed line: not a JSON object");
  reject_unknown(doc, {"T", "congestion", "incidents"}, "sequence");
  EventSequence seq;
  try {
    seq.horizon = doc.at("T").get<double>();
    if (doc.contains("congestion")) {
      for (const auto& e : doc.at("congestion")) {
        reject_unknown(e, {"t", "sensor"}, "congestion event");
        seq.congestion.push_back({e.at("t").get<double>(), e.at("sensor").get<int>()});
      }
    }
    if (doc.contains("incidents")) {
      for (const auto& y : doc.at("incidents")) {
        reject_unknown(y, {"t", "segment", "offset_m", "z"}, "incident");
        IncidentEvent inc;
        inc.t = y.at("t").get<double>();
        inc.location.segment = y.at("segment").get<std::string>();
        inc.location.offset_m = y.at("offset_m").get<double>();
        inc.z = y.at("z").get<double>();
        seq.incidents.push_back(std::move(inc));
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed line: ") + e.what());
  }
  validate_sequence(seq, opts.num_sensors);
  std::erase_if(seq.incidents,
                [&](const IncidentEvent& y) { return y.z < opts.min_incident_hours; });
  return seq;
}

std::string format_sequence_line(const EventSequence& seq) {
  std::string s = "{\"T\":" + fmt9(seq.horizon) + ",\"congestion\":[";
  for (std::size_t i = 0; i < seq.congestion.size(); ++i) {
    if (i) s += ',';
    s += "{\"t\":" + fmt9(seq.congestion[i].t) +
         ",\"sensor\":" + std::to_string(seq.congestion[i].sensor) + "}";
  }
  s += "],\"incidents\":[";
  for (std::size_t i = 0; i < seq.incidents.size(); ++i) {
    const auto& y = seq.incidents[i];
    if (i) s += ',';
    s += "{\"t\":" + fmt9(y.t) + ",\"segment\":" + json(y.location.segment).dump() +
         ",\"offset_m\":" + fmt9(y.location.offset_m) + ",\"z\":" + fmt9(y.z) + "}";
  }
  s += "]}";
  return s;
}

std::vector<EventSequence> load_dataset(const std::filesystem::path& path,
                                        const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::vector<EventSequence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(parse_sequence_line(line, opts));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_dataset(const std::vector<EventSequence>& seqs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  for (const auto& s : seqs) out << format_sequence_line(s) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::pair<std::vector<EventSequence>, std::vector<EventSequence>> split_dataset(
    const std::vector<EventSequence>& seqs, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw DataError("split ratio must lie in (0, 1)");
  if (seqs.size() < 2) throw DataError("need at least 2 sequences to split");
  std::vector<std::size_t> order(seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(splitmix64(seed));
  shuffle(order, rng);
  const auto n_train =
      static_cast<std::size_t>(std::floor(ratio * static_cast<double>(seqs.size()) + 0.5));
  std::pair<std::vector<EventSequence>, std::vector<EventSequence>> out;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? out.first : out.second).push_back(seqs[order[i]]);
  return out;
}

int infer_num_sensors(const std::vector<EventSequence>& seqs) {
  int k = 0;
  for (const auto& s : seqs)
    for (const auto& e : s.congestion) k = std::max(k, e.sensor + 1);
  return std::max(k, 1);
}

}  // namespace stpp
