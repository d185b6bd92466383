#include "stpp/network.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

namespace stpp {

namespace {

using json = nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NetworkError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw NetworkError("unknown field '" + key + "' in " + where);
  }
}

// Dijkstra over segment start points. `seeds` are (segment, distance to its
// upstream end). Returns the distance to the start of every segment.
std::vector<double> distances_to_starts(const TrafficNetwork& net,
                                        const std::vector<std::pair<std::size_t, double>>& seeds) {
  std::vector<double> dist(net.num_segments(), kInf);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (const auto& [s, d] : seeds) {
    if (d < dist[s]) {
      dist[s] = d;
      pq.emplace(d, s);
    }
  }
  while (!pq.empty()) {
    const auto [d, s] = pq.top();
    pq.pop();
    if (d > dist[s]) continue;
    const double next = d + net.segment(s).length_m;
    for (std::size_t y : net.successors(s)) {
      if (next < dist[y]) {
        dist[y] = next;
        pq.emplace(next, y);
      }
    }
  }
  return dist;
}

double relative_gap(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale > 0.0 ? std::abs(a - b) / scale : 0.0;
}

}  // namespace

std::size_t TrafficNetwork::segment_index(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw NetworkError("unknown segment '" + id + "'");
  return it->second;
}

void TrafficNetwork::check_location(const NetworkLocation& loc) const {
  const std::size_t s = segment_index(loc.segment);
  if (!(loc.offset_m >= 0.0 && loc.offset_m <= segments_[s].length_m))
    throw NetworkError("location offset " + std::to_string(loc.offset_m) + " off segment '" +
                       loc.segment + "'");
}

std::optional<double> TrafficNetwork::directed_distance(const NetworkLocation& from,
                                                        const NetworkLocation& to) const {
  const std::size_t a = segment_index(from.segment);
  const std::size_t b = segment_index(to.segment);
  if (a == b && to.offset_m >= from.offset_m) return to.offset_m - from.offset_m;
  std::vector<std::pair<std::size_t, double>> seeds;
  const double tail = segments_[a].length_m - from.offset_m;
  for (std::size_t y : successors_[a]) seeds.emplace_back(y, tail);
  const auto dist = distances_to_starts(*this, seeds);
  if (dist[b] == kInf) return std::nullopt;
  return dist[b] + to.offset_m;
}

TrafficNetwork build_network(const NetworkSpec& spec) {
  TrafficNetwork net;
  net.segments_ = spec.segments;
  for (std::size_t i = 0; i < net.segments_.size(); ++i) {
    const Segment& s = net.segments_[i];
    if (s.id.empty()) throw NetworkError("segment with empty id");
    if (!net.index_.emplace(s.id, i).second) throw NetworkError("duplicate segment id '" + s.id + "'");
    if (!(s.length_m > 0.0) || !std::isfinite(s.length_m))
      throw NetworkError("segment '" + s.id + "' has non-positive length");
  }
  const std::size_t n = net.segments_.size();
  net.successors_.assign(n, {});
  net.predecessors_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& to : net.segments_[i].to) {
      const auto it = net.index_.find(to);
      if (it == net.index_.end())
        throw NetworkError("dangling reference: segment '" + net.segments_[i].id + "' flows to '" +
                           to + "'");
      auto& succ = net.successors_[i];
      if (std::find(succ.begin(), succ.end(), it->second) != succ.end())
        throw NetworkError("duplicate downstream reference '" + to + "'");
      succ.push_back(it->second);
      net.predecessors_[it->second].push_back(i);
    }
  }

  // Junctions: union the end point of a with the start point of b for every
  // edge a -> b. Node 2i is the start of segment i, 2i+1 its end.
  std::vector<std::size_t> parent(2 * n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b : net.successors_[a]) parent[find(2 * a + 1)] = find(2 * b);
  std::map<std::size_t, Junction> by_root;
  for (std::size_t a = 0; a < n; ++a) {
    if (!net.successors_[a].empty()) by_root[find(2 * a + 1)].inbound.push_back(a);
    if (!net.predecessors_[a].empty()) by_root[find(2 * a)].outbound.push_back(a);
  }
  for (auto& [_, j] : by_root) net.junctions_.push_back(std::move(j));
  std::sort(net.junctions_.begin(), net.junctions_.end(),
            [](const Junction& x, const Junction& y) { return x.inbound < y.inbound; });

  std::vector<Sensor> sensors = spec.sensors;
  std::sort(sensors.begin(), sensors.end(),
            [](const Sensor& x, const Sensor& y) { return x.id < y.id; });
  for (std::size_t k = 0; k < sensors.size(); ++k) {
    if (k > 0 && sensors[k].id == sensors[k - 1].id)
      throw NetworkError("duplicate sensor id " + std::to_string(sensors[k].id));
    if (sensors[k].id != static_cast<int>(k))
      throw NetworkError("sensor ids must be dense 0..K-1");
    if (!net.has_segment(sensors[k].location.segment))
      throw NetworkError("dangling reference: sensor " + std::to_string(sensors[k].id) +
                         " on unknown segment '" + sensors[k].location.segment + "'");
    net.check_location(sensors[k].location);
  }
  net.sensors_ = std::move(sensors);

  // Embedding coordinates: distance downstream from the nearest source.
  std::vector<std::pair<std::size_t, double>> seeds;
  for (std::size_t s = 0; s < n; ++s)
    if (net.predecessors_[s].empty()) seeds.emplace_back(s, 0.0);
  const auto from_source = distances_to_starts(net, seeds);
  const std::size_t k_count = net.sensors_.size();
  std::vector<double> depth(k_count, 0.0);
  double max_depth = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto& loc = net.sensors_[k].location;
    const double d = from_source[net.segment_index(loc.segment)];
    depth[k] = d == kInf ? 0.0 : d + loc.offset_m;
    max_depth = std::max(max_depth, depth[k]);
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    const double x = max_depth > 0.0 ? depth[k] / max_depth : 0.0;
    const double y = k_count > 1 ? static_cast<double>(k) / static_cast<double>(k_count - 1) : 0.0;
    net.sensor_coords_.emplace_back(x, y);
  }
  return net;
}

NetworkSpec parse_network_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw NetworkError(std::string("network file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw NetworkError("network file must be a JSON object");
  reject_unknown(doc, {"segments", "sensors"}, "network");
  NetworkSpec spec;
  try {
    for (const auto& s : doc.at("segments")) {
      reject_unknown(s, {"id", "length_m", "to"}, "segment");
      Segment seg;
      seg.id = s.at("id").get<std::string>();
      seg.length_m = s.at("length_m").get<double>();
      if (s.contains("to")) seg.to = s.at("to").get<std::vector<std::string>>();
      spec.segments.push_back(std::move(seg));
    }
    if (doc.contains("sensors")) {
      for (const auto& s : doc.at("sensors")) {
        reject_unknown(s, {"id", "segment", "offset_m"}, "sensor");
        Sensor sensor;
        sensor.id = s.at("id").get<int>();
        sensor.location.segment = s.at("segment").get<std::string>();
        sensor.location.offset_m = s.at("offset_m").get<double>();
        spec.sensors.push_back(std::move(sensor));
      }
    }
  } catch (const json::exception& e) {
    throw NetworkError(std::string("malformed network file: ") + e.what());
  }
  return spec;
}

TrafficNetwork load_network(const std::filesystem::path& path) {
  return build_network(parse_network_json(read_file(path)));
}

std::string network_to_json(const TrafficNetwork& net) {
  json doc;
  doc["segments"] = json::array();
  for (const auto& s : net.segments())
    doc["segments"].push_back({{"id", s.id}, {"length_m", s.length_m}, {"to", s.to}});
  doc["sensors"] = json::array();
  for (const auto& s : net.sensors())
    doc["sensors"].push_back(
        {{"id", s.id}, {"segment", s.location.segment}, {"offset_m", s.location.offset_m}});
  return doc.dump();
}

std::optional<FlowRelation> flow_relation(const TrafficNetwork& net, const NetworkLocation& u,
                                          const NetworkLocation& v) {
  net.check_location(u);
  net.check_location(v);
  const auto down = net.directed_distance(u, v);
  const auto up = net.directed_distance(v, u);
  if (!down && !up) return std::nullopt;
  if (down && (!up || *down <= *up)) return FlowRelation{*down, true};
  return FlowRelation{*up, false};
}

std::optional<double> stream_distance(const TrafficNetwork& net, const NetworkLocation& u,
                                      const NetworkLocation& v) {
  const auto rel = flow_relation(net, u, v);
  if (!rel) return std::nullopt;
  return rel->distance_m;
}

bool flow_connected(const TrafficNetwork& net, const NetworkLocation& u, const NetworkLocation& v) {
  return flow_relation(net, u, v).has_value();
}

SegmentWeights::SegmentWeights(double bin_hours, std::size_t num_bins, std::size_t num_segments)
    : bin_hours_(bin_hours),
      num_bins_(num_bins),
      num_segments_(num_segments),
      w_(num_bins * num_segments, std::numeric_limits<double>::quiet_NaN()) {
  if (!(bin_hours > 0.0)) throw NetworkError("weight bin duration must be positive");
}

std::size_t SegmentWeights::bin_of(double t) const {
  if (num_bins_ == 1) return 0;  // time-invariant weights
  if (!(t >= 0.0)) throw NetworkError("missing weight bin for negative time");
  const auto b = static_cast<std::size_t>(std::floor(t / bin_hours_));
  if (b >= num_bins_)
    throw NetworkError("missing weight bin for time " + std::to_string(t) + " h");
  return b;
}

double SegmentWeights::get(std::size_t bin, std::size_t segment) const {
  if (bin >= num_bins_ || segment >= num_segments_) throw NetworkError("weight index out of range");
  const double v = w_[bin * num_segments_ + segment];
  if (std::isnan(v))
    throw NetworkError("missing weight for segment " + std::to_string(segment) + " in bin " +
                       std::to_string(bin));
  return v;
}

bool SegmentWeights::has(std::size_t bin, std::size_t segment) const {
  return bin < num_bins_ && segment < num_segments_ && !std::isnan(w_[bin * num_segments_ + segment]);
}

void SegmentWeights::set(std::size_t bin, std::size_t segment, double w) {
  if (bin >= num_bins_ || segment >= num_segments_) throw NetworkError("weight index out of range");
  if (!(w > 0.0) || !std::isfinite(w)) throw NetworkError("weights must be strictly positive");
  w_[bin * num_segments_ + segment] = w;
}

SegmentWeights SegmentWeights::flow_accumulated(const TrafficNetwork& net, double bin_hours,
                                                std::size_t num_bins) {
  const std::size_t n = net.num_segments();
  // Kahn order over segments.
  std::vector<std::size_t> indeg(n, 0);
  for (std::size_t s = 0; s < n; ++s) indeg[s] = net.predecessors(s).size();
  std::queue<std::size_t> ready;
  for (std::size_t s = 0; s < n; ++s)
    if (indeg[s] == 0) ready.push(s);
  std::vector<double> w(n, 0.0);
  std::vector<double> inflow(n, 0.0);
  std::size_t visited = 0;
  while (!ready.empty()) {
    const std::size_t s = ready.front();
    ready.pop();
    ++visited;
    w[s] = net.predecessors(s).empty() ? 1.0 : inflow[s];
    const auto& succ = net.successors(s);
    // Each segment splits evenly among its successors, so every junction's
    // outbound total equals its inbound total.
    for (std::size_t y : succ) {
      inflow[y] += w[s] / static_cast<double>(succ.size());
      if (--indeg[y] == 0) ready.push(y);
    }
  }
  if (visited != n) throw NetworkError("flow-accumulated weights require an acyclic network");
  SegmentWeights out(bin_hours, num_bins, n);
  for (std::size_t b = 0; b < num_bins; ++b)
    for (std::size_t s = 0; s < n; ++s) out.set(b, s, w[s]);
  return out;
}

SegmentWeights parse_weights_csv(const TrafficNetwork& net, const std::string& text,
                                 double bin_hours) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw NetworkError("weights file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "bin_start_h,segment,weight")
    throw NetworkError("weights file header must be 'bin_start_h,segment,weight'");
  struct Row {
    std::size_t bin;
    std::size_t segment;
    double w;
  };
  std::vector<Row> rows;
  std::size_t max_bin = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c) ||
        c.find(',') != std::string::npos)
      throw NetworkError("malformed weights line " + std::to_string(line_no));
    double start = 0.0, w = 0.0;
    try {
      std::size_t pa = 0, pc = 0;
      start = std::stod(a, &pa);
      w = std::stod(c, &pc);
      if (pa != a.size() || pc != c.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw NetworkError("malformed number on weights line " + std::to_string(line_no));
    }
    const double q = start / bin_hours;
    const double r = std::round(q);
    if (start < 0.0 || std::abs(q - r) > 1e-9)
      throw NetworkError("bin_start_h not aligned to the bin duration on line " +
                         std::to_string(line_no));
    const auto bin = static_cast<std::size_t>(r);
    rows.push_back({bin, net.segment_index(b), w});
    max_bin = std::max(max_bin, bin);
  }
  if (rows.empty()) throw NetworkError("weights file has no rows");
  SegmentWeights out(bin_hours, max_bin + 1, net.num_segments());
  for (const auto& r : rows) {
    if (out.has(r.bin, r.segment)) throw NetworkError("duplicate weight entry");
    out.set(r.bin, r.segment, r.w);
  }
  for (std::size_t b = 0; b <= max_bin; ++b)
    for (std::size_t s = 0; s < net.num_segments(); ++s)
      if (!out.has(b, s))
        throw NetworkError("missing weight for segment '" + net.segment(s).id + "' in bin " +
                           std::to_string(b));
  return out;
}

SegmentWeights load_weights_csv(const TrafficNetwork& net, const std::filesystem::path& path,
                                double bin_hours) {
  return parse_weights_csv(net, read_file(path), bin_hours);
}

std::vector<WeightViolation> validate_weights(const TrafficNetwork& net, const SegmentWeights& w,
                                              double rel_tol) {
  if (w.num_segments() != net.num_segments())
    throw NetworkError("weights do not match the network's segment count");
  std::vector<WeightViolation> out;
  const auto& junctions = net.junctions();
  for (std::size_t b = 0; b < w.num_bins(); ++b) {
    for (std::size_t s = 0; s < net.num_segments(); ++s) (void)w.get(b, s);
    for (std::size_t j = 0; j < junctions.size(); ++j) {
      double in = 0.0, outflow = 0.0;
      for (std::size_t s : junctions[j].inbound) in += w.get(b, s);
      for (std::size_t s : junctions[j].outbound) outflow += w.get(b, s);
      if (relative_gap(in, outflow) > rel_tol) out.push_back({b, j, in, outflow});
    }
  }
  return out;
}

SegmentWeights renormalize_weights(const TrafficNetwork& net, const SegmentWeights& w,
                                   double max_rel_gap) {
  for (const auto& v : validate_weights(net, w, max_rel_gap)) {
    std::ostringstream msg;
    msg << "weight additivity violated beyond " << max_rel_gap * 100.0 << "% at junction "
        << v.junction << " in bin " << v.bin << ": inbound " << v.inbound << " vs outbound "
        << v.outbound;
    throw NetworkError(msg.str());
  }
  const auto& junctions = net.junctions();
  // Process downstream junctions first so scaling propagates upstream in one
  // pass on acyclic networks; cycles fall back to repeated sweeps.
  std::vector<std::size_t> end_junction(net.num_segments(), junctions.size());
  std::vector<std::size_t> start_junction(net.num_segments(), junctions.size());
  for (std::size_t j = 0; j < junctions.size(); ++j) {
    for (std::size_t s : junctions[j].inbound) end_junction[s] = j;
    for (std::size_t s : junctions[j].outbound) start_junction[s] = j;
  }
  std::vector<std::size_t> downstream_count(junctions.size(), 0);
  std::vector<std::vector<std::size_t>> upstream_of(junctions.size());
  for (std::size_t j = 0; j < junctions.size(); ++j) {
    std::set<std::size_t> next;
    for (std::size_t s : junctions[j].outbound)
      if (end_junction[s] < junctions.size()) next.insert(end_junction[s]);
    downstream_count[j] = next.size();
    for (std::size_t d : next) upstream_of[d].push_back(j);
  }
  std::vector<std::size_t> order;
  std::queue<std::size_t> ready;
  for (std::size_t j = 0; j < junctions.size(); ++j)
    if (downstream_count[j] == 0) ready.push(j);
  std::vector<bool> placed(junctions.size(), false);
  while (!ready.empty()) {
    const std::size_t j = ready.front();
    ready.pop();
    order.push_back(j);
    placed[j] = true;
    for (std::size_t u : upstream_of[j])
      if (--downstream_count[u] == 0) ready.push(u);
  }
  for (std::size_t j = 0; j < junctions.size(); ++j)
    if (!placed[j]) order.push_back(j);

  SegmentWeights out = w;
  for (std::size_t b = 0; b < out.num_bins(); ++b) {
    for (int sweep = 0; sweep < 1000; ++sweep) {
      double worst = 0.0;
      for (std::size_t j : order) {
        double in = 0.0, outflow = 0.0;
        for (std::size_t s : junctions[j].inbound) in += out.get(b, s);
        for (std::size_t s : junctions[j].outbound) outflow += out.get(b, s);
        worst = std::max(worst, relative_gap(in, outflow));
        const double scale = outflow / in;
        for (std::size_t s : junctions[j].inbound) out.set(b, s, out.get(b, s) * scale);
      }
      if (worst < 1e-13) break;
    }
  }
  if (!validate_weights(net, out, 1e-6).empty())
    throw NetworkError("weight renormalization did not converge");
  return out;
}

double tailup_correlation(const TrafficNetwork& net, const SegmentWeights& w, double t,
                          const NetworkLocation& u, const NetworkLocation& v,
                          const TailupParams& p) {
  const auto rel = flow_relation(net, u, v);
  if (!rel) return 0.0;
  const std::size_t bin = w.bin_of(t);
  const double wu = w.get(bin, net.segment_index(u.segment));
  const double wv = w.get(bin, net.segment_index(v.segment));
  const double ratio = rel->u_upstream ? wu / wv : wv / wu;
  return tailup_covariance(rel->distance_m, p) * std::sqrt(ratio);
}

}  // namespace stpp
