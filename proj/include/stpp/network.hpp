#pragma once

// Directed road-segment network, stream distances along the flow, segment
// weights per time bin and the tail-up exponential spatial correlation.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace stpp {

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NetworkLocation {
  std::string segment;
  double offset_m = 0.0;  // from the segment's upstream end
};

struct Segment {
  std::string id;
  double length_m = 0.0;
  std::vector<std::string> to;  // downstream neighbours
};

struct Sensor {
  int id = 0;
  NetworkLocation location;
};

/// Unvalidated network description, as read from the JSON network file.
struct NetworkSpec {
  std::vector<Segment> segments;
  std::vector<Sensor> sensors;
};

/// Segments where weights meet: every segment whose `to` list reaches one of
/// the outbound segments is inbound to the same junction.
struct Junction {
  std::vector<std::size_t> inbound;
  std::vector<std::size_t> outbound;
};

class TrafficNetwork {
 public:
  TrafficNetwork() = default;

  [[nodiscard]] std::size_t num_segments() const { return segments_.size(); }
  [[nodiscard]] std::size_t num_sensors() const { return sensors_.size(); }
  [[nodiscard]] const Segment& segment(std::size_t i) const { return segments_[i]; }
  [[nodiscard]] const std::vector<Segment>& segments() const { return segments_; }
  [[nodiscard]] const Sensor& sensor(std::size_t k) const { return sensors_[k]; }
  [[nodiscard]] const std::vector<Sensor>& sensors() const { return sensors_; }
  [[nodiscard]] const std::vector<std::size_t>& successors(std::size_t i) const {
    return successors_[i];
  }
  [[nodiscard]] const std::vector<std::size_t>& predecessors(std::size_t i) const {
    return predecessors_[i];
  }
  [[nodiscard]] const std::vector<Junction>& junctions() const { return junctions_; }

  /// Segment index for an id; throws NetworkError if absent.
  [[nodiscard]] std::size_t segment_index(const std::string& id) const;
  [[nodiscard]] bool has_segment(const std::string& id) const { return index_.count(id) != 0; }

  /// Throws NetworkError unless the location lies on an existing segment.
  void check_location(const NetworkLocation& loc) const;

  /// Directed along-flow distance from `from` to `to`, if `to` is reachable
  /// downstream of `from`.
  [[nodiscard]] std::optional<double> directed_distance(const NetworkLocation& from,
                                                        const NetworkLocation& to) const;

  /// Planar-like coordinates in [0,1]^2 per sensor used by the event
  /// embedding: (normalized distance from the nearest source, normalized id).
  [[nodiscard]] const std::vector<std::pair<double, double>>& sensor_coordinates() const {
    return sensor_coords_;
  }

  friend TrafficNetwork build_network(const NetworkSpec& spec);

 private:
  std::vector<Segment> segments_;
  std::vector<Sensor> sensors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> successors_;
  std::vector<std::vector<std::size_t>> predecessors_;
  std::vector<Junction> junctions_;
  std::vector<std::pair<double, double>> sensor_coords_;
};

TrafficNetwork build_network(const NetworkSpec& spec);

/// Parses the network JSON document; unknown fields are rejected.
NetworkSpec parse_network_json(const std::string& text);
TrafficNetwork load_network(const std::filesystem::path& path);
std::string network_to_json(const TrafficNetwork& net);

/// Shortest along-flow distance in either direction; absent when the two
/// locations are flow-unconnected. Zero for identical locations.
std::optional<double> stream_distance(const TrafficNetwork& net, const NetworkLocation& u,
                                      const NetworkLocation& v);

bool flow_connected(const TrafficNetwork& net, const NetworkLocation& u, const NetworkLocation& v);

/// Orientation of a flow-connected pair: distance plus whether `u` is the
/// upstream end. Picks the shorter direction when both exist (cycles).
struct FlowRelation {
  double distance_m = 0.0;
  bool u_upstream = true;
};
std::optional<FlowRelation> flow_relation(const TrafficNetwork& net, const NetworkLocation& u,
                                          const NetworkLocation& v);

/// Positive segment weights per time bin.
class SegmentWeights {
 public:
  SegmentWeights() = default;
  SegmentWeights(double bin_hours, std::size_t num_bins, std::size_t num_segments);

  [[nodiscard]] double bin_hours() const { return bin_hours_; }
  [[nodiscard]] std::size_t num_bins() const { return num_bins_; }
  [[nodiscard]] std::size_t num_segments() const { return num_segments_; }

  /// Bin index containing time t (hours); throws NetworkError when t falls
  /// outside the covered bins.
  [[nodiscard]] std::size_t bin_of(double t) const;

  [[nodiscard]] double get(std::size_t bin, std::size_t segment) const;
  void set(std::size_t bin, std::size_t segment, double w);
  [[nodiscard]] bool has(std::size_t bin, std::size_t segment) const;

  /// Weights that satisfy additivity by construction: sources carry 1, flow
  /// splits evenly at diverges and sums at merges. Requires an acyclic network.
  static SegmentWeights flow_accumulated(const TrafficNetwork& net, double bin_hours = 2.0,
                                         std::size_t num_bins = 1);

 private:
  double bin_hours_ = 2.0;
  std::size_t num_bins_ = 0;
  std::size_t num_segments_ = 0;
  std::vector<double> w_;  // NaN = missing
};

/// Reads the weights CSV (`bin_start_h,segment,weight`).
SegmentWeights load_weights_csv(const TrafficNetwork& net, const std::filesystem::path& path,
                                 double bin_hours = 2.0);
SegmentWeights parse_weights_csv(const TrafficNetwork& net, const std::string& text,
                                 double bin_hours = 2.0);

struct WeightViolation {
  std::size_t bin = 0;
  std::size_t junction = 0;
  double inbound = 0.0;
  double outbound = 0.0;
};

/// Junctions whose inbound and outbound sums differ by more than `rel_tol`
/// relative. Throws NetworkError on a missing weight entry.
std::vector<WeightViolation> validate_weights(const TrafficNetwork& net, const SegmentWeights& w,
                                              double rel_tol = 1e-6);

/// Projects small violations (at most `max_rel_gap`) onto an additive
/// assignment by proportional scaling of inbound weights. Larger violations
/// raise NetworkError.
SegmentWeights renormalize_weights(const TrafficNetwork& net, const SegmentWeights& w,
                                   double max_rel_gap = 0.05);

struct TailupParams {
  double beta = 1.0;   // covariance scale
  double sigma = 1.0;  // range, same units as stream distance
};

/// C(d) * sqrt(w(upstream) / w(downstream)) for flow-connected pairs, 0 otherwise.
double tailup_correlation(const TrafficNetwork& net, const SegmentWeights& w, double t,
                          const NetworkLocation& u, const NetworkLocation& v,
                          const TailupParams& p);

inline double tailup_covariance(double distance, const TailupParams& p) {
  return p.beta * std::exp(-distance / p.sigma);
}

}  // namespace stpp
