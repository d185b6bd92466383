#pragma once

// Congestion and incident events, count-series thresholding and the
// JSON-lines dataset format.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stpp/network.hpp"

namespace stpp {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CongestionEvent {
  double t = 0.0;  // hours
  int sensor = 0;
};

struct IncidentEvent {
  double t = 0.0;  // call time, hours
  NetworkLocation location;
  double z = 0.0;  // processing time, hours
};

struct EventSequence {
  double horizon = 1.0;
  std::vector<CongestionEvent> congestion;
  std::vector<IncidentEvent> incidents;
};

/// Throws DataError unless times are sorted, inside [0, horizon), sensors are
/// below `num_sensors` (when non-zero) and processing times are positive.
void validate_sequence(const EventSequence& seq, int num_sensors = 0);

/// Sorts both lists (ties by sensor id / segment id and offset).
void sort_sequence(EventSequence& seq);

struct CountSeries {
  int sensor = 0;
  double bin_minutes = 5.0;
  std::vector<std::int64_t> counts;
};

/// One event at each upward crossing of `threshold`, stamped at the bin start.
std::vector<CongestionEvent> detect_congestion(const CountSeries& series, double threshold);

/// Mean plus two standard deviations of the counts.
double default_threshold(const CountSeries& series);

/// Parses the counts CSV (`sensor,bin_start_min,count`), one series per
/// sensor; bins must be contiguous from 0 per sensor.
std::vector<CountSeries> parse_counts_csv(const std::string& text, double bin_minutes = 5.0);
std::vector<CountSeries> load_counts_csv(const std::filesystem::path& path,
                                         double bin_minutes = 5.0);

struct LoadOptions {
  double min_incident_hours = 0.25;  // incidents processed faster are dropped
  int num_sensors = 0;               // 0 = unchecked
};

EventSequence parse_sequence_line(const std::string& line, const LoadOptions& opts = {});
std::string format_sequence_line(const EventSequence& seq);

std::vector<EventSequence> load_dataset(const std::filesystem::path& path,
                                        const LoadOptions& opts = {});
void save_dataset(const std::vector<EventSequence>& seqs, const std::filesystem::path& path);

/// Seeded shuffle, then the first round-half-up(ratio * N) sequences train.
std::pair<std::vector<EventSequence>, std::vector<EventSequence>> split_dataset(
    const std::vector<EventSequence>& seqs, double ratio, std::uint64_t seed);

/// Number of distinct sensors referenced (max id + 1).
int infer_num_sensors(const std::vector<EventSequence>& seqs);

}  // namespace stpp
