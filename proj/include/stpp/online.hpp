#pragma once

// Bounded-memory event selection for online attention. Each head keeps at
// most eta past events, ranked by their running average normalized score
// against later events.

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

namespace stpp {

class OnlineSelection {
 public:
  /// Raw score of the event being observed against a retained past event j
  /// for head m. Must be positive.
  using ScoreFn = std::function<double(int m, std::size_t j)>;

  OnlineSelection(int heads, std::size_t eta);

  /// Folds the scores of event `index` (time t) against each head's retained
  /// past events into their running averages, inserts it, and evicts the
  /// lowest-average past event once more than eta events have been seen.
  /// Events must arrive in index and time order; throws otherwise.
  void observe(std::size_t index, double t, const ScoreFn& score);

  /// Retained event indices for head m, ascending.
  [[nodiscard]] const std::vector<std::size_t>& retained(int m) const {
    return retained_[static_cast<std::size_t>(m)];
  }
  /// Running average of normalized scores received by retained event j.
  [[nodiscard]] double average(int m, std::size_t j) const;
  [[nodiscard]] std::size_t count(int m, std::size_t j) const;

  [[nodiscard]] int heads() const { return heads_; }
  [[nodiscard]] std::size_t eta() const { return eta_; }
  [[nodiscard]] std::size_t observed() const { return observed_; }
  [[nodiscard]] std::size_t score_evaluations() const { return evaluations_; }

 private:
  struct Stat {
    double t = 0.0;
    double sum = 0.0;
    std::size_t count = 0;
  };

  int heads_;
  std::size_t eta_;
  std::size_t observed_ = 0;
  std::size_t last_index_ = 0;
  double last_t_ = 0.0;
  std::size_t evaluations_ = 0;
  std::vector<std::vector<std::size_t>> retained_;
  std::vector<std::unordered_map<std::size_t, Stat>> stats_;
};

}  // namespace stpp
