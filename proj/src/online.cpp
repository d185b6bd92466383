#include "stpp/online.hpp"

#include <stdexcept>

namespace stpp {

OnlineSelection::OnlineSelection(int heads, std::size_t eta)
    : heads_(heads), eta_(eta), retained_(static_cast<std::size_t>(heads)),
      stats_(static_cast<std::size_t>(heads)) {
  if (heads < 1) throw std::invalid_argument("online selection: heads must be >= 1");
  if (eta < 1) throw std::invalid_argument("online selection: eta must be >= 1");
}

double OnlineSelection::average(int m, std::size_t j) const {
  const auto& s = stats_[static_cast<std::size_t>(m)].at(j);
  return s.count == 0 ? 0.0 : s.sum / static_cast<double>(s.count);
}

std::size_t OnlineSelection::count(int m, std::size_t j) const {
  return stats_[static_cast<std::size_t>(m)].at(j).count;
}

void OnlineSelection::observe(std::size_t index, double t, const ScoreFn& score) {
  if (observed_ > 0 && (index <= last_index_ || t < last_t_))
    throw std::invalid_argument("online selection: out-of-order event");
  std::vector<double> raw;
  for (int m = 0; m < heads_; ++m) {
    auto& kept = retained_[static_cast<std::size_t>(m)];
    auto& stats = stats_[static_cast<std::size_t>(m)];
    raw.assign(kept.size(), 0.0);
    double total = 0.0;
    for (std::size_t a = 0; a < kept.size(); ++a) {
      if (!(stats.at(kept[a]).t < t)) continue;
      raw[a] = score(m, kept[a]);
      ++evaluations_;
      if (!(raw[a] > 0.0)) throw std::domain_error("online selection: scores must be positive");
      total += raw[a];
    }
    for (std::size_t a = 0; a < kept.size(); ++a) {
      auto& s = stats.at(kept[a]);
      if (!(s.t < t)) continue;
      s.sum += raw[a] / total;
      ++s.count;
    }
    kept.push_back(index);
    stats.emplace(index, Stat{t, 0.0, 0});

    if (observed_ + 1 > eta_) {
      std::size_t victim = kept.size();
      double best = 0.0;
      for (std::size_t a = 0; a < kept.size(); ++a) {
        const auto& s = stats.at(kept[a]);
        if (!(s.t < t)) continue;
        const double avg = s.sum / static_cast<double>(s.count);
        if (victim == kept.size() || avg < best) {  // strict: oldest wins ties
          victim = a;
          best = avg;
        }
      }
      if (victim != kept.size()) {
        stats.erase(kept[victim]);
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(victim));
      }
    }
  }
  ++observed_;
  last_index_ = index;
  last_t_ = t;
}

}  // namespace stpp
