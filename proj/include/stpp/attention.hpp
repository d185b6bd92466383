#pragma once

// Score networks, normalized attention weights, attention heads and the
// endogenous self-excitation term.

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "stpp/autodiff.hpp"
#include "stpp/model.hpp"

namespace stpp {

struct AttentionParams {
  std::vector<ad::MlpParams> score_nets;         // one per head
  std::vector<std::vector<double>> value_maps;   // d x p, row-major
  std::vector<double> output;                    // length heads * p
  double bias = 0.0;
  int value_dim = 1;

  [[nodiscard]] int heads() const { return static_cast<int>(score_nets.size()); }
  void validate() const;
  static AttentionParams from_model(const ModelParams& params);
};

using EventEmbedding = std::array<double, kEmbeddingDim>;

/// (t / horizon, sensor coordinates).
EventEmbedding embed_event(double t, double horizon, std::pair<double, double> coords);

/// A past event as seen from the query: its time, embedding and the spatial
/// correlation between the query location and its location.
struct PastEvent {
  double t = 0.0;
  EventEmbedding embedding{};
  double alpha = 0.0;
};

/// psi_theta(t - t_past, alpha) > 0; temporal-only networks see the gap alone.
/// Throws std::invalid_argument unless t_past < t.
double score(const ad::MlpParams& theta, double t, double t_past, double alpha);

/// raw / sum(raw). Throws on an empty list or a non-positive entry.
std::vector<double> normalize_scores(std::span<const double> raw);

/// Value embedding phi(x) = x^T W^v.
std::vector<double> value_embedding(std::span<const double> value_map, int value_dim,
                                    const EventEmbedding& x);

/// Score-weighted sum of value embeddings; zero vector for an empty history.
std::vector<double> attention_head(const ad::MlpParams& theta, std::span<const double> value_map,
                                   int value_dim, double t, std::span<const PastEvent> history);

/// softplus(concat(h_1..h_M)^T W + b), or 0 when the history is empty.
double self_excitation(const AttentionParams& params, double t, std::span<const PastEvent> history);

}  // namespace stpp
