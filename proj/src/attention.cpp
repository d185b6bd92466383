#include "stpp/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace stpp {

void AttentionParams::validate() const {
  const auto m = score_nets.size();
  if (m == 0) throw std::invalid_argument("attention: need at least one head");
  if (value_dim < 1) throw std::invalid_argument("attention: value_dim must be >= 1");
  if (value_maps.size() != m) throw std::invalid_argument("attention: one value map per head");
  for (const auto& v : value_maps)
    if (v.size() != static_cast<std::size_t>(kEmbeddingDim * value_dim))
      throw std::invalid_argument("attention: value map must be d x p");
  if (output.size() != m * static_cast<std::size_t>(value_dim))
    throw std::invalid_argument("attention: output weights must have length M*p");
  auto finite = [](const std::vector<double>& v) {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  };
  for (const auto& net : score_nets)
    if (!finite(net.values)) throw std::invalid_argument("attention: non-finite score weights");
  if (!finite(output) || !std::isfinite(bias)) throw std::invalid_argument("attention: non-finite output");
}

AttentionParams AttentionParams::from_model(const ModelParams& params) {
  const auto& c = params.config();
  AttentionParams out;
  out.value_dim = c.value_dim;
  const auto vals = params.values();
  const auto shape = params.mlp_shape();
  const std::size_t vsize = static_cast<std::size_t>(kEmbeddingDim * c.value_dim);
  for (int m = 0; m < c.heads; ++m) {
    ad::MlpParams net(shape);
    const auto block = params.mlp_block(m);
    net.values.assign(block.begin(), block.end());
    out.score_nets.push_back(std::move(net));
    const auto v = vals.subspan(params.value_offset(m), vsize);
    out.value_maps.emplace_back(v.begin(), v.end());
  }
  const auto w = vals.subspan(params.output_offset(), static_cast<std::size_t>(c.heads * c.value_dim));
  out.output.assign(w.begin(), w.end());
  out.bias = vals[params.bias_index()];
  return out;
}

EventEmbedding embed_event(double t, double horizon, std::pair<double, double> coords) {
  return {t / horizon, coords.first, coords.second};
}

double score(const ad::MlpParams& theta, double t, double t_past, double alpha) {
  if (!(t_past < t)) throw std::invalid_argument("score: past event must precede the query");
  const double in[2] = {t - t_past, alpha};
  return ad::mlp_forward(theta.shape, theta.values,
                         std::span<const double>(in, static_cast<std::size_t>(theta.shape.input_dim)));
}

std::vector<double> normalize_scores(std::span<const double> raw) {
  if (raw.empty()) throw std::invalid_argument("normalize_scores: empty score list");
  double sum = 0.0;
  for (double r : raw) {
    if (!(r > 0.0)) throw std::invalid_argument("normalize_scores: scores must be positive");
    sum += r;
  }
  std::vector<double> out(raw.begin(), raw.end());
  for (double& r : out) r /= sum;
  return out;
}

std::vector<double> value_embedding(std::span<const double> value_map, int value_dim,
                                    const EventEmbedding& x) {
  const auto p = static_cast<std::size_t>(value_dim);
  std::vector<double> out(p, 0.0);
  for (std::size_t d = 0; d < x.size(); ++d)
    for (std::size_t j = 0; j < p; ++j) out[j] += x[d] * value_map[d * p + j];
  return out;
}

std::vector<double> attention_head(const ad::MlpParams& theta, std::span<const double> value_map,
                                   int value_dim, double t, std::span<const PastEvent> history) {
  std::vector<double> h(static_cast<std::size_t>(value_dim), 0.0);
  if (history.empty()) return h;
  std::vector<double> raw;
  raw.reserve(history.size());
  for (const auto& e : history) raw.push_back(score(theta, t, e.t, e.alpha));
  const auto w = normalize_scores(raw);
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto phi = value_embedding(value_map, value_dim, history[i].embedding);
    for (std::size_t j = 0; j < h.size(); ++j) h[j] += w[i] * phi[j];
  }
  return h;
}

double self_excitation(const AttentionParams& params, double t, std::span<const PastEvent> history) {
  if (history.empty()) return 0.0;
  double acc = params.bias;
  const auto p = static_cast<std::size_t>(params.value_dim);
  for (int m = 0; m < params.heads(); ++m) {
    const auto h = attention_head(params.score_nets[static_cast<std::size_t>(m)],
                                  params.value_maps[static_cast<std::size_t>(m)], params.value_dim,
                                  t, history);
    for (std::size_t j = 0; j < p; ++j) acc += h[j] * params.output[static_cast<std::size_t>(m) * p + j];
  }
  return softplus(acc);
}

}  // namespace stpp
