#pragma once

// Flat parameter vector for the attention point process with named blocks,
// positivity maps, initialization and checkpoint I/O.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stpp/autodiff.hpp"
#include "stpp/network.hpp"

namespace stpp {

inline constexpr int kEmbeddingDim = 3;

struct ModelConfig {
  int num_sensors = 1;
  int heads = 3;
  int value_dim = 8;
  int hidden = 32;
  bool temporal_only = false;
  // sigma = sigma_unit_m * softplus(raw); keeps the range parameter on a
  // scale where Adam steps are meaningful for distances in meters.
  double sigma_unit_m = 10000.0;
  // Optional fixed time-of-day multipliers on the background rate, one per
  // bin of `multiplier_bin_hours`, repeating with period bins * width.
  std::vector<double> background_multipliers;
  double multiplier_bin_hours = 1.0;

  void validate() const;
  [[nodiscard]] int score_input_dim() const { return temporal_only ? 1 : 2; }
};

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;
  [[nodiscard]] std::size_t size() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

class ModelParams {
 public:
  ModelParams() : ModelParams(ModelConfig{}) {}
  explicit ModelParams(ModelConfig config);  // all raw values zero

  /// Glorot score networks and value maps, zero biases; every positive
  /// scalar starts at softplus(raw) = 0.1 (in sigma_unit_m units for sigma).
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  [[nodiscard]] std::span<double> values() { return values_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] const std::vector<ParamBlock>& blocks() const { return blocks_; }
  [[nodiscard]] const ParamBlock& block(const std::string& name) const;

  [[nodiscard]] ad::MlpShape mlp_shape() const {
    return {config_.score_input_dim(), config_.hidden};
  }
  [[nodiscard]] std::size_t mlp_offset(int head) const { return mlp_off_[static_cast<std::size_t>(head)]; }
  [[nodiscard]] std::span<const double> mlp_block(int head) const {
    return std::span<const double>(values_).subspan(mlp_offset(head), mlp_shape().num_params());
  }
  /// Value map W_m^v, row-major d x p.
  [[nodiscard]] std::size_t value_offset(int head) const { return value_off_[static_cast<std::size_t>(head)]; }
  [[nodiscard]] std::size_t output_offset() const { return output_off_; }  // W, length M*p
  [[nodiscard]] std::size_t bias_index() const { return bias_; }
  [[nodiscard]] std::size_t gamma_index() const { return gamma_; }
  [[nodiscard]] std::size_t beta_index() const { return beta_; }
  [[nodiscard]] std::size_t sigma_index() const { return sigma_; }
  [[nodiscard]] std::size_t mu0_offset() const { return mu0_; }

  // Mapped (constrained) values.
  [[nodiscard]] double gamma() const { return softplus(values_[gamma_]); }
  [[nodiscard]] TailupParams tailup() const {
    return {softplus(values_[beta_]), config_.sigma_unit_m * softplus(values_[sigma_])};
  }
  [[nodiscard]] double mu0(int k) const {
    return softplus(values_[mu0_ + static_cast<std::size_t>(k)]);
  }
  void set_gamma(double g) { values_[gamma_] = softplus_inverse(g); }
  void set_tailup(const TailupParams& p);
  void set_mu0(int k, double mu) { values_[mu0_ + static_cast<std::size_t>(k)] = softplus_inverse(mu); }

 private:
  ModelConfig config_;
  std::vector<double> values_;
  std::vector<ParamBlock> blocks_;
  std::vector<std::size_t> mlp_off_;
  std::vector<std::size_t> value_off_;
  std::size_t output_off_ = 0, bias_ = 0, gamma_ = 0, beta_ = 0, sigma_ = 0, mu0_ = 0;
};

/// JSON checkpoint: {"version":1,"config":{...},"params":{name:{"shape":[..],"data":[..]}}}.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_json(const ModelParams& params);
ModelParams checkpoint_from_json(const std::string& text);

}  // namespace stpp
