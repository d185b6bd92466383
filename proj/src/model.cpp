#include "stpp/model.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "stpp/random.hpp"

namespace stpp {

namespace {
using json = nlohmann::json;
constexpr int kCheckpointVersion = 1;
}  // namespace

void ModelConfig::validate() const {
  if (num_sensors < 1) throw std::invalid_argument("model: num_sensors must be >= 1");
  if (heads < 1) throw std::invalid_argument("model: heads must be >= 1");
  if (value_dim < 1) throw std::invalid_argument("model: value_dim must be >= 1");
  if (hidden < 1) throw std::invalid_argument("model: hidden width must be >= 1");
  if (!(sigma_unit_m > 0.0)) throw std::invalid_argument("model: sigma_unit_m must be positive");
  if (!background_multipliers.empty()) {
    if (!(multiplier_bin_hours > 0.0))
      throw std::invalid_argument("model: multiplier bin width must be positive");
    for (double m : background_multipliers)
      if (!(m > 0.0)) throw std::invalid_argument("model: background multipliers must be positive");
  }
}

ModelParams::ModelParams(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::size_t off = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    ParamBlock b{std::move(name), off, std::move(shape)};
    off += b.size();
    blocks_.push_back(std::move(b));
    return blocks_.back().offset;
  };
  const auto shape = mlp_shape();
  const auto h = static_cast<std::size_t>(shape.hidden);
  const auto in = static_cast<std::size_t>(shape.input_dim);
  const auto p = static_cast<std::size_t>(config_.value_dim);
  for (int m = 0; m < config_.heads; ++m) {
    const std::string prefix = "head" + std::to_string(m) + ".";
    const std::size_t start = add(prefix + "score.w1", {h, in});
    add(prefix + "score.b1", {h});
    add(prefix + "score.w2", {h, h});
    add(prefix + "score.b2", {h});
    add(prefix + "score.w3", {h});
    add(prefix + "score.b3", {1});
    mlp_off_.push_back(start);
    value_off_.push_back(add(prefix + "value", {static_cast<std::size_t>(kEmbeddingDim), p}));
  }
  output_off_ = add("output.w", {static_cast<std::size_t>(config_.heads) * p});
  bias_ = add("output.b", {1});
  gamma_ = add("gamma_raw", {1});
  beta_ = add("tailup.beta_raw", {1});
  sigma_ = add("tailup.sigma_raw", {1});
  mu0_ = add("mu0_raw", {static_cast<std::size_t>(config_.num_sensors)});
  values_.assign(off, 0.0);
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  ModelParams params(config);
  Rng rng(splitmix64(seed));
  const auto shape = params.mlp_shape();
  auto vals = params.values();
  for (int m = 0; m < config.heads; ++m) {
    ad::init_mlp(shape, vals.subspan(params.mlp_offset(m), shape.num_params()), rng);
    const double a = std::sqrt(6.0 / static_cast<double>(kEmbeddingDim + config.value_dim));
    const std::size_t n = static_cast<std::size_t>(kEmbeddingDim * config.value_dim);
    for (std::size_t i = 0; i < n; ++i) vals[params.value_offset(m) + i] = uniform(rng, -a, a);
  }
  const std::size_t mp = static_cast<std::size_t>(config.heads * config.value_dim);
  const double a = std::sqrt(6.0 / static_cast<double>(mp + 1));
  for (std::size_t i = 0; i < mp; ++i) vals[params.output_offset() + i] = uniform(rng, -a, a);
  const double raw = softplus_inverse(0.1);
  vals[params.gamma_index()] = raw;
  vals[params.beta_index()] = raw;
  vals[params.sigma_index()] = raw;
  for (int k = 0; k < config.num_sensors; ++k) vals[params.mu0_offset() + static_cast<std::size_t>(k)] = raw;
  return params;
}

const ParamBlock& ModelParams::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw std::out_of_range("no parameter block named '" + name + "'");
}

void ModelParams::set_tailup(const TailupParams& p) {
  values_[beta_] = softplus_inverse(p.beta);
  values_[sigma_] = softplus_inverse(p.sigma / config_.sigma_unit_m);
}

std::string checkpoint_to_json(const ModelParams& params) {
  const auto& c = params.config();
  json doc;
  doc["version"] = kCheckpointVersion;
  doc["config"] = {{"num_sensors", c.num_sensors},
                   {"heads", c.heads},
                   {"value_dim", c.value_dim},
                   {"hidden", c.hidden},
                   {"temporal_only", c.temporal_only},
                   {"sigma_unit_m", c.sigma_unit_m},
                   {"background_multipliers", c.background_multipliers},
                   {"multiplier_bin_hours", c.multiplier_bin_hours}};
  json ps = json::object();
  const auto vals = params.values();
  for (const auto& b : params.blocks()) {
    std::vector<double> data(vals.begin() + static_cast<std::ptrdiff_t>(b.offset),
                             vals.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()));
    ps[b.name] = {{"shape", b.shape}, {"data", data}};
  }
  doc["params"] = std::move(ps);
  return doc.dump();
}

ModelParams checkpoint_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.contains("version")) throw std::runtime_error("checkpoint: missing version field");
    if (doc.at("version").get<int>() != kCheckpointVersion)
      throw std::runtime_error("checkpoint: unsupported version");
    const auto& jc = doc.at("config");
    ModelConfig c;
    c.num_sensors = jc.at("num_sensors").get<int>();
    c.heads = jc.at("heads").get<int>();
    c.value_dim = jc.at("value_dim").get<int>();
    c.hidden = jc.at("hidden").get<int>();
    c.temporal_only = jc.at("temporal_only").get<bool>();
    c.sigma_unit_m = jc.at("sigma_unit_m").get<double>();
    c.background_multipliers = jc.at("background_multipliers").get<std::vector<double>>();
    c.multiplier_bin_hours = jc.at("multiplier_bin_hours").get<double>();
    ModelParams params(c);
    const auto& ps = doc.at("params");
    if (ps.size() != params.blocks().size())
      throw std::runtime_error("checkpoint: parameter block count mismatch");
    auto vals = params.values();
    for (const auto& b : params.blocks()) {
      const auto& jb = ps.at(b.name);
      if (jb.at("shape").get<std::vector<std::size_t>>() != b.shape)
        throw std::runtime_error("checkpoint: shape mismatch for " + b.name);
      const auto data = jb.at("data").get<std::vector<double>>();
      if (data.size() != b.size()) throw std::runtime_error("checkpoint: size mismatch for " + b.name);
      std::copy(data.begin(), data.end(), vals.begin() + static_cast<std::ptrdiff_t>(b.offset));
    }
    return params;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out << checkpoint_to_json(params) << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace stpp
