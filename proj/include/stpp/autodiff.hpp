#pragma once

// Reverse-mode differentiation over a flat record of scalar primitives, the
// small score network used by the attention heads, and the Adam optimizer.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stpp {

inline double softplus(double x) {
  // log(1 + e^x) without overflow for large x
  return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) {
  if (y <= 0.0) throw std::invalid_argument("softplus_inverse: argument must be positive");
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

namespace ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t index = 0;
};

enum class Op : std::uint8_t {
  kLeaf,
  kConst,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kExp,
  kLog,
  kTanh,
  kSoftplus,
  kMax,
  kScale,  // a * c
  kShift,  // a + c
  kSqrt,
  kMlp,    // fused score network evaluation
};

/// Layer sizes of the three-layer score network: in -> hidden -> hidden -> 1.
struct MlpShape {
  int input_dim = 2;
  int hidden = 32;

  [[nodiscard]] std::size_t num_params() const {
    const auto h = static_cast<std::size_t>(hidden);
    const auto in = static_cast<std::size_t>(input_dim);
    return h * in + h + h * h + h + h + 1;
  }
  // Offsets into a flat parameter block, row-major weights.
  [[nodiscard]] std::size_t w1() const { return 0; }
  [[nodiscard]] std::size_t b1() const { return static_cast<std::size_t>(hidden * input_dim); }
  [[nodiscard]] std::size_t w2() const { return b1() + static_cast<std::size_t>(hidden); }
  [[nodiscard]] std::size_t b2() const { return w2() + static_cast<std::size_t>(hidden * hidden); }
  [[nodiscard]] std::size_t w3() const { return b2() + static_cast<std::size_t>(hidden); }
  [[nodiscard]] std::size_t b3() const { return w3() + static_cast<std::size_t>(hidden); }
};

/// Owning parameter set for one score network.
struct MlpParams {
  MlpShape shape;
  std::vector<double> values;

  MlpParams() = default;
  explicit MlpParams(MlpShape s) : shape(s), values(s.num_params(), 0.0) {}
};

/// Forward pass with tanh hidden layers and a softplus output; the result is
/// strictly positive. `params` is a flat block laid out as in MlpShape.
double mlp_forward(const MlpShape& shape, std::span<const double> params,
                   std::span<const double> input);
inline double mlp_forward(const MlpParams& net, std::span<const double> input) {
  return mlp_forward(net.shape, net.values, input);
}

/// Glorot-uniform hidden and output weights, zero biases.
void init_mlp(const MlpShape& shape, std::span<double> params, std::mt19937_64& rng);

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void reserve(std::size_t n);
  void clear();
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  Var leaf(double v);
  /// Registers a contiguous block of leaves; returns the index of the first.
  std::uint32_t leaves(std::span<const double> values);
  Var constant(double v);
  [[nodiscard]] Var at(std::uint32_t index) { return Var{this, index}; }

  [[nodiscard]] double value(Var v) const { return nodes_[v.index].value; }
  [[nodiscard]] double adjoint(Var v) const { return adjoints_[v.index]; }
  [[nodiscard]] std::span<const double> adjoints(std::uint32_t first, std::size_t n) const {
    return {adjoints_.data() + first, n};
  }

  Var unary(Op op, Var a, double c = 0.0);
  Var binary(Op op, Var a, Var b);

  static constexpr std::uint32_t kNoNode = 0xffffffffu;

  /// Score network as a single node. The weight block must stay alive until
  /// backward() returns; its gradient accumulates into the leaves starting at
  /// `leaf_offset`. Input i is the constant x[i] when nodes[i] == kNoNode,
  /// otherwise the value of that node.
  Var mlp(const MlpShape& shape, std::span<const double> weights, std::uint32_t leaf_offset,
          std::span<const double> x, std::span<const std::uint32_t> nodes);
  Var mlp(const MlpShape& shape, std::span<const double> weights, std::uint32_t leaf_offset,
          std::span<const Var> inputs);

  /// Throws std::domain_error naming the first node with a non-finite value.
  void check_finite() const;

  /// Seeds d(out)/d(out) = 1 and propagates adjoints to every node.
  void backward(Var out);

  /// Number of score-network evaluations recorded (instrumentation).
  [[nodiscard]] std::size_t mlp_calls() const { return mlp_calls_.size(); }

 private:
  struct Node {
    double value;
    double c;
    std::uint32_t a;
    std::uint32_t b;
    Op op;
  };
  struct MlpCall {
    MlpShape shape;
    const double* weights;
    std::uint32_t leaf_offset;
    double x[2];
    std::uint32_t inputs[2];
  };

  std::uint32_t push(Op op, double value, std::uint32_t a, std::uint32_t b, double c);
  void backprop_mlp(const MlpCall& call, double grad);

  std::vector<Node> nodes_;
  std::vector<double> adjoints_;
  std::vector<MlpCall> mlp_calls_;
  std::vector<double> scratch_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);
Var operator/(double c, Var a);
Var& operator+=(Var& a, Var b);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var softplus(Var a);
Var sqrt(Var a);
Var max(Var a, Var b);

inline double value_of(double x) { return x; }
inline double value_of(Var v) { return v.tape->value(v); }

/// Score network built from scalar primitives only (no fused node). Used to
/// cross-check the fused node; `params` are tape vars in MlpShape layout.
Var mlp_forward_primitive(const MlpShape& shape, std::span<const Var> params,
                          std::span<const Var> input);

/// Builds f on a fresh tape at `x` and returns (value, gradient).
template <typename F>
std::pair<double, std::vector<double>> gradient(F&& f, std::span<const double> x) {
  Tape tape;
  const auto first = tape.leaves(x);
  std::vector<Var> vars;
  vars.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) vars.push_back(tape.at(first + static_cast<std::uint32_t>(i)));
  Var out = f(std::span<const Var>(vars));
  tape.check_finite();
  tape.backward(out);
  auto adj = tape.adjoints(first, x.size());
  return {tape.value(out), std::vector<double>(adj.begin(), adj.end())};
}

}  // namespace ad

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate) : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_global_norm(std::span<double> grads, double max_norm);

}  // namespace stpp
