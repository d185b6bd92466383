#include "stpp/autodiff.hpp"

#include <algorithm>
#include <limits>

namespace stpp {

namespace {

// Forward pass writing hidden activations into h1/h2; returns the output
// pre-activation.
double mlp_pre_output(const ad::MlpShape& s, const double* w, const double* x, double* h1,
                      double* h2) {
  const int h = s.hidden;
  const double* w1 = w + s.w1();
  const double* b1 = w + s.b1();
  const double* w2 = w + s.w2();
  const double* b2 = w + s.b2();
  const double* w3 = w + s.w3();
  for (int r = 0; r < h; ++r) {
    double acc = b1[r];
    const double* row = w1 + r * s.input_dim;
    for (int c = 0; c < s.input_dim; ++c) acc += row[c] * x[c];
    h1[r] = std::tanh(acc);
  }
  for (int r = 0; r < h; ++r) {
    double acc = b2[r];
    const double* row = w2 + r * h;
    for (int c = 0; c < h; ++c) acc += row[c] * h1[c];
    h2[r] = std::tanh(acc);
  }
  double out = w[s.b3()];
  for (int c = 0; c < h; ++c) out += w3[c] * h2[c];
  return out;
}

}  // namespace

double ad::mlp_forward(const MlpShape& shape, std::span<const double> params,
                       std::span<const double> input) {
  if (params.size() != shape.num_params())
    throw std::invalid_argument("mlp_forward: parameter block has wrong size");
  if (input.size() != static_cast<std::size_t>(shape.input_dim))
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  thread_local std::vector<double> scratch;
  scratch.resize(2 * static_cast<std::size_t>(shape.hidden));
  const double pre = mlp_pre_output(shape, params.data(), input.data(), scratch.data(),
                                    scratch.data() + shape.hidden);
  return stpp::softplus(pre);
}

void ad::init_mlp(const MlpShape& shape, std::span<double> params, std::mt19937_64& rng) {
  if (params.size() != shape.num_params())
    throw std::invalid_argument("init_mlp: parameter block has wrong size");
  std::fill(params.begin(), params.end(), 0.0);
  auto fill_uniform = [&](std::size_t off, std::size_t n, int fan_in, int fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < n; ++i) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      params[off + i] = (2.0 * u - 1.0) * a;
    }
  };
  const auto h = static_cast<std::size_t>(shape.hidden);
  fill_uniform(shape.w1(), h * static_cast<std::size_t>(shape.input_dim), shape.input_dim,
               shape.hidden);
  fill_uniform(shape.w2(), h * h, shape.hidden, shape.hidden);
  fill_uniform(shape.w3(), h, shape.hidden, 1);
}

namespace ad {

void Tape::reserve(std::size_t n) {
  nodes_.reserve(n);
  adjoints_.reserve(n);
}

void Tape::clear() {
  nodes_.clear();
  adjoints_.clear();
  mlp_calls_.clear();
}

std::uint32_t Tape::push(Op op, double value, std::uint32_t a, std::uint32_t b, double c) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max())
    throw std::length_error("tape: node limit exceeded");
  nodes_.push_back(Node{value, c, a, b, op});
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

Var Tape::leaf(double v) { return Var{this, push(Op::kLeaf, v, 0, 0, 0.0)}; }

std::uint32_t Tape::leaves(std::span<const double> values) {
  const auto first = static_cast<std::uint32_t>(nodes_.size());
  for (double v : values) push(Op::kLeaf, v, 0, 0, 0.0);
  return first;
}

Var Tape::constant(double v) { return Var{this, push(Op::kConst, v, 0, 0, 0.0)}; }

Var Tape::unary(Op op, Var a, double c) {
  const double x = nodes_[a.index].value;
  double y = 0.0;
  switch (op) {
    case Op::kNeg: y = -x; break;
    case Op::kExp: y = std::exp(x); break;
    case Op::kLog: y = std::log(x); break;
    case Op::kTanh: y = std::tanh(x); break;
    case Op::kSoftplus: y = stpp::softplus(x); break;
    case Op::kScale: y = x * c; break;
    case Op::kShift: y = x + c; break;
    case Op::kSqrt: y = std::sqrt(x); break;
    default: throw std::logic_error("tape: not a unary op");
  }
  return Var{this, push(op, y, a.index, 0, c)};
}

Var Tape::binary(Op op, Var a, Var b) {
  const double x = nodes_[a.index].value;
  const double z = nodes_[b.index].value;
  double y = 0.0;
  switch (op) {
    case Op::kAdd: y = x + z; break;
    case Op::kSub: y = x - z; break;
    case Op::kMul: y = x * z; break;
    case Op::kDiv: y = x / z; break;
    case Op::kMax: y = x >= z ? x : z; break;
    default: throw std::logic_error("tape: not a binary op");
  }
  return Var{this, push(op, y, a.index, b.index, 0.0)};
}

Var Tape::mlp(const MlpShape& shape, std::span<const double> weights, std::uint32_t leaf_offset,
              std::span<const double> x, std::span<const std::uint32_t> nodes) {
  if (weights.size() != shape.num_params())
    throw std::invalid_argument("tape mlp: parameter block has wrong size");
  if (x.size() != static_cast<std::size_t>(shape.input_dim) || x.size() > 2 ||
      nodes.size() != x.size())
    throw std::invalid_argument("tape mlp: input dimension mismatch");
  MlpCall call{shape, weights.data(), leaf_offset, {0.0, 0.0}, {kNoNode, kNoNode}};
  for (std::size_t i = 0; i < x.size(); ++i) {
    call.inputs[i] = nodes[i];
    call.x[i] = nodes[i] == kNoNode ? x[i] : nodes_[nodes[i]].value;
  }
  scratch_.resize(2 * static_cast<std::size_t>(shape.hidden));
  const double pre = mlp_pre_output(shape, weights.data(), call.x, scratch_.data(),
                                    scratch_.data() + shape.hidden);
  mlp_calls_.push_back(call);
  return Var{this, push(Op::kMlp, stpp::softplus(pre), static_cast<std::uint32_t>(mlp_calls_.size() - 1),
                        0, pre)};
}

Var Tape::mlp(const MlpShape& shape, std::span<const double> weights, std::uint32_t leaf_offset,
              std::span<const Var> inputs) {
  double x[2] = {0.0, 0.0};
  std::uint32_t nodes[2] = {kNoNode, kNoNode};
  if (inputs.size() > 2) throw std::invalid_argument("tape mlp: input dimension mismatch");
  for (std::size_t i = 0; i < inputs.size(); ++i) nodes[i] = inputs[i].index;
  return mlp(shape, weights, leaf_offset, std::span<const double>(x, inputs.size()),
             std::span<const std::uint32_t>(nodes, inputs.size()));
}

void Tape::check_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!std::isfinite(nodes_[i].value))
      throw std::domain_error("tape: non-finite value at node " + std::to_string(i));
  }
}

void Tape::backprop_mlp(const MlpCall& call, double grad) {
  const MlpShape& s = call.shape;
  const int h = s.hidden;
  const double* w = call.weights;
  const double* x = call.x;
  scratch_.resize(4 * static_cast<std::size_t>(h));
  double* h1 = scratch_.data();
  double* h2 = h1 + h;
  double* g2 = h2 + h;
  double* g1 = g2 + h;
  const double pre = mlp_pre_output(s, w, x, h1, h2);
  const double go = grad * sigmoid(pre);
  double* adj = adjoints_.data() + call.leaf_offset;

  const double* w3 = w + s.w3();
  adj[s.b3()] += go;
  for (int c = 0; c < h; ++c) {
    adj[s.w3() + static_cast<std::size_t>(c)] += go * h2[c];
    g2[c] = go * w3[c] * (1.0 - h2[c] * h2[c]);
  }
  const double* w2 = w + s.w2();
  std::fill(g1, g1 + h, 0.0);
  for (int r = 0; r < h; ++r) {
    const double gr = g2[r];
    adj[s.b2() + static_cast<std::size_t>(r)] += gr;
    if (gr == 0.0) continue;
    double* arow = adj + s.w2() + static_cast<std::size_t>(r * h);
    const double* wrow = w2 + r * h;
    for (int c = 0; c < h; ++c) {
      arow[c] += gr * h1[c];
      g1[c] += gr * wrow[c];
    }
  }
  const double* w1 = w + s.w1();
  double gx[2] = {0.0, 0.0};
  for (int r = 0; r < h; ++r) {
    const double gr = g1[r] * (1.0 - h1[r] * h1[r]);
    adj[s.b1() + static_cast<std::size_t>(r)] += gr;
    for (int c = 0; c < s.input_dim; ++c) {
      adj[s.w1() + static_cast<std::size_t>(r * s.input_dim + c)] += gr * x[c];
      gx[c] += gr * w1[r * s.input_dim + c];
    }
  }
  for (int i = 0; i < s.input_dim; ++i)
    if (call.inputs[i] != kNoNode) adjoints_[call.inputs[i]] += gx[i];
}

void Tape::backward(Var out) {
  adjoints_.assign(nodes_.size(), 0.0);
  adjoints_[out.index] = 1.0;
  for (std::size_t k = out.index + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    const double g = adjoints_[k];
    if (g == 0.0) continue;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kAdd:
        adjoints_[n.a] += g;
        adjoints_[n.b] += g;
        break;
      case Op::kSub:
        adjoints_[n.a] += g;
        adjoints_[n.b] -= g;
        break;
      case Op::kMul:
        adjoints_[n.a] += g * nodes_[n.b].value;
        adjoints_[n.b] += g * nodes_[n.a].value;
        break;
      case Op::kDiv: {
        const double z = nodes_[n.b].value;
        adjoints_[n.a] += g / z;
        adjoints_[n.b] -= g * n.value / z;
        break;
      }
      case Op::kNeg: adjoints_[n.a] -= g; break;
      case Op::kExp: adjoints_[n.a] += g * n.value; break;
      case Op::kLog: adjoints_[n.a] += g / nodes_[n.a].value; break;
      case Op::kTanh: adjoints_[n.a] += g * (1.0 - n.value * n.value); break;
      case Op::kSoftplus: adjoints_[n.a] += g * sigmoid(nodes_[n.a].value); break;
      case Op::kScale: adjoints_[n.a] += g * n.c; break;
      case Op::kShift: adjoints_[n.a] += g; break;
      case Op::kSqrt: adjoints_[n.a] += g * 0.5 / n.value; break;
      case Op::kMax:
        if (nodes_[n.a].value >= nodes_[n.b].value)
          adjoints_[n.a] += g;
        else
          adjoints_[n.b] += g;
        break;
      case Op::kMlp: backprop_mlp(mlp_calls_[n.a], g); break;
    }
  }
}

Var operator+(Var a, Var b) { return a.tape->binary(Op::kAdd, a, b); }
Var operator-(Var a, Var b) { return a.tape->binary(Op::kSub, a, b); }
Var operator*(Var a, Var b) { return a.tape->binary(Op::kMul, a, b); }
Var operator/(Var a, Var b) { return a.tape->binary(Op::kDiv, a, b); }
Var operator-(Var a) { return a.tape->unary(Op::kNeg, a); }
Var operator+(Var a, double c) { return a.tape->unary(Op::kShift, a, c); }
Var operator+(double c, Var a) { return a.tape->unary(Op::kShift, a, c); }
Var operator-(Var a, double c) { return a.tape->unary(Op::kShift, a, -c); }
Var operator-(double c, Var a) { return a.tape->unary(Op::kShift, -a, c); }
Var operator*(Var a, double c) { return a.tape->unary(Op::kScale, a, c); }
Var operator*(double c, Var a) { return a.tape->unary(Op::kScale, a, c); }
Var operator/(Var a, double c) { return a.tape->unary(Op::kScale, a, 1.0 / c); }
Var operator/(double c, Var a) { return a.tape->binary(Op::kDiv, a.tape->constant(c), a); }
Var& operator+=(Var& a, Var b) {
  a = a + b;
  return a;
}
Var exp(Var a) { return a.tape->unary(Op::kExp, a); }
Var log(Var a) { return a.tape->unary(Op::kLog, a); }
Var tanh(Var a) { return a.tape->unary(Op::kTanh, a); }
Var softplus(Var a) { return a.tape->unary(Op::kSoftplus, a); }
Var sqrt(Var a) { return a.tape->unary(Op::kSqrt, a); }
Var max(Var a, Var b) { return a.tape->binary(Op::kMax, a, b); }

Var mlp_forward_primitive(const MlpShape& s, std::span<const Var> p, std::span<const Var> input) {
  if (p.size() != s.num_params() || input.size() != static_cast<std::size_t>(s.input_dim))
    throw std::invalid_argument("mlp_forward_primitive: shape mismatch");
  const auto h = static_cast<std::size_t>(s.hidden);
  const auto in = static_cast<std::size_t>(s.input_dim);
  std::vector<Var> h1;
  std::vector<Var> h2;
  for (std::size_t r = 0; r < h; ++r) {
    Var acc = p[s.b1() + r];
    for (std::size_t c = 0; c < in; ++c) acc = acc + p[s.w1() + r * in + c] * input[c];
    h1.push_back(tanh(acc));
  }
  for (std::size_t r = 0; r < h; ++r) {
    Var acc = p[s.b2() + r];
    for (std::size_t c = 0; c < h; ++c) acc = acc + p[s.w2() + r * h + c] * h1[c];
    h2.push_back(tanh(acc));
  }
  Var out = p[s.b3()];
  for (std::size_t c = 0; c < h; ++c) out = out + p[s.w3() + c] * h2[c];
  return softplus(out);
}

}  // namespace ad

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

double clip_global_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (double& g : grads) g *= s;
  }
  return norm;
}

}  // namespace stpp
