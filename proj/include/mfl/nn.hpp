#pragma once

// Dense feedforward networks: forward evaluation, reverse-mode parameter
// gradients, input Jacobians, spectral norm, plain GD and Adam.
//
// Everything is float64 and value-typed. Networks are immutable once
// constructed; optimizer steps return new networks.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mfl/errors.hpp"
#include "mfl/rng.hpp"

namespace mfl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation : std::uint8_t {
  identity = 0,
  tanh = 1,
  // lower + (upper - lower) * (tanh(a) + 1) / 2, per output unit.
  bounded_affine = 2,
};

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::bounded_affine: return "bounded-affine";
  }
  return "unknown";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "bounded-affine" || s == "bounded") return Activation::bounded_affine;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::tanh;
  // Output box, only used (and required) for bounded_affine.
  Vector box_lower;
  Vector box_upper;

  Eigen::Index input_dim() const { return weight.cols(); }
  Eigen::Index output_dim() const { return weight.rows(); }
};

class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  bool empty() const noexcept { return layers_.empty(); }

  Eigen::Index input_dim() const { return layers_.empty() ? 0 : layers_.front().input_dim(); }
  Eigen::Index output_dim() const { return layers_.empty() ? 0 : layers_.back().output_dim(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  friend bool operator==(const DenseNet& a, const DenseNet& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t k = 0; k < a.layers_.size(); ++k) {
      const auto& x = a.layers_[k];
      const auto& y = b.layers_[k];
      if (x.activation != y.activation || x.weight.rows() != y.weight.rows() ||
          x.weight.cols() != y.weight.cols() || x.weight != y.weight || x.bias != y.bias ||
          x.box_lower.size() != y.box_lower.size() || x.box_lower != y.box_lower ||
          x.box_upper != y.box_upper)
        return false;
    }
    return true;
  }

 private:
  void validate() const {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& l = layers_[k];
      const std::string where = "layer " + std::to_string(k);
      if (l.weight.rows() == 0 || l.weight.cols() == 0)
        throw DimensionError(where + ": empty weight matrix");
      if (l.bias.size() != l.weight.rows())
        throw DimensionError(where + ": bias length does not match weight rows");
      if (k > 0 && l.input_dim() != layers_[k - 1].output_dim())
        throw DimensionError(where + ": input dim does not chain with previous layer");
      if (!l.weight.allFinite() || !l.bias.allFinite())
        throw NumericError(where + ": non-finite parameter");
      if (l.activation == Activation::bounded_affine) {
        if (l.box_lower.size() != l.weight.rows() || l.box_upper.size() != l.weight.rows())
          throw DimensionError(where + ": bounded-affine box has wrong length");
        if (!l.box_lower.allFinite() || !l.box_upper.allFinite() ||
            !(l.box_lower.array() < l.box_upper.array()).all())
          throw ConfigError(where + ": bounded-affine box must be finite with lower < upper");
      } else if (l.box_lower.size() != 0 || l.box_upper.size() != 0) {
        throw ConfigError(where + ": box given for a non-bounded activation");
      }
    }
  }

  std::vector<Layer> layers_;
};

// Per-layer parameter gradients, shape-congruent with a DenseNet.
struct GradientSet {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  static GradientSet zeros_like(const DenseNet& net) {
    GradientSet g;
    for (const auto& l : net.layers()) {
      g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
  }

  bool congruent_with(const DenseNet& net) const {
    if (weight.size() != net.layer_count() || bias.size() != net.layer_count()) return false;
    for (std::size_t k = 0; k < weight.size(); ++k) {
      const auto& l = net.layers()[k];
      if (weight[k].rows() != l.weight.rows() || weight[k].cols() != l.weight.cols() ||
          bias[k].size() != l.bias.size())
        return false;
    }
    return true;
  }

  GradientSet& operator+=(const GradientSet& o) {
    if (o.weight.size() != weight.size()) throw DimensionError("GradientSet += shape mismatch");
    for (std::size_t k = 0; k < weight.size(); ++k) {
      if (weight[k].rows() != o.weight[k].rows() || weight[k].cols() != o.weight[k].cols() ||
          bias[k].size() != o.bias[k].size())
        throw DimensionError("GradientSet += shape mismatch");
      weight[k] += o.weight[k];
      bias[k] += o.bias[k];
    }
    return *this;
  }

  GradientSet& operator*=(double s) {
    for (auto& w : weight) w *= s;
    for (auto& b : bias) b *= s;
    return *this;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& w : weight) s += w.squaredNorm();
    for (const auto& b : bias) s += b.squaredNorm();
    return s;
  }

  bool all_finite() const {
    for (const auto& w : weight)
      if (!w.allFinite()) return false;
    for (const auto& b : bias)
      if (!b.allFinite()) return false;
    return true;
  }

  // Flattened in layer order: weights row-major, then bias.
  Vector flatten() const {
    Eigen::Index n = 0;
    for (std::size_t k = 0; k < weight.size(); ++k) n += weight[k].size() + bias[k].size();
    Vector out(n);
    Eigen::Index i = 0;
    for (std::size_t k = 0; k < weight.size(); ++k) {
      for (Eigen::Index r = 0; r < weight[k].rows(); ++r)
        for (Eigen::Index c = 0; c < weight[k].cols(); ++c) out[i++] = weight[k](r, c);
      for (Eigen::Index r = 0; r < bias[k].size(); ++r) out[i++] = bias[k][r];
    }
    return out;
  }
};

namespace detail {

inline Matrix activate(const Layer& l, const Matrix& pre) {
  switch (l.activation) {
    case Activation::identity: return pre;
    case Activation::tanh: return pre.array().tanh().matrix();
    case Activation::bounded_affine: {
      const Vector half = 0.5 * (l.box_upper - l.box_lower);
      Matrix out = ((pre.array().tanh() + 1.0).colwise() * half.array()).matrix();
      out.colwise() += l.box_lower;
      return out;
    }
  }
  return pre;
}

// d activation / d pre-activation, elementwise.
inline Matrix activation_slope(const Layer& l, const Matrix& pre) {
  switch (l.activation) {
    case Activation::identity: return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::tanh: return (1.0 - pre.array().tanh().square()).matrix();
    case Activation::bounded_affine: {
      const Vector half = 0.5 * (l.box_upper - l.box_lower);
      return ((1.0 - pre.array().tanh().square()).colwise() * half.array()).matrix();
    }
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

// Columns are samples. Keeps every layer's input and pre-activation.
struct ForwardTape {
  std::vector<Matrix> inputs;  // inputs[k] feeds layer k
  std::vector<Matrix> pre;     // pre[k] = W_k inputs[k] + b_k
  Matrix output;
};

inline void check_input(const DenseNet& net, const Eigen::Ref<const Matrix>& x) {
  if (net.empty()) throw DimensionError("network has no layers");
  if (x.rows() != net.input_dim())
    throw DimensionError("input has " + std::to_string(x.rows()) + " rows, network expects " +
                         std::to_string(net.input_dim()));
  if (!x.allFinite()) throw NumericError("non-finite network input");
}

inline ForwardTape record_forward(const DenseNet& net, const Eigen::Ref<const Matrix>& x) {
  check_input(net, x);
  ForwardTape tape;
  Matrix h = x;
  for (const auto& l : net.layers()) {
    Matrix a = (l.weight * h).colwise() + l.bias;
    tape.inputs.push_back(std::move(h));
    h = activate(l, a);
    tape.pre.push_back(std::move(a));
  }
  tape.output = std::move(h);
  return tape;
}

// Backpropagates `upstream` (output_dim x batch) through a recorded tape.
// Parameter gradients are summed over the batch. Returns d/d(input).
inline Matrix backpropagate(const DenseNet& net, const ForwardTape& tape,
                            const Eigen::Ref<const Matrix>& upstream, GradientSet* grads) {
  Matrix g = upstream;
  for (std::size_t k = net.layer_count(); k-- > 0;) {
    const auto& l = net.layers()[k];
    g.array() *= activation_slope(l, tape.pre[k]).array();
    if (grads) {
      grads->weight[k].noalias() += g * tape.inputs[k].transpose();
      grads->bias[k] += g.rowwise().sum();
    }
    g = l.weight.transpose() * g;
  }
  return g;
}

}  // namespace detail

inline Vector forward(const DenseNet& net, const Vector& x) {
  detail::check_input(net, x);
  Matrix h = x;
  for (const auto& l : net.layers()) h = detail::activate(l, (l.weight * h).colwise() + l.bias);
  return h.col(0);
}

// Batched forward; columns of `x` are samples.
inline Matrix forward_batch(const DenseNet& net, const Matrix& x) {
  detail::check_input(net, x);
  Matrix h = x;
  for (const auto& l : net.layers()) h = detail::activate(l, (l.weight * h).colwise() + l.bias);
  return h;
}

// d(upstream . net(x)) / d(theta), exact reverse accumulation.
inline GradientSet grad_params(const DenseNet& net, const Vector& x, const Vector& upstream) {
  if (upstream.size() != net.output_dim())
    throw DimensionError("upstream length does not match network output dim");
  const auto tape = detail::record_forward(net, x);
  GradientSet g = GradientSet::zeros_like(net);
  detail::backpropagate(net, tape, upstream, &g);
  return g;
}

// Sum over columns of d(upstream_i . net(x_i)) / d(theta).
inline GradientSet grad_params_batch(const DenseNet& net, const Matrix& x, const Matrix& upstream) {
  if (upstream.rows() != net.output_dim() || upstream.cols() != x.cols())
    throw DimensionError("upstream shape does not match batch output");
  const auto tape = detail::record_forward(net, x);
  GradientSet g = GradientSet::zeros_like(net);
  detail::backpropagate(net, tape, upstream, &g);
  return g;
}

// Vector-Jacobian product: J(x)^T upstream.
inline Vector grad_input(const DenseNet& net, const Vector& x, const Vector& upstream) {
  if (upstream.size() != net.output_dim())
    throw DimensionError("upstream length does not match network output dim");
  const auto tape = detail::record_forward(net, x);
  return detail::backpropagate(net, tape, upstream, nullptr).col(0);
}

// Exact d net(x) / dx, output_dim x input_dim.
inline Matrix jacobian_input(const DenseNet& net, const Vector& x) {
  detail::check_input(net, x);
  Vector h = x;
  Matrix jac = Matrix::Identity(x.size(), x.size());
  for (const auto& l : net.layers()) {
    Matrix pre = l.weight * h + l.bias;
    const Vector slope = detail::activation_slope(l, pre).col(0);
    jac = slope.asDiagonal() * (l.weight * jac);
    h = detail::activate(l, pre).col(0);
  }
  return jac;
}

// Largest singular value by power iteration on A^T A. Stops when the
// Rayleigh quotient changes by <= rel_tol (relative) or after max_iter.
inline double induced_l2_norm(const Matrix& a, double rel_tol = 1e-8, int max_iter = 200) {
  if (a.size() == 0) throw DimensionError("induced_l2_norm of an empty matrix");
  if (!a.allFinite()) throw NumericError("induced_l2_norm of a non-finite matrix");
  const Matrix ata = a.transpose() * a;
  Rng rng(0x5eedULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(ata.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = u(rng);
  v.normalize();
  double lambda = v.dot(ata * v);
  for (int it = 0; it < max_iter; ++it) {
    Vector w = ata * v;
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    const double next = v.dot(ata * v);
    const bool done = std::abs(next - lambda) <= rel_tol * std::abs(next);
    lambda = next;
    if (done) break;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

// theta <- theta - alpha * grad.
inline DenseNet gd_step(const DenseNet& net, const GradientSet& grads, double alpha) {
  if (!grads.congruent_with(net)) throw DimensionError("gradient shape does not match network");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("learning rate must be >= 0");
  std::vector<Layer> layers = net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    layers[k].weight -= alpha * grads.weight[k];
    layers[k].bias -= alpha * grads.bias[k];
  }
  return DenseNet(std::move(layers));
}

struct AdamState {
  GradientSet first_moment;
  GradientSet second_moment;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_net(const DenseNet& net) {
    AdamState s;
    s.first_moment = GradientSet::zeros_like(net);
    s.second_moment = GradientSet::zeros_like(net);
    return s;
  }
};

namespace detail {

// One bias-corrected Adam update of a parameter block, in place.
template <class Param, class Grad, class Moment>
void adam_update(Param& param, const Grad& grad, Moment& m, Moment& v, long step, double eta,
                 double beta1, double beta2, double eps) {
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  param.array() -= eta * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

}  // namespace detail

inline std::pair<DenseNet, AdamState> adam_step(const DenseNet& net, const GradientSet& grads,
                                                AdamState state, double eta) {
  if (!grads.congruent_with(net) || !state.first_moment.congruent_with(net) ||
      !state.second_moment.congruent_with(net))
    throw DimensionError("Adam state/gradient shape does not match network");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("Adam learning rate must be > 0");
  std::vector<Layer> layers = net.layers();
  ++state.step;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    detail::adam_update(layers[k].weight, grads.weight[k], state.first_moment.weight[k],
                        state.second_moment.weight[k], state.step, eta, state.beta1, state.beta2,
                        state.epsilon);
    detail::adam_update(layers[k].bias, grads.bias[k], state.first_moment.bias[k],
                        state.second_moment.bias[k], state.step, eta, state.beta1, state.beta2,
                        state.epsilon);
  }
  return {DenseNet(std::move(layers)), std::move(state)};
}

// Adam over a plain parameter vector (used to refine baseline inputs).
class VectorAdam {
 public:
  explicit VectorAdam(Eigen::Index n, double eta, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8)
      : m_(Vector::Zero(n)), v_(Vector::Zero(n)), eta_(eta), beta1_(beta1), beta2_(beta2),
        eps_(eps) {
    if (!(eta > 0.0)) throw ConfigError("Adam learning rate must be > 0");
  }

  void step(Vector& param, const Vector& grad) {
    if (grad.size() != param.size() || grad.size() != m_.size())
      throw DimensionError("VectorAdam shape mismatch");
    ++t_;
    detail::adam_update(param, grad, m_, v_, t_, eta_, beta1_, beta2_, eps_);
  }

  long steps() const noexcept { return t_; }

 private:
  Vector m_, v_;
  double eta_, beta1_, beta2_, eps_;
  long t_ = 0;
};

struct NetShape {
  Eigen::Index input_dim = 0;
  std::vector<int> hidden;
  Eigen::Index output_dim = 0;
  Activation hidden_activation = Activation::tanh;
  Activation output_activation = Activation::identity;
  Vector box_lower;  // bounded_affine output only
  Vector box_upper;
};

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline DenseNet init_dense_net(const NetShape& shape, std::uint64_t seed) {
  if (shape.input_dim <= 0 || shape.output_dim <= 0)
    throw DimensionError("network dims must be positive");
  Rng rng(seed);
  std::vector<Eigen::Index> dims{shape.input_dim};
  for (int h : shape.hidden) {
    if (h <= 0) throw DimensionError("hidden widths must be positive");
    dims.push_back(h);
  }
  dims.push_back(shape.output_dim);
  std::vector<Layer> layers;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const Eigen::Index fan_in = dims[k], fan_out = dims[k + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Layer l;
    l.weight.resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r)
      for (Eigen::Index c = 0; c < fan_in; ++c) l.weight(r, c) = u(rng);
    l.bias = Vector::Zero(fan_out);
    const bool last = k + 2 == dims.size();
    l.activation = last ? shape.output_activation : shape.hidden_activation;
    if (l.activation == Activation::bounded_affine) {
      l.box_lower = shape.box_lower;
      l.box_upper = shape.box_upper;
    }
    layers.push_back(std::move(l));
  }
  return DenseNet(std::move(layers));
}

}  // namespace mfl
