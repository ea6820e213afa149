#pragma once

// Dense feed-forward networks over a flat weight vector, with exact
// reverse-mode gradients with respect to weights and inputs.
//
// All kernels are templates on the scalar type and accept any Eigen dense
// expression. Inputs are laid out one example per column (d x N), logits are
// returned as K x N.

#include "bnnrobust/arch.hpp"
#include "bnnrobust/common.hpp"
#include "bnnrobust/loss.hpp"

#include <fmt/format.h>

#include <cmath>
#include <span>
#include <vector>

namespace bnnrobust {

enum class InitScheme { he, xavier, zeros };

/// he: N(0, 2/fan_in); xavier: N(0, 1/fan_in); zeros. Biases start at zero.
WeightVector init_weights(const NetworkArch& arch, InitScheme scheme, Rng& rng);

namespace detail {

template <typename Scalar>
struct DenseLayerView {
  Eigen::Map<const RowMajorMatrix<Scalar>> weight;
  Eigen::Map<const Vector<Scalar>> bias;
};

template <typename Scalar>
std::vector<DenseLayerView<Scalar>> map_layers(const NetworkArch& arch, const Scalar* w) {
  std::vector<DenseLayerView<Scalar>> layers;
  for (const auto& s : layer_slices(arch)) {
    layers.push_back({Eigen::Map<const RowMajorMatrix<Scalar>>(w + s.weight_offset, s.fan_out, s.fan_in),
                      Eigen::Map<const Vector<Scalar>>(w + s.bias_offset, s.fan_out)});
  }
  return layers;
}

template <typename Scalar>
void activate(Activation act, Scalar slope, Matrix<Scalar>& z) {
  switch (act) {
    case Activation::relu: z = z.cwiseMax(Scalar(0)); break;
    case Activation::leaky_relu: z = (z.array() > Scalar(0)).select(z, slope * z); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::sigmoid: z = (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix(); break;
  }
}

// Multiplies `delta` in place by the activation derivative.
// Kinks use relu'(0) = 0 and leaky_relu'(0) = slope.
template <typename Scalar>
void multiply_derivative(Activation act, Scalar slope, const Matrix<Scalar>& pre, const Matrix<Scalar>& out,
                         Matrix<Scalar>& delta) {
  switch (act) {
    case Activation::relu: delta = (pre.array() > Scalar(0)).select(delta, Scalar(0)); break;
    case Activation::leaky_relu: delta = (pre.array() > Scalar(0)).select(delta, slope * delta); break;
    case Activation::tanh: delta.array() *= (Scalar(1) - out.array().square()); break;
    case Activation::sigmoid: delta.array() *= out.array() * (Scalar(1) - out.array()); break;
  }
}

inline void check_weights(const NetworkArch& arch, Eigen::Index size) {
  if (static_cast<std::size_t>(size) != arch.parameter_count()) {
    throw ShapeError(fmt::format("weight vector has {} entries, architecture {} needs {}", size, arch.describe(),
                                 arch.parameter_count()));
  }
}

inline void check_inputs(const NetworkArch& arch, Eigen::Index rows) {
  if (rows != arch.input_dim) {
    throw ShapeError(fmt::format("input has dimension {}, architecture {} expects {}", rows, arch.describe(),
                                 arch.input_dim));
  }
}

template <typename Scalar>
struct ForwardTrace {
  std::vector<Matrix<Scalar>> pre;  // hidden pre-activations
  std::vector<Matrix<Scalar>> out;  // hidden activations
  Matrix<Scalar> logits;
};

template <typename Scalar, typename XDerived>
ForwardTrace<Scalar> run_forward(const NetworkArch& arch, const std::vector<DenseLayerView<Scalar>>& layers,
                                 const Eigen::MatrixBase<XDerived>& inputs, bool keep_trace) {
  ForwardTrace<Scalar> trace;
  const Scalar slope = static_cast<Scalar>(arch.leaky_slope);
  Matrix<Scalar> h;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix<Scalar> z;
    if (l == 0) {
      z.noalias() = layers[l].weight * inputs;
    } else {
      z.noalias() = layers[l].weight * h;
    }
    z.colwise() += layers[l].bias;
    if (l + 1 == layers.size()) {
      trace.logits = std::move(z);
      break;
    }
    if (keep_trace) trace.pre.push_back(z);
    activate(arch.activation, slope, z);
    h = std::move(z);
    if (keep_trace) trace.out.push_back(h);
  }
  return trace;
}

// Back-propagates the summed cross-entropy of every column. Weight gradients are
// multiplied by `weight_scale`; input gradients are per example and unscaled.
// Returns the summed loss.
template <typename Scalar, typename XDerived>
Scalar backprop(const NetworkArch& arch, const Scalar* w, const Eigen::MatrixBase<XDerived>& inputs,
                std::span<const int> labels, Scalar weight_scale, Scalar* weight_grad,
                Matrix<Scalar>* input_grad) {
  check_inputs(arch, inputs.rows());
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) {
    throw ShapeError(fmt::format("{} inputs but {} labels", inputs.cols(), labels.size()));
  }
  for (int y : labels) check_label(y, arch.num_classes);

  const auto layers = map_layers(arch, w);
  const auto slices = layer_slices(arch);
  auto trace = run_forward<Scalar>(arch, layers, inputs, true);

  const Eigen::Index n = inputs.cols();
  const auto col_max = trace.logits.colwise().maxCoeff().eval();
  Matrix<Scalar> delta = (trace.logits.rowwise() - col_max).array().exp().matrix();
  const auto col_sum = delta.colwise().sum().eval();
  Scalar loss = Scalar(0);
  for (Eigen::Index j = 0; j < n; ++j) {
    using std::log;
    loss += col_max(j) + log(col_sum(j)) - trace.logits(labels[j], j);
  }
  delta.array().rowwise() /= col_sum.array();
  for (Eigen::Index j = 0; j < n; ++j) delta(labels[j], j) -= Scalar(1);

  const Scalar slope = static_cast<Scalar>(arch.leaky_slope);
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (weight_grad != nullptr) {
      const auto& s = slices[l];
      Eigen::Map<RowMajorMatrix<Scalar>> gw(weight_grad + s.weight_offset, s.fan_out, s.fan_in);
      Eigen::Map<Vector<Scalar>> gb(weight_grad + s.bias_offset, s.fan_out);
      if (l == 0) {
        gw.noalias() = weight_scale * (delta * inputs.transpose());
      } else {
        gw.noalias() = weight_scale * (delta * trace.out[l - 1].transpose());
      }
      gb.noalias() = weight_scale * delta.rowwise().sum();
    }
    if (l > 0) {
      Matrix<Scalar> back = layers[l].weight.transpose() * delta;
      multiply_derivative(arch.activation, slope, trace.pre[l - 1], trace.out[l - 1], back);
      delta = std::move(back);
    } else if (input_grad != nullptr) {
      input_grad->noalias() = layers[0].weight.transpose() * delta;
    }
  }
  return loss;
}

}  // namespace detail

/// Logits (K x N) for inputs given one example per column.
template <typename WDerived, typename XDerived>
Matrix<typename WDerived::Scalar> forward(const NetworkArch& arch, const Eigen::MatrixBase<WDerived>& w,
                                          const Eigen::MatrixBase<XDerived>& inputs) {
  using Scalar = typename WDerived::Scalar;
  const Eigen::Ref<const Vector<Scalar>> wr(w);
  detail::check_weights(arch, wr.size());
  detail::check_inputs(arch, inputs.rows());
  const auto layers = detail::map_layers(arch, wr.data());
  return detail::run_forward<Scalar>(arch, layers, inputs, false).logits;
}

/// Per-example cross-entropy losses (length N).
template <typename WDerived, typename XDerived>
Vector<typename WDerived::Scalar> example_losses(const NetworkArch& arch, const Eigen::MatrixBase<WDerived>& w,
                                                 const Eigen::MatrixBase<XDerived>& inputs,
                                                 std::span<const int> labels) {
  using Scalar = typename WDerived::Scalar;
  const Matrix<Scalar> logits = forward(arch, w, inputs);
  if (static_cast<std::size_t>(logits.cols()) != labels.size()) {
    throw ShapeError(fmt::format("{} inputs but {} labels", logits.cols(), labels.size()));
  }
  Vector<Scalar> losses(logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) losses(j) = cross_entropy(logits.col(j), labels[j]);
  return losses;
}

/// Summed cross-entropy over the batch; writes `scale` times its weight gradient.
template <typename WDerived, typename XDerived>
typename WDerived::Scalar loss_sum_and_weight_gradient(const NetworkArch& arch,
                                                       const Eigen::MatrixBase<WDerived>& w,
                                                       const Eigen::MatrixBase<XDerived>& inputs,
                                                       std::span<const int> labels,
                                                       typename WDerived::Scalar scale,
                                                       Vector<typename WDerived::Scalar>& grad) {
  using Scalar = typename WDerived::Scalar;
  const Eigen::Ref<const Vector<Scalar>> wr(w);
  detail::check_weights(arch, wr.size());
  grad.resize(wr.size());
  return detail::backprop<Scalar>(arch, wr.data(), inputs, labels, scale, grad.data(), nullptr);
}

/// Gradient of the mean cross-entropy over a non-empty batch w.r.t. the weights.
template <typename WDerived, typename XDerived>
Vector<typename WDerived::Scalar> grad_weights(const NetworkArch& arch, const Eigen::MatrixBase<WDerived>& w,
                                               const Eigen::MatrixBase<XDerived>& inputs,
                                               std::span<const int> labels) {
  using Scalar = typename WDerived::Scalar;
  if (inputs.cols() == 0) throw ShapeError("grad_weights needs a non-empty batch");
  Vector<Scalar> grad;
  loss_sum_and_weight_gradient(arch, w, inputs, labels, Scalar(1) / static_cast<Scalar>(inputs.cols()), grad);
  return grad;
}

/// Per-example input gradients of the cross-entropy, one column per example (d x N).
template <typename WDerived, typename XDerived>
Matrix<typename WDerived::Scalar> input_gradients(const NetworkArch& arch, const Eigen::MatrixBase<WDerived>& w,
                                                  const Eigen::MatrixBase<XDerived>& inputs,
                                                  std::span<const int> labels) {
  using Scalar = typename WDerived::Scalar;
  const Eigen::Ref<const Vector<Scalar>> wr(w);
  detail::check_weights(arch, wr.size());
  Matrix<Scalar> grads;
  detail::backprop<Scalar>(arch, wr.data(), inputs, labels, Scalar(1), nullptr, &grads);
  return grads;
}

/// Gradient of cross_entropy(forward(w, x), label) w.r.t. the input x.
template <typename WDerived, typename XDerived>
Vector<typename WDerived::Scalar> grad_input(const NetworkArch& arch, const Eigen::MatrixBase<WDerived>& w,
                                             const Eigen::MatrixBase<XDerived>& x, int label) {
  const int labels[1] = {label};
  return input_gradients(arch, w, x, std::span<const int>(labels, 1)).col(0);
}

}  // namespace bnnrobust
