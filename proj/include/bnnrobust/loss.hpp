#pragma once

#include "bnnrobust/common.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

namespace bnnrobust {

/// log(sum(exp(z))) with max subtraction.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& z) {
  using std::exp;
  using std::log;
  const auto m = z.maxCoeff();
  return m + log((z.array() - m).exp().sum());
}

template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> p = (logits.array() - logits.maxCoeff()).exp().matrix();
  p /= p.sum();
  return p;
}

/// Column-wise softmax of a K x N logit matrix.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_columns(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> p = (logits.rowwise() - logits.colwise().maxCoeff()).array().exp().matrix();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

inline void check_label(Eigen::Index label, Eigen::Index num_classes) {
  if (label < 0 || label >= num_classes) {
    throw std::out_of_range(fmt::format("label {} out of range for {} classes", label, num_classes));
  }
}

/// -log softmax(logits)[label], evaluated through log-sum-exp. The largest
/// term is split off and handled by log1p, which keeps the loss accurate to
/// full relative precision when the label dominates.
template <typename Derived>
typename Derived::Scalar cross_entropy(const Eigen::MatrixBase<Derived>& logits, Eigen::Index label) {
  using std::exp;
  using std::log1p;
  using Scalar = typename Derived::Scalar;
  check_label(label, logits.size());
  Eigen::Index top = 0;
  const Scalar m = logits.maxCoeff(&top);
  Scalar rest = Scalar(0);
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (k != top) rest += exp(logits(k) - m);
  }
  return (m - logits(label)) + log1p(rest);
}

}  // namespace bnnrobust
