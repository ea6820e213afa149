#include "bnnrobust/metrics.hpp"

#include "bnnrobust/predictive.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bnnrobust {
namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError(fmt::format("correlation of {} and {} values", x.size(), y.size()));
  if (x.size() < 2) throw ShapeError("correlation needs at least two points");
}

}  // namespace

double adversarial_accuracy(const PosteriorEnsemble& ensemble, const Dataset& testset, const Eigen::MatrixXd& attacked) {
  if (attacked.cols() != testset.size() || attacked.rows() != testset.dim()) {
    throw ShapeError(fmt::format("attacked batch is {}x{}, test set is {}x{}", attacked.rows(), attacked.cols(),
                                 testset.dim(), testset.size()));
  }
  if (testset.size() == 0) throw ShapeError("adversarial accuracy of an empty test set");
  const auto predicted = predict_labels(ensemble, attacked);
  std::size_t correct = 0;
  for (std::size_t j = 0; j < predicted.size(); ++j) correct += predicted[j] == testset.labels[j];
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

double adversarial_accuracy(const PosteriorEnsemble& ensemble, const Dataset& testset, AttackKind kind,
                            const AttackConfig& cfg, std::uint64_t seed) {
  return adversarial_accuracy(ensemble, testset,
                              attack_batch(kind, ensemble, testset.inputs, testset.label_span(), cfg, seed));
}

double softmax_difference(const Eigen::MatrixXd& clean_probs, const Eigen::MatrixXd& attacked_probs) {
  if (clean_probs.rows() != attacked_probs.rows() || clean_probs.cols() != attacked_probs.cols()) {
    throw ShapeError("softmax_difference: probability matrices differ in shape");
  }
  if (clean_probs.cols() == 0) throw ShapeError("softmax_difference of zero points");
  return (clean_probs - attacked_probs).cwiseAbs().colwise().maxCoeff().mean();
}

double softmax_difference(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& clean,
                          const Eigen::MatrixXd& attacked) {
  return softmax_difference(predictive_probs(ensemble, clean), predictive_probs(ensemble, attacked));
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ShapeError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError(fmt::format("quantile level {} outside [0, 1]", q));
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

Summary summarize_abs(std::span<const double> v) {
  std::vector<double> a(v.size());
  std::transform(v.begin(), v.end(), a.begin(), [](double x) { return std::abs(x); });
  Summary s;
  s.count = a.size();
  if (a.empty()) return s;
  std::sort(a.begin(), a.end());
  s.median = quantile(a, 0.5);
  s.p05 = quantile(a, 0.05);
  s.p95 = quantile(a, 0.95);
  s.mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  return s;
}

}  // namespace bnnrobust
