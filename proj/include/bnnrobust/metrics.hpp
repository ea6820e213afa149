#pragma once

#include "bnnrobust/attacks.hpp"
#include "bnnrobust/data.hpp"
#include "bnnrobust/ensemble.hpp"

#include <span>
#include <vector>

namespace bnnrobust {

/// Fraction of columns of `attacked` whose predicted label equals the
/// ground-truth label of the matching test point.
double adversarial_accuracy(const PosteriorEnsemble& ensemble, const Dataset& testset, const Eigen::MatrixXd& attacked);

/// Runs `kind` over the whole test set (seeded per point) and scores it.
double adversarial_accuracy(const PosteriorEnsemble& ensemble, const Dataset& testset, AttackKind kind,
                            const AttackConfig& cfg, std::uint64_t seed);

/// Mean over columns of max_k |clean(k, j) - attacked(k, j)|.
double softmax_difference(const Eigen::MatrixXd& clean_probs, const Eigen::MatrixXd& attacked_probs);

/// Same, with predictive probabilities computed from the ensemble.
double softmax_difference(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& clean,
                          const Eigen::MatrixXd& attacked);

double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of average ranks (ties share the mean rank).
double spearman(std::span<const double> x, std::span<const double> y);

std::vector<double> average_ranks(std::span<const double> v);

/// Linear-interpolation quantile (Hyndman-Fan type 7); q in [0, 1].
double quantile(std::vector<double> v, double q);
double median(std::vector<double> v);

struct Summary {
  std::size_t count = 0;
  double median = 0.0;
  double p05 = 0.0;
  double p95 = 0.0;
  double mean = 0.0;
};

/// Summary statistics of |v_i|.
Summary summarize_abs(std::span<const double> v);

}  // namespace bnnrobust
