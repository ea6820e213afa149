#pragma once

// Posterior predictive distribution and posterior-averaged input gradients.
// Every function that takes `n_use` reads the first n_use samples in stored
// order, so sweeps over n_use are nested. n_use = 0 means "all samples".

#include "bnnrobust/data.hpp"
#include "bnnrobust/ensemble.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace bnnrobust {

struct PredictiveResult {
  Eigen::VectorXd probs;                           // mean of per-sample softmax outputs
  std::optional<Eigen::MatrixXd> per_sample_probs;  // n x K, when requested
};

struct ExpectedGradient {
  Eigen::VectorXd grad;
  std::size_t n_samples = 0;
  double per_component_abs_median = 0.0;
};

/// Averages softmax outputs (probability space) over all samples.
PredictiveResult predict_ensemble(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x,
                                  bool keep_per_sample = false);

/// Predictive probabilities for a batch, K x N.
Eigen::MatrixXd predictive_probs(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& inputs,
                                 std::size_t n_use = 0);

/// Index of the largest entry; ties resolve to the lowest index.
int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& probs);

int predict_label(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x);
std::vector<int> predict_labels(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& inputs);

/// Fraction of examples whose predicted label matches the ground truth.
double accuracy(const PosteriorEnsemble& ensemble, const Dataset& data);

/// (1/n_use) sum_i grad_x L(x, w_i), the Monte Carlo posterior expectation of
/// the per-sample input gradient. Throws std::out_of_range unless
/// 1 <= n_use <= ensemble.size().
ExpectedGradient expected_loss_gradient(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x, int label,
                                        std::size_t n_use);

/// Batched expected gradients, one column per example (d x N).
Eigen::MatrixXd expected_loss_gradients(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& inputs,
                                        std::span<const int> labels, std::size_t n_use);

/// Same average over an explicit list of sample indices (used for resampling).
Eigen::MatrixXd expected_loss_gradients(const PosteriorEnsemble& ensemble, std::span<const std::size_t> sample_ids,
                                        const Eigen::MatrixXd& inputs, std::span<const int> labels);

/// Posterior-averaged per-sample loss (1/n_use) sum_i L(x_j, w_i), length N.
Eigen::VectorXd expected_losses(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& inputs,
                                std::span<const int> labels, std::size_t n_use);

/// Gradient of -log of the averaged predictive probability of `label` (the
/// loss of the mean prediction, as opposed to the mean of the losses).
Eigen::VectorXd expected_prediction_gradient(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x, int label,
                                             std::size_t n_use);

}  // namespace bnnrobust
