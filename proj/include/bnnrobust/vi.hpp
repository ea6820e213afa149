#pragma once

// Mean-field Gaussian variational inference (Bayes by backprop): the
// reparameterised sample w = mu + softplus(rho) * eps, eps ~ N(0, I), drives
// plain stochastic gradient ascent on the minibatch ELBO.

#include "bnnrobust/common.hpp"
#include "bnnrobust/data.hpp"
#include "bnnrobust/ensemble.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace bnnrobust {

struct ViConfig {
  double learning_rate = 0.01;
  int epochs = 5;
  int batch_size = 128;
  int elbo_mc_samples = 1;
  double prior_std = 1.0;
  double rho_init = -5.0;

  void validate() const;
  nlohmann::json to_json() const;
};

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

template <typename Derived>
Eigen::VectorXd softplus(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](double v) { return softplus(v); });
}

/// KL(N(mu, sigma^2) || N(0, prior_std^2)) summed over coordinates.
inline double gaussian_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma, double prior_std) {
  const double prior_var = prior_std * prior_std;
  return ((sigma.array().square() + mu.array().square()) / (2.0 * prior_var) - 0.5 -
          (sigma.array() / prior_std).log())
      .sum();
}

/// A likelihood evaluated on minibatches: log_likelihood(w, batch, grad)
/// returns sum_{j in batch} log p(y_j | w) and writes its gradient.
template <typename M>
concept MinibatchLikelihood = requires(const M& m, const Eigen::VectorXd& w, std::span<const Eigen::Index> batch,
                                       Eigen::VectorXd& grad) {
  { m.size() } -> std::convertible_to<Eigen::Index>;
  { m.log_likelihood(w, batch, grad) } -> std::convertible_to<double>;
};

struct MeanFieldFit {
  Eigen::VectorXd mu;
  Eigen::VectorXd rho;
  /// Per-epoch mean of the minibatch ELBO estimates, in full-dataset units.
  std::vector<double> elbo_trace;
};

/// Maximises the ELBO with minibatch gradient ascent. Each minibatch objective
/// is sum_batch log p - (B / N) KL; the step ascends that objective divided by
/// the batch size B (the per-example ELBO), at the configured learning rate.
template <MinibatchLikelihood M>
MeanFieldFit fit_mean_field(const M& model, Eigen::VectorXd mu, const ViConfig& cfg, Rng& rng) {
  cfg.validate();
  const Eigen::Index n = model.size();
  if (n < 1) throw ShapeError("variational fit needs a non-empty dataset");
  MeanFieldFit fit;
  fit.mu = std::move(mu);
  fit.rho = Eigen::VectorXd::Constant(fit.mu.size(), cfg.rho_init);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const double prior_var = cfg.prior_std * cfg.prior_std;
  const Eigen::Index dim = fit.mu.size();
  Eigen::VectorXd eps(dim), w(dim), grad(dim), g_mu(dim), g_rho(dim);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double elbo_sum = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index stop = std::min<Eigen::Index>(n, start + cfg.batch_size);
      const std::span<const Eigen::Index> batch(order.data() + start, static_cast<std::size_t>(stop - start));
      const double b = static_cast<double>(batch.size());
      const Eigen::VectorXd sigma = softplus(fit.rho);
      const Eigen::VectorXd dsigma = fit.rho.unaryExpr([](double r) { return sigmoid(r); });

      g_mu.setZero();
      g_rho.setZero();
      double loglik = 0.0;
      for (int s = 0; s < cfg.elbo_mc_samples; ++s) {
        for (Eigen::Index i = 0; i < dim; ++i) eps(i) = normal(rng);
        w = fit.mu + sigma.cwiseProduct(eps);
        loglik += model.log_likelihood(w, batch, grad);
        g_mu += grad;
        g_rho += grad.cwiseProduct(eps);
      }
      const double mc = cfg.elbo_mc_samples;
      loglik /= mc;
      const double kl = gaussian_kl(fit.mu, sigma, cfg.prior_std);
      const double elbo = static_cast<double>(n) / b * loglik - kl;
      if (!std::isfinite(elbo)) {
        throw DiagnosticFailure(fmt::format("VI: non-finite ELBO in epoch {} at batch offset {}", epoch, start));
      }
      elbo_sum += elbo;
      ++batches;

      // d/dmu and d/drho of (loglik - (B/N) KL) / B
      const double kl_weight = 1.0 / static_cast<double>(n);
      g_mu = g_mu / (mc * b) - kl_weight * fit.mu / prior_var;
      g_rho = (g_rho / (mc * b) - kl_weight * (sigma.array() / prior_var - sigma.array().inverse()).matrix())
                  .cwiseProduct(dsigma);
      fit.mu += cfg.learning_rate * g_mu;
      fit.rho += cfg.learning_rate * g_rho;
      if (!fit.mu.allFinite() || !fit.rho.allFinite()) {
        throw DiagnosticFailure(fmt::format("VI: non-finite variational parameters in epoch {}", epoch));
      }
    }
    fit.elbo_trace.push_back(elbo_sum / batches);
  }
  return fit;
}

/// Fitted mean-field posterior over a network's weights.
struct VariationalPosterior {
  NetworkArch arch;
  Eigen::VectorXd mu;
  Eigen::VectorXd rho;
  std::vector<double> elbo_trace;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();

  Eigen::VectorXd stddev() const { return softplus(rho); }
};

/// Bayes-by-backprop fit of a BNN; mu starts from he initialisation.
VariationalPosterior vi_fit(const NetworkArch& arch, const Dataset& data, const ViConfig& cfg, std::uint64_t seed);

/// n independent draws mu + softplus(rho) * eps.
PosteriorEnsemble vi_sample(const VariationalPosterior& vp, std::size_t n, std::uint64_t seed);

}  // namespace bnnrobust
