#include "bnnrobust/hmc.hpp"
#include "bnnrobust/net.hpp"
#include "bnnrobust/sgd.hpp"
#include "bnnrobust/util.hpp"
#include "bnnrobust/vi.hpp"

#include <fmt/format.h>

#include <numeric>

namespace bnnrobust {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

/// Summed log-likelihood of a BNN over index minibatches.
class BnnLikelihood {
 public:
  BnnLikelihood(const NetworkArch& arch, const Dataset& data) : arch_(arch), data_(data) {}
  Eigen::Index size() const { return data_.size(); }

  double log_likelihood(const Eigen::VectorXd& w, std::span<const Eigen::Index> batch, Eigen::VectorXd& grad) const {
    const Eigen::MatrixXd x = data_.inputs(Eigen::all, std::vector<Eigen::Index>(batch.begin(), batch.end()));
    std::vector<int> y(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) y[k] = data_.labels[static_cast<std::size_t>(batch[k])];
    // gradient of -sum CE = sum log p
    return -loss_sum_and_weight_gradient(arch_, w, x, std::span<const int>(y), -1.0, grad);
  }

 private:
  const NetworkArch& arch_;
  const Dataset& data_;
};

void check_dataset_matches(const NetworkArch& arch, const Dataset& data) {
  arch.validate();
  data.validate();
  if (data.dim() != arch.input_dim) {
    throw ShapeError(fmt::format("dataset '{}' has dimension {}, architecture {} expects {}", data.name, data.dim(),
                                 arch.describe(), arch.input_dim));
  }
  if (data.num_classes != arch.num_classes) {
    throw ShapeError(fmt::format("dataset '{}' has {} classes, architecture {} has {}", data.name,
                                 data.num_classes, arch.describe(), arch.num_classes));
  }
}

}  // namespace

void HmcConfig::validate() const {
  require(step_size > 0.0, fmt::format("hmc step_size must be > 0, got {}", step_size));
  require(leapfrog_steps >= 1, fmt::format("hmc leapfrog_steps must be >= 1, got {}", leapfrog_steps));
  require(warmup_samples >= 0, fmt::format("hmc warmup_samples must be >= 0, got {}", warmup_samples));
  require(posterior_samples >= 1, fmt::format("hmc posterior_samples must be >= 1, got {}", posterior_samples));
  require(prior_std > 0.0, fmt::format("hmc prior_std must be > 0, got {}", prior_std));
  require(thinning >= 1, fmt::format("hmc thinning must be >= 1, got {}", thinning));
}

nlohmann::json HmcConfig::to_json() const {
  return {{"step_size", step_size},       {"leapfrog_steps", leapfrog_steps},
          {"warmup_samples", warmup_samples}, {"posterior_samples", posterior_samples},
          {"prior_std", prior_std},       {"thinning", thinning}};
}

void ViConfig::validate() const {
  require(learning_rate > 0.0, fmt::format("vi learning_rate must be > 0, got {}", learning_rate));
  require(epochs >= 0, fmt::format("vi epochs must be >= 0, got {}", epochs));
  require(batch_size >= 1, fmt::format("vi batch_size must be >= 1, got {}", batch_size));
  require(elbo_mc_samples >= 1, fmt::format("vi elbo_mc_samples must be >= 1, got {}", elbo_mc_samples));
  require(prior_std > 0.0, fmt::format("vi prior_std must be > 0, got {}", prior_std));
  require(std::isfinite(rho_init), "vi rho_init must be finite");
}

nlohmann::json ViConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"epochs", epochs},       {"batch_size", batch_size},
          {"elbo_mc_samples", elbo_mc_samples}, {"prior_std", prior_std}, {"rho_init", rho_init}};
}

void SgdConfig::validate() const {
  require(learning_rate >= 0.0, fmt::format("sgd learning_rate must be >= 0, got {}", learning_rate));
  require(epochs >= 0, fmt::format("sgd epochs must be >= 0, got {}", epochs));
  require(batch_size >= 1, fmt::format("sgd batch_size must be >= 1, got {}", batch_size));
}

nlohmann::json SgdConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"epochs", epochs}, {"batch_size", batch_size}};
}

double log_posterior(const NetworkArch& arch, const WeightVector& w, const Dataset& data, double prior_std) {
  if (data.size() == 0) throw ShapeError("log_posterior needs a non-empty dataset");
  if (!(prior_std > 0.0)) throw ConfigError("prior_std must be > 0");
  const double ce = example_losses(arch, w, data.inputs, data.label_span()).sum();
  return -ce - w.squaredNorm() / (2.0 * prior_std * prior_std);
}

BnnPotential::BnnPotential(const NetworkArch& arch, const Dataset& data, double prior_std)
    : arch_(arch), data_(data), prior_precision_(1.0 / (prior_std * prior_std)) {
  check_dataset_matches(arch, data);
  if (!(prior_std > 0.0)) throw ConfigError("prior_std must be > 0");
}

double BnnPotential::energy(const Eigen::VectorXd& w) const {
  return example_losses(arch_, w, data_.inputs, data_.label_span()).sum() + 0.5 * prior_precision_ * w.squaredNorm();
}

Eigen::VectorXd BnnPotential::gradient(const Eigen::VectorXd& w) const {
  Eigen::VectorXd grad;
  loss_sum_and_weight_gradient(arch_, w, data_.inputs, data_.label_span(), 1.0, grad);
  grad += prior_precision_ * w;
  return grad;
}

PosteriorEnsemble hmc_sample(const NetworkArch& arch, const Dataset& data, const HmcConfig& cfg, std::uint64_t seed,
                             std::vector<HmcTransition>* transitions) {
  cfg.validate();
  const BnnPotential potential(arch, data, cfg.prior_std);
  Rng rng(seed);
  Eigen::VectorXd init = init_weights(arch, InitScheme::he, rng);
  HmcChain chain = run_hmc(potential, std::move(init), cfg, rng);
  if (transitions != nullptr) *transitions = chain.transitions;
  if (chain.acceptance_rate == 0.0) {
    throw DiagnosticFailure(fmt::format("HMC rejected every post-warmup proposal ({} iterations, step size {}); "
                                        "reduce the step size",
                                        chain.transitions.size() - static_cast<std::size_t>(cfg.warmup_samples),
                                        cfg.step_size));
  }
  EnsembleMeta meta;
  meta.method = InferenceMethod::hmc;
  meta.seed = seed;
  meta.config = cfg.to_json();
  meta.config_hash = hash_hex(meta.config.dump());
  meta.acceptance_rate = chain.acceptance_rate;
  meta.flags.push_back("single chain, he initialisation");
  return PosteriorEnsemble(arch, std::move(chain.samples), std::move(meta));
}

VariationalPosterior vi_fit(const NetworkArch& arch, const Dataset& data, const ViConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  check_dataset_matches(arch, data);
  Rng rng(seed);
  Eigen::VectorXd mu = init_weights(arch, InitScheme::he, rng);
  const BnnLikelihood model(arch, data);
  MeanFieldFit fit = fit_mean_field(model, std::move(mu), cfg, rng);
  VariationalPosterior vp;
  vp.arch = arch;
  vp.mu = std::move(fit.mu);
  vp.rho = std::move(fit.rho);
  vp.elbo_trace = std::move(fit.elbo_trace);
  vp.seed = seed;
  vp.config = cfg.to_json();
  return vp;
}

PosteriorEnsemble vi_sample(const VariationalPosterior& vp, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("vi_sample needs n >= 1");
  if (vp.mu.size() != vp.rho.size() || static_cast<std::size_t>(vp.mu.size()) != vp.arch.parameter_count()) {
    throw ShapeError("variational parameters do not match the architecture");
  }
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::VectorXd sigma = vp.stddev();
  std::vector<WeightVector> samples;
  samples.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    WeightVector w(vp.mu.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = vp.mu(i) + sigma(i) * normal(rng);
    samples.push_back(std::move(w));
  }
  EnsembleMeta meta;
  meta.method = InferenceMethod::vi;
  meta.seed = vp.seed;
  meta.config = vp.config;
  meta.config["sample_seed"] = seed;
  meta.config_hash = hash_hex(meta.config.dump());
  meta.elbo_trace = vp.elbo_trace;
  return PosteriorEnsemble(vp.arch, std::move(samples), std::move(meta));
}

PosteriorEnsemble sgd_train(const NetworkArch& arch, const Dataset& data, const SgdConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  check_dataset_matches(arch, data);
  Rng rng(seed);
  WeightVector w = init_weights(arch, InitScheme::he, rng);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::VectorXd grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < data.size(); start += cfg.batch_size) {
      const Eigen::Index stop = std::min<Eigen::Index>(data.size(), start + cfg.batch_size);
      const std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + stop);
      const Eigen::MatrixXd x = data.inputs(Eigen::all, idx);
      std::vector<int> y(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) y[k] = data.labels[static_cast<std::size_t>(idx[k])];
      loss_sum_and_weight_gradient(arch, w, x, std::span<const int>(y), 1.0 / static_cast<double>(idx.size()), grad);
      w -= cfg.learning_rate * grad;
    }
    if (!w.allFinite()) throw DiagnosticFailure(fmt::format("SGD diverged in epoch {}", epoch));
  }
  EnsembleMeta meta;
  meta.method = InferenceMethod::point;
  meta.seed = seed;
  meta.config = cfg.to_json();
  meta.config_hash = hash_hex(meta.config.dump());
  return PosteriorEnsemble(arch, {std::move(w)}, std::move(meta));
}

}  // namespace bnnrobust
