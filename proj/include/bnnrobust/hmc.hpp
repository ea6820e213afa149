#pragma once

#include "bnnrobust/common.hpp"
#include "bnnrobust/data.hpp"
#include "bnnrobust/ensemble.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace bnnrobust {

struct HmcConfig {
  double step_size = 0.002;
  int leapfrog_steps = 10;
  int warmup_samples = 100;
  int posterior_samples = 250;
  double prior_std = 1.0;
  int thinning = 1;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Potential energy U(q) = -log target(q) (up to a constant) and its gradient.
template <typename P>
concept PotentialEnergy = requires(const P& p, const Eigen::VectorXd& q) {
  { p.energy(q) } -> std::convertible_to<double>;
  { p.gradient(q) } -> std::convertible_to<Eigen::VectorXd>;
};

struct LeapfrogResult {
  Eigen::VectorXd position;
  Eigen::VectorXd momentum;
  /// Set when a gradient evaluation returned a non-finite value; the trajectory
  /// stops there and the proposal must be rejected.
  bool diverged = false;
};

/// Stormer-Verlet integration of Hamiltonian dynamics with identity mass:
/// half momentum step, then `steps` alternating full position / momentum
/// steps, closing with a half momentum step. `grad_fn` returns dU/dq.
template <typename GradFn>
LeapfrogResult leapfrog(Eigen::VectorXd q, Eigen::VectorXd p, double step_size, int steps, GradFn&& grad_fn) {
  if (q.size() != p.size()) throw ShapeError("leapfrog: position and momentum sizes differ");
  LeapfrogResult out;
  if (steps <= 0) {
    out.position = std::move(q);
    out.momentum = std::move(p);
    return out;
  }
  Eigen::VectorXd g = grad_fn(q);
  if (!g.allFinite()) {
    out.position = std::move(q);
    out.momentum = std::move(p);
    out.diverged = true;
    return out;
  }
  p -= 0.5 * step_size * g;
  for (int i = 0; i < steps; ++i) {
    q += step_size * p;
    g = grad_fn(q);
    if (!g.allFinite()) {
      out.diverged = true;
      break;
    }
    p -= (i + 1 == steps ? 0.5 : 1.0) * step_size * g;
  }
  out.position = std::move(q);
  out.momentum = std::move(p);
  return out;
}

/// One Metropolis-corrected HMC iteration as logged by the sampler.
struct HmcTransition {
  double initial_energy = 0.0;   // H(q, p) before integration
  double proposal_energy = 0.0;  // H(q', p') after integration
  double accept_probability = 0.0;
  bool accepted = false;
  bool diverged = false;
};

struct HmcChain {
  std::vector<Eigen::VectorXd> samples;
  std::vector<HmcTransition> transitions;  // every iteration, warmup included
  double acceptance_rate = 0.0;            // over post-warmup iterations
};

/// Generic HMC with identity mass matrix, fresh N(0, I) momentum every
/// iteration and acceptance probability min(1, exp(H_old - H_new)). The first
/// `warmup_samples` iterations are discarded, then every `thinning`-th state is
/// kept until `posterior_samples` states are collected. Only step_size,
/// leapfrog_steps, warmup_samples, posterior_samples and thinning are read
/// from `cfg`.
template <PotentialEnergy P>
HmcChain run_hmc(const P& potential, Eigen::VectorXd initial, const HmcConfig& cfg, Rng& rng) {
  cfg.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  HmcChain chain;
  Eigen::VectorXd q = std::move(initial);
  double u_current = potential.energy(q);
  if (!std::isfinite(u_current)) throw DiagnosticFailure("HMC: potential energy is not finite at the initial state");

  const long total = static_cast<long>(cfg.warmup_samples) + static_cast<long>(cfg.posterior_samples) * cfg.thinning;
  long accepted_after_warmup = 0;
  Eigen::VectorXd p(q.size());
  for (long it = 0; it < total; ++it) {
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = normal(rng);
    HmcTransition t;
    t.initial_energy = u_current + 0.5 * p.squaredNorm();
    auto traj = leapfrog(q, p, cfg.step_size, cfg.leapfrog_steps,
                         [&potential](const Eigen::VectorXd& x) { return potential.gradient(x); });
    double u_proposal = 0.0;
    t.diverged = traj.diverged;
    if (!traj.diverged) {
      u_proposal = potential.energy(traj.position);
      t.proposal_energy = u_proposal + 0.5 * traj.momentum.squaredNorm();
      t.diverged = !std::isfinite(t.proposal_energy);
    }
    if (t.diverged) {
      t.proposal_energy = std::numeric_limits<double>::infinity();
      t.accept_probability = 0.0;
    } else {
      t.accept_probability = std::min(1.0, std::exp(t.initial_energy - t.proposal_energy));
    }
    // Draw unconditionally so the random stream does not depend on the outcome.
    const double u = uniform(rng);
    t.accepted = u < t.accept_probability;
    if (t.accepted) {
      q = std::move(traj.position);
      u_current = u_proposal;
    }
    chain.transitions.push_back(t);
    if (it >= cfg.warmup_samples) {
      if (t.accepted) ++accepted_after_warmup;
      if ((it - cfg.warmup_samples + 1) % cfg.thinning == 0) chain.samples.push_back(q);
    }
  }
  chain.acceptance_rate =
      static_cast<double>(accepted_after_warmup) / static_cast<double>(total - cfg.warmup_samples);
  return chain;
}

/// sum_j log p(y_j | x_j, w) - ||w||^2 / (2 prior_std^2), constants dropped.
double log_posterior(const NetworkArch& arch, const WeightVector& w, const Dataset& data, double prior_std);

/// U(w) = -log_posterior(w): summed cross-entropy plus Gaussian prior term.
class BnnPotential {
 public:
  BnnPotential(const NetworkArch& arch, const Dataset& data, double prior_std);
  double energy(const Eigen::VectorXd& w) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const;

 private:
  const NetworkArch& arch_;
  const Dataset& data_;
  double prior_precision_;
};

/// Samples the BNN posterior from a he-initialised single chain. Throws
/// DiagnosticFailure if no post-warmup proposal was accepted.
PosteriorEnsemble hmc_sample(const NetworkArch& arch, const Dataset& data, const HmcConfig& cfg, std::uint64_t seed,
                             std::vector<HmcTransition>* transitions = nullptr);

}  // namespace bnnrobust
