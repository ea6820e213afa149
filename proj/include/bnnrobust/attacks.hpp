#pragma once

// l_inf attacks against the ensemble predictive distribution. All gradient
// queries go through expected_loss_gradients with the first
// min(grad_samples, ensemble size) samples unless resampling is enabled.
//
// sgn(0) = 0 throughout: components with a vanishing expected gradient are
// left where they are.

#include "bnnrobust/common.hpp"
#include "bnnrobust/ensemble.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace bnnrobust {

struct AttackConfig {
  double epsilon = 0.1;
  std::optional<double> pgd_alpha;  // defaults to epsilon / 4
  int pgd_iterations = 15;
  int pgd_restarts = 1;
  std::optional<Bounds> clamp;
  std::size_t grad_samples = 250;
  bool resample_per_iteration = false;

  void validate() const;
  double alpha() const { return pgd_alpha.value_or(epsilon / 4.0); }
  /// Number of posterior samples actually used against `ensemble`.
  std::size_t samples_for(const PosteriorEnsemble& ensemble) const;
  nlohmann::json to_json() const;
};

enum class AttackKind : std::uint8_t { rand, fgsm, pgd };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);

/// Componentwise clip onto [center - eps, center + eps]. The result satisfies
/// |out_i - center_i| <= eps when evaluated in double arithmetic.
Eigen::VectorXd project_linf(const Eigen::VectorXd& candidate, const Eigen::VectorXd& center, double epsilon);

Eigen::VectorXd fgsm(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x, int label, const AttackConfig& cfg);

Eigen::VectorXd pgd(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x, int label, const AttackConfig& cfg,
                    Rng& rng);

Eigen::VectorXd random_sign_attack(const Eigen::VectorXd& x, double epsilon, Rng& rng,
                                   const std::optional<Bounds>& clamp);

/// Attacks every column of `inputs`. Column j draws its randomness from
/// Rng(derive_seed(base_seed, first_index + j)), so a point's result does not
/// depend on how a test set is chunked.
Eigen::MatrixXd attack_batch(AttackKind kind, const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& inputs,
                             std::span<const int> labels, const AttackConfig& cfg, std::uint64_t base_seed,
                             std::uint64_t first_index = 0);

}  // namespace bnnrobust
