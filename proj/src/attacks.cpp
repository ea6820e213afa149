#include "bnnrobust/attacks.hpp"

#include "bnnrobust/predictive.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace bnnrobust {
namespace {

double sgn(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

void clip_to_ball(Eigen::Ref<Eigen::MatrixXd> candidate, const Eigen::MatrixXd& center, double epsilon) {
  for (Eigen::Index j = 0; j < candidate.cols(); ++j) {
    for (Eigen::Index i = 0; i < candidate.rows(); ++i) {
      const double c = center(i, j);
      double v = std::clamp(candidate(i, j), c - epsilon, c + epsilon);
      // c +/- eps is rounded, so the clip alone can leave |v - c| one ulp above eps
      while (std::abs(v - c) > epsilon) v = std::nextafter(v, c);
      candidate(i, j) = v;
    }
  }
}

void apply_clamp(Eigen::Ref<Eigen::MatrixXd> x, const std::optional<Bounds>& clamp) {
  if (clamp) x = x.cwiseMax(clamp->lo).cwiseMin(clamp->hi);
}

Eigen::MatrixXd sign_of(const Eigen::MatrixXd& g) { return g.unaryExpr([](double v) { return sgn(v); }); }

std::vector<std::size_t> draw_subset(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  return ids;
}

class GradientOracle {
 public:
  GradientOracle(const PosteriorEnsemble& ensemble, const AttackConfig& cfg, bool resample)
      : ensemble_(ensemble), resample_(resample), n_use_(cfg.samples_for(ensemble)) {}

  Eigen::MatrixXd operator()(const Eigen::MatrixXd& x, std::span<const int> labels, std::span<Rng> rngs) const {
    if (!resample_) return expected_loss_gradients(ensemble_, x, labels, n_use_);
    Eigen::MatrixXd g(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const auto ids = draw_subset(ensemble_.size(), n_use_, rngs[static_cast<std::size_t>(j)]);
      g.col(j) = expected_loss_gradients(ensemble_, ids, Eigen::MatrixXd(x.col(j)),
                                         labels.subspan(static_cast<std::size_t>(j), 1))
                     .col(0);
    }
    return g;
  }

  Eigen::VectorXd losses(const Eigen::MatrixXd& x, std::span<const int> labels) const {
    return expected_losses(ensemble_, x, labels, n_use_);
  }

 private:
  const PosteriorEnsemble& ensemble_;
  bool resample_;
  std::size_t n_use_;
};

Eigen::MatrixXd fgsm_columns(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& x, std::span<const int> labels,
                             const AttackConfig& cfg, std::span<Rng> rngs) {
  if (cfg.epsilon == 0.0) return x;
  // a single step has nothing to resample between
  const GradientOracle oracle(ensemble, cfg, false);
  Eigen::MatrixXd out = x + cfg.epsilon * sign_of(oracle(x, labels, rngs));
  clip_to_ball(out, x, cfg.epsilon);
  apply_clamp(out, cfg.clamp);
  return out;
}

Eigen::MatrixXd pgd_columns(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& x, std::span<const int> labels,
                            const AttackConfig& cfg, std::span<Rng> rngs) {
  if (cfg.epsilon == 0.0) return x;
  const GradientOracle oracle(ensemble, cfg, cfg.resample_per_iteration);
  const double alpha = cfg.alpha();
  Eigen::MatrixXd best = x;
  Eigen::VectorXd best_loss = Eigen::VectorXd::Constant(x.cols(), -std::numeric_limits<double>::infinity());
  for (int restart = 0; restart < cfg.pgd_restarts; ++restart) {
    Eigen::MatrixXd cur(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      std::uniform_real_distribution<double> offset(-cfg.epsilon, cfg.epsilon);
      Rng& rng = rngs[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < x.rows(); ++i) cur(i, j) = x(i, j) + offset(rng);
    }
    clip_to_ball(cur, x, cfg.epsilon);
    apply_clamp(cur, cfg.clamp);
    for (int it = 0; it < cfg.pgd_iterations; ++it) {
      cur += alpha * sign_of(oracle(cur, labels, rngs));
      clip_to_ball(cur, x, cfg.epsilon);
      apply_clamp(cur, cfg.clamp);
    }
    const Eigen::VectorXd loss = oracle.losses(cur, labels);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (loss(j) > best_loss(j)) {
        best_loss(j) = loss(j);
        best.col(j) = cur.col(j);
      }
    }
  }
  return best;
}

Eigen::MatrixXd random_columns(const Eigen::MatrixXd& x, double epsilon, std::span<Rng> rngs,
                               const std::optional<Bounds>& clamp) {
  Eigen::MatrixXd out = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::bernoulli_distribution coin(0.5);
    Rng& rng = rngs[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, j) += coin(rng) ? epsilon : -epsilon;
  }
  clip_to_ball(out, x, epsilon);
  apply_clamp(out, clamp);
  return out;
}

void check_attack_inputs(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& inputs,
                         std::span<const int> labels) {
  if (inputs.rows() != ensemble.arch().input_dim) {
    throw ShapeError(fmt::format("attack input has dimension {}, architecture {} expects {}", inputs.rows(),
                                 ensemble.arch().describe(), ensemble.arch().input_dim));
  }
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) {
    throw ShapeError(fmt::format("{} inputs but {} labels", inputs.cols(), labels.size()));
  }
}

}  // namespace

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError(fmt::format("attack epsilon must be finite and >= 0, got {}", epsilon));
  }
  if (pgd_alpha && !(*pgd_alpha > 0.0)) throw ConfigError(fmt::format("pgd_alpha must be > 0, got {}", *pgd_alpha));
  if (pgd_iterations < 1) throw ConfigError(fmt::format("pgd_iterations must be >= 1, got {}", pgd_iterations));
  if (pgd_restarts < 1) throw ConfigError(fmt::format("pgd_restarts must be >= 1, got {}", pgd_restarts));
  if (grad_samples < 1) throw ConfigError("grad_samples must be >= 1");
  if (clamp && !(clamp->lo < clamp->hi)) {
    throw ConfigError(fmt::format("clamp bounds [{}, {}] are empty", clamp->lo, clamp->hi));
  }
}

std::size_t AttackConfig::samples_for(const PosteriorEnsemble& ensemble) const {
  return std::min(grad_samples, ensemble.size());
}

nlohmann::json AttackConfig::to_json() const {
  nlohmann::json j = {{"epsilon", epsilon},
                      {"pgd_alpha", alpha()},
                      {"pgd_iterations", pgd_iterations},
                      {"pgd_restarts", pgd_restarts},
                      {"grad_samples", grad_samples},
                      {"resample_per_iteration", resample_per_iteration}};
  j["clamp"] = clamp ? nlohmann::json::array({clamp->lo, clamp->hi}) : nlohmann::json(nullptr);
  return j;
}

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::rand: return "rand";
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::pgd: return "pgd";
  }
  return "unknown";
}

AttackKind parse_attack_kind(std::string_view name) {
  if (name == "rand" || name == "random") return AttackKind::rand;
  if (name == "fgsm") return AttackKind::fgsm;
  if (name == "pgd") return AttackKind::pgd;
  throw ConfigError(fmt::format("unknown attack '{}' (expected rand, fgsm or pgd)", name));
}

Eigen::VectorXd project_linf(const Eigen::VectorXd& candidate, const Eigen::VectorXd& center, double epsilon) {
  if (candidate.size() != center.size()) {
    throw ShapeError(fmt::format("project_linf: candidate has {} entries, center {}", candidate.size(), center.size()));
  }
  if (!(epsilon >= 0.0)) throw ConfigError(fmt::format("project_linf: epsilon must be >= 0, got {}", epsilon));
  Eigen::MatrixXd out = candidate;
  clip_to_ball(out, center, epsilon);
  return out.col(0);
}

Eigen::VectorXd fgsm(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x, int label, const AttackConfig& cfg) {
  cfg.validate();
  const int labels[1] = {label};
  check_attack_inputs(ensemble, x, labels);
  return fgsm_columns(ensemble, x, labels, cfg, {}).col(0);
}

Eigen::VectorXd pgd(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x, int label, const AttackConfig& cfg,
                    Rng& rng) {
  cfg.validate();
  const int labels[1] = {label};
  check_attack_inputs(ensemble, x, labels);
  return pgd_columns(ensemble, x, labels, cfg, std::span<Rng>(&rng, 1)).col(0);
}

Eigen::VectorXd random_sign_attack(const Eigen::VectorXd& x, double epsilon, Rng& rng,
                                   const std::optional<Bounds>& clamp) {
  if (!(epsilon >= 0.0)) throw ConfigError(fmt::format("epsilon must be >= 0, got {}", epsilon));
  return random_columns(x, epsilon, std::span<Rng>(&rng, 1), clamp).col(0);
}

Eigen::MatrixXd attack_batch(AttackKind kind, const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& inputs,
                             std::span<const int> labels, const AttackConfig& cfg, std::uint64_t base_seed,
                             std::uint64_t first_index) {
  cfg.validate();
  check_attack_inputs(ensemble, inputs, labels);
  std::vector<Rng> rngs;
  rngs.reserve(static_cast<std::size_t>(inputs.cols()));
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
    rngs.emplace_back(derive_seed(base_seed, first_index + static_cast<std::uint64_t>(j)));
  }
  switch (kind) {
    case AttackKind::rand: return random_columns(inputs, cfg.epsilon, rngs, cfg.clamp);
    case AttackKind::fgsm: return fgsm_columns(ensemble, inputs, labels, cfg, rngs);
    case AttackKind::pgd: return pgd_columns(ensemble, inputs, labels, cfg, rngs);
  }
  throw ConfigError("unknown attack kind");
}

}  // namespace bnnrobust
