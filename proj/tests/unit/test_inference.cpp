#include "bnnrobust/data.hpp"
#include "bnnrobust/hmc.hpp"
#include "bnnrobust/net.hpp"
#include "bnnrobust/predictive.hpp"
#include "bnnrobust/sgd.hpp"
#include "bnnrobust/vi.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace bnnrobust;

namespace {

struct Quadratic {
  double energy(const Eigen::VectorXd& q) const { return 0.5 * q.squaredNorm(); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& q) const { return q; }
};

// y_j ~ N(w, 1) with a scalar weight.
struct GaussianMean {
  Eigen::VectorXd y;
  Eigen::Index size() const { return y.size(); }
  double log_likelihood(const Eigen::VectorXd& w, std::span<const Eigen::Index> batch, Eigen::VectorXd& grad) const {
    double ll = 0.0;
    grad = Eigen::VectorXd::Zero(1);
    for (auto j : batch) {
      const double r = y(j) - w(0);
      ll -= 0.5 * r * r;
      grad(0) += r;
    }
    return ll;
  }
};

Dataset separable_toy() {
  Dataset d;
  d.inputs.resize(2, 40);
  d.labels.resize(40);
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  for (int j = 0; j < 40; ++j) {
    const int y = j % 2;
    const double s = y == 0 ? -1.0 : 1.0;
    d.inputs(0, j) = s * u(rng);
    d.inputs(1, j) = u(rng) - 0.6;
    d.labels[j] = y;
  }
  d.num_classes = 2;
  d.name = "toy";
  return d;
}

double mean_loss(const NetworkArch& arch, const WeightVector& w, const Dataset& d) {
  return example_losses(arch, w, d.inputs, d.label_span()).mean();
}

}  // namespace

TEST_CASE("leapfrog on a quadratic potential") {
  const Eigen::VectorXd q0 = Eigen::VectorXd::Constant(1, 1.0);
  const Eigen::VectorXd p0 = Eigen::VectorXd::Zero(1);
  const auto grad = [](const Eigen::VectorXd& q) -> Eigen::VectorXd { return q; };

  SUBCASE("zero steps leave the state alone") {
    const auto r = leapfrog(q0, p0, 0.1, 0, grad);
    CHECK(r.position == q0);
    CHECK(r.momentum == p0);
  }
  SUBCASE("time reversibility") {
    const auto fwd = leapfrog(q0, p0, 0.1, 10, grad);
    const auto back = leapfrog(fwd.position, -fwd.momentum, 0.1, 10, grad);
    CHECK(std::abs(back.position(0) - 1.0) < 1e-10);
    CHECK(std::abs(back.momentum(0)) < 1e-10);
  }
  SUBCASE("second-order energy error") {
    const auto energy_error = [&](double h) {
      const int steps = static_cast<int>(std::lround(1.0 / h));
      const auto r = leapfrog(q0, p0, h, steps, grad);
      return std::abs(0.5 * r.position.squaredNorm() + 0.5 * r.momentum.squaredNorm() - 0.5);
    };
    const double e1 = energy_error(0.1), e2 = energy_error(0.05), e3 = energy_error(0.025);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.15));
    CHECK(e2 / e3 == doctest::Approx(4.0).epsilon(0.15));
  }
  SUBCASE("one-step map has unit determinant") {
    const double h = 0.3;
    Eigen::Matrix2d jac;
    for (int c = 0; c < 2; ++c) {
      Eigen::VectorXd q = Eigen::VectorXd::Constant(1, c == 0 ? 1.0 : 0.0);
      Eigen::VectorXd p = Eigen::VectorXd::Constant(1, c == 1 ? 1.0 : 0.0);
      const auto r = leapfrog(q, p, h, 1, grad);
      jac(0, c) = r.position(0);
      jac(1, c) = r.momentum(0);
    }
    CHECK(std::abs(jac(0, 0) * jac(1, 1) - jac(0, 1) * jac(1, 0) - 1.0) < 1e-12);
  }
  SUBCASE("non-finite gradient flags divergence") {
    const auto r = leapfrog(q0, p0, 0.1, 5, [](const Eigen::VectorXd& q) -> Eigen::VectorXd {
      return q.array() * std::numeric_limits<double>::infinity();
    });
    CHECK(r.diverged);
  }
}

TEST_CASE("hmc on a standard normal target") {
  HmcConfig cfg;
  cfg.step_size = 0.5;
  cfg.leapfrog_steps = 5;
  cfg.warmup_samples = 200;
  cfg.posterior_samples = 2000;
  Rng rng(17);
  const auto chain = run_hmc(Quadratic{}, Eigen::Vector2d(3.0, -3.0), cfg, rng);
  REQUIRE(chain.samples.size() == 2000);
  CHECK(chain.acceptance_rate > 0.6);
  CHECK(chain.acceptance_rate < 0.999);
  for (int c = 0; c < 2; ++c) {
    double mean = 0, sq = 0;
    for (const auto& s : chain.samples) {
      mean += s(c);
      sq += s(c) * s(c);
    }
    mean /= 2000;
    const double var = sq / 2000 - mean * mean;
    CHECK(std::abs(mean) < 3.0 * std::sqrt(var / 2000));
    CHECK(var > 0.8);
    CHECK(var < 1.2);
  }
  // Logged acceptance probabilities are exp(-dH) clipped at one.
  for (const auto& t : chain.transitions) {
    CHECK(t.accept_probability == std::min(1.0, std::exp(t.initial_energy - t.proposal_energy)));
  }
}

TEST_CASE("hmc with a tiny step accepts almost everything") {
  HmcConfig cfg;
  cfg.step_size = 1e-6;
  cfg.leapfrog_steps = 1;
  cfg.warmup_samples = 0;
  cfg.posterior_samples = 500;
  Rng rng(2);
  const auto chain = run_hmc(Quadratic{}, Eigen::Vector3d(0.5, 1, -1), cfg, rng);
  CHECK(chain.acceptance_rate > 0.99);
}

TEST_CASE("hmc config validation") {
  HmcConfig cfg;
  cfg.step_size = 0.002;
  cfg.leapfrog_steps = 10;
  CHECK_NOTHROW(cfg.validate());
  for (auto mutate : std::vector<std::function<void(HmcConfig&)>>{
           [](HmcConfig& c) { c.step_size = 0; }, [](HmcConfig& c) { c.leapfrog_steps = 0; },
           [](HmcConfig& c) { c.warmup_samples = -1; }, [](HmcConfig& c) { c.posterior_samples = 0; },
           [](HmcConfig& c) { c.prior_std = 0; }, [](HmcConfig& c) { c.thinning = 0; }}) {
    HmcConfig bad = cfg;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("bnn log posterior") {
  NetworkArch arch{2, {}, 2};
  Dataset d = separable_toy();
  const WeightVector zero = WeightVector::Zero(6);
  CHECK(log_posterior(arch, zero, d, 1.0) == doctest::Approx(-40 * std::log(2.0)).epsilon(1e-14));
  WeightVector w = WeightVector::Zero(6);
  w(0) = 2.0;
  const double expected = -example_losses(arch, w, d.inputs, d.label_span()).sum() - 4.0 / (2 * 0.25);
  CHECK(log_posterior(arch, w, d, 0.5) == doctest::Approx(expected).epsilon(1e-14));

  const BnnPotential u(arch, d, 0.5);
  CHECK(u.energy(w) == doctest::Approx(-expected).epsilon(1e-14));
  const Eigen::VectorXd g = u.gradient(w);
  for (int i = 0; i < 6; ++i) {
    WeightVector up = w, down = w;
    up(i) += 1e-6;
    down(i) -= 1e-6;
    CHECK(g(i) == doctest::Approx((u.energy(up) - u.energy(down)) / 2e-6).epsilon(1e-5));
  }
}

TEST_CASE("hmc_sample on a toy set") {
  NetworkArch arch{2, {4}, 2, Activation::tanh};
  Dataset d = separable_toy();
  HmcConfig cfg;
  cfg.step_size = 0.05;
  cfg.leapfrog_steps = 10;
  cfg.warmup_samples = 50;
  cfg.posterior_samples = 40;
  cfg.thinning = 2;
  std::vector<HmcTransition> log;
  const auto ens = hmc_sample(arch, d, cfg, 123, &log);
  CHECK(ens.size() == 40);
  CHECK(log.size() == 130);
  CHECK(ens.meta().method == InferenceMethod::hmc);
  REQUIRE(ens.meta().acceptance_rate.has_value());
  CHECK(*ens.meta().acceptance_rate > 0.0);
  CHECK(accuracy(ens, d) > 0.9);
  const auto again = hmc_sample(arch, d, cfg, 123);
  for (std::size_t i = 0; i < ens.size(); ++i) CHECK(ens.sample(i) == again.sample(i));

  cfg.step_size = 50.0;
  cfg.warmup_samples = 0;
  cfg.posterior_samples = 5;
  CHECK_THROWS_AS(hmc_sample(arch, d, cfg, 1), DiagnosticFailure);
}

TEST_CASE("vi recovers a conjugate gaussian posterior") {
  GaussianMean model;
  Rng data_rng(8);
  std::normal_distribution<double> normal(1.5, 1.0);
  model.y.resize(50);
  for (auto& v : model.y) v = normal(data_rng);
  const double prior_std = 2.0;
  const double s2 = 1.0 / (50.0 + 1.0 / (prior_std * prior_std));
  const double m = s2 * model.y.sum();

  ViConfig cfg;
  cfg.learning_rate = 0.002;
  cfg.epochs = 30000;
  cfg.batch_size = 50;
  cfg.elbo_mc_samples = 4;
  cfg.prior_std = prior_std;
  cfg.rho_init = -1.0;
  Rng rng(3);
  const auto fit = fit_mean_field(model, Eigen::VectorXd::Zero(1), cfg, rng);
  CHECK(std::abs(fit.mu(0) - m) < 0.05);
  CHECK(softplus(fit.rho(0)) == doctest::Approx(std::sqrt(s2)).epsilon(0.2));
}

TEST_CASE("vi fit and sampling") {
  NetworkArch arch{2, {8}, 2};
  Dataset d = separable_toy();
  ViConfig cfg;
  cfg.epochs = 0;
  const auto idle = vi_fit(arch, d, cfg, 42);
  Rng init_rng(42);
  CHECK(idle.mu == init_weights(arch, InitScheme::he, init_rng));
  CHECK(idle.rho.isConstant(cfg.rho_init));
  CHECK(idle.elbo_trace.empty());
  CHECK(idle.mu.size() == static_cast<Eigen::Index>(arch.parameter_count()));

  cfg.epochs = 20;
  cfg.batch_size = 10;
  cfg.learning_rate = 0.05;
  const auto vp = vi_fit(arch, d, cfg, 42);
  CHECK(vp.mu.allFinite());
  CHECK(vp.rho.allFinite());
  CHECK((vp.stddev().array() > 0).all());
  CHECK(vp.elbo_trace.size() == 20);
  const auto again = vi_fit(arch, d, cfg, 42);
  CHECK(again.mu == vp.mu);
  CHECK(again.rho == vp.rho);

  const auto ens = vi_sample(vp, 5, 7);
  const auto ens2 = vi_sample(vp, 5, 7);
  CHECK(ens.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(ens.sample(i) == ens2.sample(i));

  VariationalPosterior collapsed = vp;
  collapsed.rho.setConstant(-800.0);
  const auto frozen = vi_sample(collapsed, 3, 1);
  for (const auto& s : frozen.samples()) CHECK(s == collapsed.mu);

  VariationalPosterior wide = vp;
  wide.rho.setConstant(0.0);
  const auto draws = vi_sample(wide, 10000, 5);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(wide.mu.size());
  for (const auto& s : draws.samples()) mean += s;
  mean /= 10000.0;
  const double se = softplus(0.0) / 100.0;
  CHECK(((mean - wide.mu).cwiseAbs().array() < 4 * se).all());
}

TEST_CASE("sgd baseline") {
  NetworkArch arch{2, {}, 2};
  Dataset d = separable_toy();
  SgdConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  const auto frozen = sgd_train(arch, d, cfg, 9);
  Rng rng(9);
  const WeightVector init = init_weights(arch, InitScheme::he, rng);
  CHECK(frozen.size() == 1);
  CHECK(frozen.meta().method == InferenceMethod::point);
  CHECK(frozen.sample(0) == init);

  cfg.learning_rate = 0.5;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  const auto trained = sgd_train(arch, d, cfg, 9);
  CHECK(accuracy(trained, d) == 1.0);
  CHECK(mean_loss(arch, trained.sample(0), d) <= mean_loss(arch, init, d));
  CHECK(trained.sample(0) == sgd_train(arch, d, cfg, 9).sample(0));
}
