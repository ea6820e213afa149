// Acceptance checks for the library and the experiment harness. Each
// criterion prints one PASS or FAIL line; the exit status is non-zero when any
// selected criterion fails.
//
//   acceptance [--criterion N]... [--work-dir DIR]

#include "bnnrobust/attacks.hpp"
#include "bnnrobust/harness/experiment.hpp"
#include "bnnrobust/hmc.hpp"
#include "bnnrobust/metrics.hpp"
#include "bnnrobust/net.hpp"
#include "bnnrobust/predictive.hpp"
#include "bnnrobust/util.hpp"
#include "bnnrobust/vi.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>

using namespace bnnrobust;
using namespace bnnrobust::harness;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  std::filesystem::path work_dir;
  std::filesystem::path cache_dir;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

constexpr std::uint64_t kSeed = 20240601;

Settings base(Experiment e, const Context& ctx) {
  Settings s = Settings::defaults(e, false);
  s.set("experiment.seed", std::to_string(kSeed));
  s.set("experiment.cache_dir", ctx.cache_dir.string());
  return s;
}

RunOutput run(Experiment e, const Settings& s, const std::filesystem::path& out) {
  const ExperimentSpec spec = make_spec(e, s, out);
  RunOutput output = run_experiment(spec);
  write_run(spec, output);
  return output;
}

const ResultRecord* find(const RunOutput& out, const std::map<std::string, std::string>& cell) {
  for (const auto& r : out.records) {
    bool match = true;
    for (const auto& [k, v] : cell) {
      const auto it = std::find_if(r.cell.begin(), r.cell.end(), [&](const auto& kv) { return kv.first == k; });
      match = match && it != r.cell.end() && it->second == v;
    }
    if (match) return &r;
  }
  return nullptr;
}

double metric_or_nan(const ResultRecord* r, const std::string& name) {
  if (r == nullptr) return std::nan("");
  return r->metric(name).value_or(std::nan(""));
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome gradient_oracle(const Context&) {
  Timer t;
  std::mt19937_64 rng(1);
  double worst_w = 0, worst_x = 0;
  int cases = 0;
  for (auto act : {Activation::relu, Activation::leaky_relu, Activation::tanh, Activation::sigmoid}) {
    for (int rep = 0; rep < 40; ++rep, ++cases) {
      const NetworkArch arch = oracle::random_arch(rng, act);
      const WeightVector w = fixture::random_weights(arch, rng);
      const Eigen::VectorXd x = fixture::uniform_vector(arch.input_dim, rng, -1, 1);
      const int label = std::uniform_int_distribution<int>(0, arch.num_classes - 1)(rng);
      const int labels[1] = {label};
      const std::vector<long double> lw(w.data(), w.data() + w.size()), lx(x.data(), x.data() + x.size());
      const Eigen::VectorXd gw = grad_weights(arch, w, x, std::span<const int>(labels, 1));
      const Eigen::VectorXd gx = grad_input(arch, w, x, label);
      const auto fw = oracle::central_diff([&](const auto& v) { return oracle::loss(arch, v, lx, label); }, lw, 1e-5L);
      const auto fx = oracle::central_diff([&](const auto& v) { return oracle::loss(arch, lw, v, label); }, lx, 1e-5L);
      worst_w = std::max(worst_w, oracle::relative_error({gw.data(), static_cast<std::size_t>(gw.size())}, fw));
      worst_x = std::max(worst_x, oracle::relative_error({gx.data(), static_cast<std::size_t>(gx.size())}, fx));
    }
  }
  const double secs = t.seconds();
  return {cases >= 100 && worst_w < 1e-4 && worst_x < 1e-4 && secs < 10,
          fmt::format("{} nets, max rel err weights {:.2e}, inputs {:.2e}, {:.2f} s", cases, worst_w, worst_x, secs)};
}

Outcome linearity(const Context&) {
  Timer t;
  std::mt19937_64 rng(2);
  double worst = 0;
  int cases = 0;
  for (int rep = 0; rep < 64; ++rep, ++cases) {
    const NetworkArch arch = oracle::random_arch(rng, static_cast<Activation>(rep % 4));
    const std::size_t n = 1 + static_cast<std::size_t>(rep % 16);
    const auto ens = fixture::random_ensemble(arch, n, rng);
    const Eigen::VectorXd x = fixture::uniform_vector(arch.input_dim, rng, -1, 1);
    const int label = rep % arch.num_classes;
    std::vector<std::vector<long double>> samples;
    for (const auto& w : ens.samples()) samples.emplace_back(w.data(), w.data() + w.size());
    const auto ref = oracle::averaged_loss_input_gradient(arch, samples, {x.data(), x.data() + x.size()}, label);
    const Eigen::VectorXd g = expected_loss_gradient(ens, x, label, n).grad;
    for (Eigen::Index i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(g(i) - static_cast<double>(ref[i])));
  }
  const double secs = t.seconds();
  return {worst <= 1e-12 && secs < 5,
          fmt::format("{} ensembles (n <= 16), max |difference| {:.2e}, {:.2f} s", cases, worst, secs)};
}

struct StandardNormal {
  double energy(const Eigen::VectorXd& q) const { return 0.5 * q.squaredNorm(); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& q) const { return q; }
};

Outcome hmc_gaussian(const Context&) {
  Timer t;
  HmcConfig cfg;
  cfg.step_size = 0.25;
  cfg.leapfrog_steps = 6;
  cfg.warmup_samples = 200;
  cfg.posterior_samples = 2000;
  Rng rng(3);
  const HmcChain chain = run_hmc(StandardNormal{}, Eigen::Vector2d(2.0, -2.0), cfg, rng);
  bool ok = chain.samples.size() == 2000 && chain.acceptance_rate >= 0.6 && chain.acceptance_rate <= 0.999;
  std::string detail = fmt::format("acceptance {:.3f}", chain.acceptance_rate);
  for (int c = 0; c < 2; ++c) {
    double mean = 0, sq = 0;
    for (const auto& s : chain.samples) {
      mean += s(c);
      sq += s(c) * s(c);
    }
    const double n = static_cast<double>(chain.samples.size());
    mean /= n;
    const double var = (sq - n * mean * mean) / (n - 1);
    const double se = std::sqrt(var / n);
    ok = ok && std::abs(mean) <= 3 * se && var >= 0.8 && var <= 1.2;
    detail += fmt::format(", x{}: mean {:+.4f} (3 SE {:.4f}) var {:.3f}", c, mean, 3 * se, var);
  }
  const double secs = t.seconds();
  return {ok && secs < 30, detail + fmt::format(", {:.2f} s", secs)};
}

Outcome gradient_vanishing(const Context& ctx) {
  Timer t;
  Settings s = base(Experiment::grad_scan, ctx);
  s.set("data.dataset", "mnist");
  s.set("data.train_size", "5000");
  s.set("data.test_size", "200");
  s.set("model.hidden", "128,128");
  s.set("hmc.posterior_samples", "250");
  s.set("vi.samples", "250");
  s.set("grid.n_use", "1,10,50,100,250");
  s.set("model.method", "hmc");
  const RunOutput hmc = run(Experiment::grad_scan, s, ctx.work_dir / "c4_hmc");
  const double h1 = metric_or_nan(find(hmc, {{"n_use", "1"}}), "median_abs");
  const double h100 = metric_or_nan(find(hmc, {{"n_use", "100"}}), "median_abs");
  const double acc = metric_or_nan(find(hmc, {{"summary", "model"}}), "test_accuracy");
  const double rate = metric_or_nan(find(hmc, {{"summary", "model"}}), "acceptance_rate");
  s.set("model.method", "vi");
  const RunOutput vi = run(Experiment::grad_scan, s, ctx.work_dir / "c4_vi");
  const double v1 = metric_or_nan(find(vi, {{"n_use", "1"}}), "median_abs");
  const double v100 = metric_or_nan(find(vi, {{"n_use", "100"}}), "median_abs");
  const double secs = t.seconds();
  const bool ok = h100 <= h1 / 3.0 && v100 < v1 && secs < 1800;
  return {ok, fmt::format("HMC (acc {:.3f}, acceptance {:.3f}) median |g| {:.3e} -> {:.3e} (ratio {:.3f}, need <= 0.333); "
                          "VI {:.3e} -> {:.3e} (ratio {:.3f}, need < 1); {:.0f} s",
                          acc, rate, h1, h100, h100 / h1, v1, v100, v100 / v1, secs)};
}

Outcome capacity_shrinkage(const Context& ctx) {
  Timer t;
  Settings s = base(Experiment::halfmoons_sweep, ctx);
  s.set("grid.hidden", "16,64,256");
  s.set("grid.train_size", "500,2000,8000");
  s.set("grid.replicates", "3");
  s.set("grid.filter_accuracy", "0.8");
  const RunOutput out = run(Experiment::halfmoons_sweep, s, ctx.work_dir / "c5");
  const auto* small = find(out, {{"hidden", "16"}, {"n_train", "500"}, {"replicate", "mean"}});
  const auto* large = find(out, {{"hidden", "256"}, {"n_train", "8000"}, {"replicate", "mean"}});
  const double a = metric_or_nan(small, "mean_median_abs"), b = metric_or_nan(large, "mean_median_abs");
  const double secs = t.seconds();
  return {b <= 0.5 * a && secs < 1200,
          fmt::format("mean median |g| (16, 500) {:.3e} over {} kept, (256, 8000) {:.3e} over {} kept, ratio {:.3f} "
                      "(need <= 0.5); {:.0f} s",
                      a, metric_or_nan(small, "replicates_kept"), b, metric_or_nan(large, "replicates_kept"), b / a,
                      secs)};
}

Outcome attack_ordering(const Context& ctx) {
  Timer t;
  Settings s = base(Experiment::attack_eval, ctx);
  s.set("data.dataset", "mnist");
  s.set("data.train_size", "5000");
  s.set("data.test_size", "500");
  s.set("model.hidden", "128,128");
  s.set("hmc.posterior_samples", "250");
  s.set("grid.methods", "hmc,sgd");
  s.set("attack.kinds", "rand,fgsm,pgd");
  s.set("attack.pgd_iterations", "15");
  s.set("attack.pgd_restarts", "1");
  s.set("attack.grad_samples", "100");
  for (const char* k : {"attack.epsilon", "attack.epsilon_hmc", "attack.epsilon_vi", "attack.epsilon_sgd"}) {
    s.set(k, "0.1");
  }
  const RunOutput out = run(Experiment::attack_eval, s, ctx.work_dir / "c6");
  const auto* hmc = find(out, {{"method", "hmc"}});
  const auto* sgd = find(out, {{"method", "sgd"}});
  const double r = metric_or_nan(hmc, "rand"), f = metric_or_nan(hmc, "fgsm"), p = metric_or_nan(hmc, "pgd");
  const double sr = metric_or_nan(sgd, "rand"), sf = metric_or_nan(sgd, "fgsm");
  const double secs = t.seconds();
  const bool ok = r + 0.02 <= f && r + 0.02 <= p && sf <= sr && secs < 1800;
  return {ok, fmt::format("HMC clean {:.3f} rand {:.3f} fgsm {:.3f} pgd {:.3f} (need rand + 0.02 <= both); "
                          "SGD clean {:.3f} rand {:.3f} fgsm {:.3f} (need fgsm <= rand); {:.0f} s",
                          metric_or_nan(hmc, "clean_accuracy"), r, f, p, metric_or_nan(sgd, "clean_accuracy"), sr, sf,
                          secs)};
}

Outcome tradeoff_direction(const Context& ctx) {
  Timer t;
  Settings s = base(Experiment::tradeoff_grid, ctx);
  s.set("data.dataset", "mnist");
  s.set("data.train_size", "5000");
  s.set("grid.methods", "hmc,sgd");
  const RunOutput out = run(Experiment::tradeoff_grid, s, ctx.work_dir / "c7");
  const auto* hmc = find(out, {{"method", "hmc"}, {"summary", "correlation"}});
  const auto* sgd = find(out, {{"method", "sgd"}, {"summary", "correlation"}});
  const double ph = metric_or_nan(hmc, "pearson"), ps = metric_or_nan(sgd, "pearson");
  const double nh = metric_or_nan(hmc, "models"), ns = metric_or_nan(sgd, "models");
  const double secs = t.seconds();
  return {nh >= 30 && ns >= 30 && ph >= ps + 0.3 && secs < 7200,
          fmt::format("HMC pearson {:+.3f} over {} models, SGD pearson {:+.3f} over {} models, gap {:+.3f} "
                      "(need >= 0.3); {:.0f} s",
                      ph, nh, ps, ns, ph - ps, secs)};
}

Outcome attack_constraints(const Context&) {
  Timer t;
  std::mt19937_64 rng(8);
  long invocations = 0, violations = 0;
  while (invocations < 10000) {
    const NetworkArch arch = oracle::random_arch(rng, static_cast<Activation>(invocations % 4));
    const auto ens = fixture::random_ensemble(arch, 1 + invocations % 5, rng, 1.5);
    AttackConfig cfg;
    cfg.epsilon = std::uniform_real_distribution<double>(0.0, 0.6)(rng);
    cfg.grad_samples = 3;
    cfg.pgd_iterations = 1 + static_cast<int>(invocations % 15);
    cfg.pgd_restarts = 1 + static_cast<int>(invocations % 2);
    cfg.resample_per_iteration = invocations % 3 == 0;
    const bool clamped = invocations % 2 == 0;
    if (clamped) cfg.clamp = Bounds{0.0, 1.0};
    Eigen::MatrixXd inputs(arch.input_dim, 8);
    std::vector<int> labels(8);
    for (int j = 0; j < 8; ++j) {
      inputs.col(j) = fixture::uniform_vector(arch.input_dim, rng);
      labels[j] = j % arch.num_classes;
    }
    for (auto kind : {AttackKind::rand, AttackKind::fgsm, AttackKind::pgd}) {
      const Eigen::MatrixXd adv = attack_batch(kind, ens, inputs, labels, cfg, invocations);
      for (Eigen::Index j = 0; j < adv.cols(); ++j, ++invocations) {
        bool ok = (adv.col(j) - inputs.col(j)).cwiseAbs().maxCoeff() <= cfg.epsilon;
        if (clamped) ok = ok && adv.col(j).minCoeff() >= 0.0 && adv.col(j).maxCoeff() <= 1.0;
        if (!ok) ++violations;
      }
    }
  }
  const double secs = t.seconds();
  return {violations == 0 && secs < 10,
          fmt::format("{} attack invocations, {} constraint violations, {:.2f} s", invocations, violations, secs)};
}

Outcome reproducibility(const Context& ctx) {
  Timer t;
  struct Case {
    Experiment experiment;
    Settings settings;
  };
  std::vector<Case> cases;
  {
    Settings s = base(Experiment::halfmoons_sweep, ctx);
    s.set("experiment.cache_dir", "");
    s.set("grid.hidden", "8,16");
    s.set("grid.train_size", "200");
    s.set("grid.replicates", "2");
    s.set("hmc.warmup_samples", "20");
    s.set("hmc.posterior_samples", "30");
    cases.push_back({Experiment::halfmoons_sweep, s});
  }
  {
    Settings s = base(Experiment::attack_eval, ctx);
    s.set("experiment.cache_dir", "");
    s.set("data.dataset", "halfmoons");
    s.set("data.train_size", "300");
    s.set("data.test_size", "50");
    s.set("model.hidden", "16");
    s.set("hmc.step_size", "0.01");
    s.set("hmc.warmup_samples", "20");
    s.set("hmc.posterior_samples", "30");
    s.set("attack.grad_samples", "10");
    s.set("attack.resample", "true");
    s.set("attack.pgd_restarts", "2");
    s.set("grid.methods", "hmc,vi,sgd");
    cases.push_back({Experiment::attack_eval, s});
  }
  {
    Settings s = base(Experiment::tradeoff_grid, ctx);
    s.set("experiment.cache_dir", "");
    s.set("data.dataset", "halfmoons");
    s.set("data.train_size", "300");
    s.set("data.test_size", "50");
    s.set("grid.hidden", "8,16");
    s.set("grid.depth", "1");
    s.set("grid.hmc_step_size", "0.01");
    s.set("grid.sgd_learning_rate", "0.1");
    s.set("grid.sgd_epochs", "5");
    s.set("hmc.warmup_samples", "10");
    s.set("hmc.posterior_samples", "20");
    cases.push_back({Experiment::tradeoff_grid, s});
  }
  {
    Settings s = base(Experiment::grad_scan, ctx);
    s.set("experiment.cache_dir", "");
    s.set("data.dataset", "mnist");
    s.set("data.train_size", "200");
    s.set("data.test_size", "20");
    s.set("model.method", "vi");
    s.set("model.hidden", "16");
    s.set("vi.epochs", "2");
    s.set("vi.samples", "20");
    s.set("grid.n_use", "1,5,20");
    cases.push_back({Experiment::grad_scan, s});
  }
  int identical = 0;
  std::string detail;
  for (auto& c : cases) {
    const auto name = to_string(c.experiment);
    const auto a = ctx.work_dir / ("c9_" + name + "_a");
    const auto b = ctx.work_dir / ("c9_" + name + "_b");
    run(c.experiment, c.settings, a);
    c.settings.set("experiment.jobs", "3");  // worker count must not matter
    run(c.experiment, c.settings, b);
    const std::string ra = read_file(a / "results.csv"), rb = read_file(b / "results.csv");
    const bool same = !ra.empty() && ra == rb;
    if (same) ++identical;
    detail += fmt::format("{} {} ({} bytes); ", name, same ? "identical" : "DIFFERENT", ra.size());
  }
  const double secs = t.seconds();
  return {identical == static_cast<int>(cases.size()) && secs < 300, detail + fmt::format("{:.1f} s", secs)};
}

Outcome vi_sanity(const Context&) {
  Timer t;
  Rng data_rng(10);
  const Dataset train = make_half_moons(1000, 0.1, data_rng);
  const Dataset test = make_half_moons(500, 0.1, data_rng);
  NetworkArch arch{2, {32, 32}, 2, Activation::leaky_relu};
  ViConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 300;
  cfg.batch_size = 50;
  const VariationalPosterior vp = vi_fit(arch, train, cfg, 11);
  const PosteriorEnsemble ens = vi_sample(vp, 100, 12);
  const double acc = accuracy(ens, test);
  const double first = vp.elbo_trace.front(), last = vp.elbo_trace.back();
  const double secs = t.seconds();
  return {acc >= 0.9 && last >= first && secs < 120,
          fmt::format("test accuracy {:.3f} (need >= 0.9), ELBO first {:.2f} final {:.2f}, {:.1f} s", acc, first,
                      last, secs)};
}

}  // namespace

int main(int argc, char** argv) {
  bnnrobust::retain_large_allocations();
  CLI::App app{"acceptance checks"};
  std::vector<int> selected;
  std::string work_dir = "acceptance_work";
  std::string cache_dir;
  app.add_option("--criterion", selected, "criterion number (repeatable; default all)")->check(CLI::Range(1, 10));
  app.add_option("--work-dir", work_dir, "directory for run outputs");
  app.add_option("--cache-dir", cache_dir, "ensemble cache shared between criteria (default <work-dir>/cache)");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.work_dir = work_dir;
  ctx.cache_dir = cache_dir.empty() ? ctx.work_dir / "cache" : std::filesystem::path(cache_dir);
  std::filesystem::create_directories(ctx.work_dir);

  const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria = {
      {"gradient oracle", gradient_oracle},
      {"expected-gradient linearity", linearity},
      {"hmc on a gaussian target", hmc_gaussian},
      {"gradient vanishing in sample count (mnist)", gradient_vanishing},
      {"capacity and data shrinkage (half-moons)", capacity_shrinkage},
      {"attack ordering (mnist)", attack_ordering},
      {"accuracy-robustness correlation (mnist)", tradeoff_direction},
      {"attack constraints", attack_constraints},
      {"reproducibility", reproducibility},
      {"vi sanity (half-moons)", vi_sanity},
  };
  if (selected.empty()) {
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);
  }
  int failures = 0;
  for (int i : selected) {
    const auto& [name, fn] = criteria[static_cast<std::size_t>(i - 1)];
    Outcome o;
    try {
      o = fn(ctx);
    } catch (const std::exception& e) {
      o = {false, fmt::format("error: {}", e.what())};
    }
    if (!o.pass) ++failures;
    std::cout << fmt::format("criterion {:>2} {}: {} | {}", i, o.pass ? "PASS" : "FAIL", name, o.detail) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
