#include "bnnrobust/harness/experiment.hpp"
#include "bnnrobust/harness/pool.hpp"
#include "bnnrobust/harness/svg.hpp"
#include "bnnrobust/metrics.hpp"
#include "bnnrobust/predictive.hpp"
#include "bnnrobust/util.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>

namespace bnnrobust::harness {
namespace {

// RNG stream identifiers under the experiment seed.
constexpr std::uint64_t kTrainStream = 0x74726e;
constexpr std::uint64_t kAttackStream = 0x61746b;
constexpr std::uint64_t kCellStream = 0x63656c6c0000;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

using Cell = std::vector<std::pair<std::string, std::string>>;
using Metrics = std::vector<std::pair<std::string, double>>;

ResultRecord make_record(const ExperimentSpec& spec, Cell cell, const Metrics& metrics, double wall = 0.0) {
  ResultRecord r;
  r.experiment = to_string(spec.experiment);
  r.cell = std::move(cell);
  r.seed = spec.seed;
  r.config_hash = spec.config_hash;
  r.wall_time_s = wall;
  for (const auto& [name, value] : metrics) {
    if (std::isfinite(value)) {
      r.metrics.emplace_back(name, value);
    } else {
      r.flags.push_back("undefined:" + name);
    }
  }
  return r;
}

std::string method_name(InferenceMethod m) { return m == InferenceMethod::point ? "sgd" : std::string(to_string(m)); }

nlohmann::json dataset_info(const Dataset& d) {
  return {{"name", d.name}, {"size", d.size()}, {"dim", d.dim()}, {"fingerprint", fmt::format("{:016x}", fingerprint(d))}};
}

nlohmann::json ensemble_info(const PosteriorEnsemble& e, const std::string& label) {
  nlohmann::json j = {{"label", label},
                      {"method", std::string(to_string(e.meta().method))},
                      {"arch", e.arch().describe()},
                      {"samples", e.size()},
                      {"seed", e.meta().seed},
                      {"config_hash", e.meta().config_hash},
                      {"flags", e.meta().flags}};
  if (e.meta().acceptance_rate) j["acceptance_rate"] = *e.meta().acceptance_rate;
  if (!e.meta().elbo_trace.empty()) j["elbo_trace"] = e.meta().elbo_trace;
  return j;
}

void maybe_save(const ExperimentSpec& spec, const PosteriorEnsemble& e, const std::string& label,
                nlohmann::json& info) {
  if (!spec.save_ensembles) return;
  const auto dir = spec.out_dir / "ensembles" / label;
  save_ensemble(e, dir);
  info["dir"] = std::filesystem::relative(dir, spec.out_dir).string();
}

void add_model_metrics(Metrics& m, const PosteriorEnsemble& e) {
  m.emplace_back("ensemble_size", static_cast<double>(e.size()));
  if (e.meta().acceptance_rate) m.emplace_back("acceptance_rate", *e.meta().acceptance_rate);
  if (!e.meta().elbo_trace.empty()) {
    m.emplace_back("elbo_first", e.meta().elbo_trace.front());
    m.emplace_back("elbo_last", e.meta().elbo_trace.back());
  }
}

std::vector<double> flatten(const Eigen::MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

bool want_raw(const ExperimentSpec& spec, Eigen::Index dim) { return spec.raw_components.value_or(dim <= 16); }

std::uint64_t train_seed(const ExperimentSpec& spec) { return derive_seed(spec.seed, kTrainStream); }

std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

RunOutput run_train(const ExperimentSpec& spec) {
  Stopwatch clock;
  RunOutput out;
  const DataBundle data = load_data(spec, spec.train_size, spec.seed);
  const NetworkArch arch = make_arch(spec, data.train, spec.hidden);
  const PosteriorEnsemble e = obtain_ensemble(spec, spec.method, arch, spec.trainers, data.train, train_seed(spec));
  const auto dir = spec.out_dir / "ensemble";
  save_ensemble(e, dir);
  auto info = ensemble_info(e, "ensemble");
  info["dir"] = "ensemble";
  out.ensembles.push_back(info);
  out.datasets = {{"train", dataset_info(data.train)}, {"test", dataset_info(data.test)}};
  Metrics m = {{"train_accuracy", accuracy(e, data.train)}, {"test_accuracy", accuracy(e, data.test)}};
  add_model_metrics(m, e);
  out.records.push_back(make_record(spec, {{"method", method_name(spec.method)}, {"arch", arch.describe()}}, m,
                                    clock.seconds()));
  return out;
}

RunOutput run_attack_command(const ExperimentSpec& spec) {
  Stopwatch clock;
  RunOutput out;
  const auto dir = spec.ensemble_path.empty() ? spec.out_dir / "ensemble" : spec.ensemble_path;
  const PosteriorEnsemble e = load_ensemble(dir);
  const DataBundle data = load_data(spec, spec.dataset == "halfmoons" ? 2 : 0, spec.seed);
  if (e.arch().input_dim != data.test.dim() || e.arch().num_classes != data.test.num_classes) {
    throw ConfigError(fmt::format("ensemble {} does not fit dataset '{}'", e.arch().describe(), spec.dataset));
  }
  out.datasets = {{"test", dataset_info(data.test)}};
  out.ensembles.push_back(ensemble_info(e, dir.string()));
  const AttackConfig cfg = attack_config_for(spec, e.meta().method, data.test);
  const Eigen::MatrixXd clean = predictive_probs(e, data.test.inputs);
  Metrics m = {{"clean_accuracy", accuracy(e, data.test)}};
  for (AttackKind kind : spec.attack_kinds) {
    const Eigen::MatrixXd adv =
        run_attack(spec, kind, e, data.test, cfg, derive_seed(spec.seed, kAttackStream + static_cast<int>(kind)));
    m.emplace_back(to_string(kind), adversarial_accuracy(e, data.test, adv));
    m.emplace_back(to_string(kind) + "_softmax_diff", softmax_difference(clean, predictive_probs(e, adv)));
  }
  out.records.push_back(make_record(spec, {{"method", method_name(e.meta().method)}, {"epsilon", num(cfg.epsilon)}},
                                    m, clock.seconds()));
  return out;
}

RunOutput run_grad_scan(const ExperimentSpec& spec) {
  Stopwatch clock;
  RunOutput out;
  const DataBundle data = load_data(spec, spec.train_size, spec.seed);
  const NetworkArch arch = make_arch(spec, data.train, spec.hidden);
  const PosteriorEnsemble e = obtain_ensemble(spec, spec.method, arch, spec.trainers, data.train, train_seed(spec));
  out.datasets = {{"train", dataset_info(data.train)}, {"test", dataset_info(data.test)}};
  auto info = ensemble_info(e, "model");
  maybe_save(spec, e, "model", info);
  out.ensembles.push_back(info);

  Metrics model = {{"test_accuracy", accuracy(e, data.test)}};
  add_model_metrics(model, e);
  out.records.push_back(make_record(spec, {{"method", method_name(spec.method)}, {"summary", "model"}}, model,
                                    clock.seconds()));

  std::vector<std::size_t> grid;
  for (std::size_t n : spec.grid.n_use) {
    const std::size_t capped = std::min(n, e.size());
    if (std::find(grid.begin(), grid.end(), capped) == grid.end()) grid.push_back(capped);
  }
  const bool raw = want_raw(spec, data.test.dim());
  std::string components = "n_use,point,component,value\n";
  std::vector<ScatterPoint> plot;
  double first_median = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Stopwatch cell_clock;
    const Eigen::MatrixXd g = expected_loss_gradients(e, data.test.inputs, data.test.label_span(), grid[i]);
    const Summary s = summarize_abs(flatten(g));
    if (i == 0) first_median = s.median;
    Metrics m = {{"median_abs", s.median}, {"p05_abs", s.p05}, {"p95_abs", s.p95}, {"mean_abs", s.mean}};
    if (first_median > 0.0) m.emplace_back("median_ratio", s.median / first_median);
    out.records.push_back(make_record(spec, {{"method", method_name(spec.method)}, {"n_use", std::to_string(grid[i])}},
                                      m, cell_clock.seconds()));
    const double x = std::log10(static_cast<double>(grid[i]));
    plot.push_back({x, std::log10(std::max(s.median, 1e-300)), "median"});
    plot.push_back({x, std::log10(std::max(s.p05, 1e-300)), "p05"});
    plot.push_back({x, std::log10(std::max(s.p95, 1e-300)), "p95"});
    if (raw) {
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        for (Eigen::Index c = 0; c < g.rows(); ++c) components += fmt::format("{},{},{},{}\n", grid[i], j, c, g(c, j));
      }
    }
  }
  if (raw) out.files["grad_components.csv"] = components;
  out.files["grad_scan.svg"] = emit_svg_scatter(
      plot, {"Expected input gradient vs posterior samples", "log10 n_use", "log10 |gradient component|"});
  return out;
}

RunOutput run_halfmoons_sweep(const ExperimentSpec& spec) {
  if (spec.dataset != "halfmoons") throw ConfigError("halfmoons-sweep requires data.dataset = halfmoons");
  struct CellSpec {
    int hidden;
    Eigen::Index n_train;
    int replicate;
  };
  std::vector<CellSpec> cells;
  for (int h : spec.grid.hidden) {
    for (Eigen::Index n : spec.grid.train_size) {
      for (int r = 0; r < spec.grid.replicates; ++r) cells.push_back({h, n, r});
    }
  }
  const int depth = spec.grid.depth.front();
  struct CellOutcome {
    ResultRecord record;
    Eigen::MatrixXd gradients;
    nlohmann::json ensemble;
    nlohmann::json data;
    bool kept = false;
  };
  std::vector<CellOutcome> outcomes(cells.size());
  parallel_for_index(cells.size(), spec.jobs, [&](std::size_t i) {
    Stopwatch clock;
    const CellSpec& c = cells[i];
    // replicates differ in data and chain; cells with the same replicate share a data seed
    const std::uint64_t data_seed = derive_seed(spec.seed, kCellStream + static_cast<std::uint64_t>(c.replicate));
    const DataBundle data = load_data(spec, c.n_train, data_seed);
    const NetworkArch arch = make_arch(spec, data.train, std::vector<int>(static_cast<std::size_t>(depth), c.hidden));
    const std::uint64_t seed = derive_seed(spec.seed, kCellStream + 0x1000 + i);
    Cell cell = {{"hidden", std::to_string(c.hidden)},
                 {"n_train", std::to_string(c.n_train)},
                 {"replicate", std::to_string(c.replicate)}};
    CellOutcome& o = outcomes[i];
    o.data = {{"train", dataset_info(data.train)}, {"test", dataset_info(data.test)}};
    Metrics m;
    try {
      const PosteriorEnsemble e = obtain_ensemble(spec, spec.method, arch, spec.trainers, data.train, seed);
      o.ensemble = ensemble_info(e, cell.empty() ? "" : fmt::format("h{}_n{}_r{}", c.hidden, c.n_train, c.replicate));
      const double acc = accuracy(e, data.test);
      m = {{"accuracy", acc}};
      add_model_metrics(m, e);
      if (acc > spec.grid.filter_accuracy) {
        o.gradients = expected_loss_gradients(e, data.test.inputs, data.test.label_span(), e.size());
        const Summary s = summarize_abs(flatten(o.gradients));
        m.insert(m.end(), {{"median_abs", s.median}, {"p05_abs", s.p05}, {"p95_abs", s.p95}, {"mean_abs", s.mean}});
        for (Eigen::Index d = 0; d < o.gradients.rows(); ++d) {
          const Eigen::VectorXd row = o.gradients.row(d).transpose();
          m.emplace_back(fmt::format("median_abs_x{}", d), summarize_abs({row.data(), row.data() + row.size()}).median);
        }
        o.kept = true;
      }
      o.record = make_record(spec, cell, m, clock.seconds());
      if (!o.kept) o.record.flags.push_back("filtered");
    } catch (const DiagnosticFailure& err) {
      o.record = make_record(spec, cell, {}, clock.seconds());
      o.record.flags.push_back("diagnostic_failure");
      o.ensemble = {{"error", err.what()}};
    }
  });

  RunOutput out;
  std::string components = "hidden,n_train,replicate,point,component,value\n";
  std::vector<ScatterPoint> plot;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out.records.push_back(outcomes[i].record);
    out.ensembles.push_back(outcomes[i].ensemble);
    out.datasets[outcomes[i].record.cell_id()] = outcomes[i].data;
    if (!outcomes[i].kept) continue;
    const auto& g = outcomes[i].gradients;
    const auto& c = cells[i];
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index d = 0; d < g.rows(); ++d) {
        components += fmt::format("{},{},{},{},{},{}\n", c.hidden, c.n_train, c.replicate, j, d, g(d, j));
      }
      if (c.replicate == 0 && g.rows() >= 2) {
        plot.push_back({g(0, j), g(1, j), fmt::format("h={} n={}", c.hidden, c.n_train)});
      }
    }
  }
  // replicate means over the cells that passed the filter
  for (int h : spec.grid.replicates > 1 ? spec.grid.hidden : std::vector<int>{}) {
    for (Eigen::Index n : spec.grid.train_size) {
      double sum = 0.0, acc_sum = 0.0;
      int kept = 0, total = 0;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i].hidden != h || cells[i].n_train != n) continue;
        ++total;
        if (auto a = outcomes[i].record.metric("accuracy")) acc_sum += *a;
        if (!outcomes[i].kept) continue;
        sum += *outcomes[i].record.metric("median_abs");
        ++kept;
      }
      Metrics m = {{"replicates_kept", static_cast<double>(kept)},
                   {"mean_accuracy", acc_sum / static_cast<double>(total)}};
      if (kept > 0) m.emplace_back("mean_median_abs", sum / kept);
      ResultRecord r =
          make_record(spec, {{"hidden", std::to_string(h)}, {"n_train", std::to_string(n)}, {"replicate", "mean"}}, m);
      if (kept == 0) r.flags.push_back("filtered");
      out.records.push_back(std::move(r));
    }
  }
  out.files["halfmoons_components.csv"] = components;
  out.files["halfmoons_gradients.svg"] =
      emit_svg_scatter(plot, {"Expected loss gradient components (replicate 0)", "d L / d x0", "d L / d x1"});
  return out;
}

RunOutput run_attack_eval(const ExperimentSpec& spec) {
  RunOutput out;
  const DataBundle data = load_data(spec, spec.train_size, spec.seed);
  out.datasets = {{"train", dataset_info(data.train)}, {"test", dataset_info(data.test)}};
  const NetworkArch arch = make_arch(spec, data.train, spec.hidden);
  std::string table = "dataset,method,clean";
  for (AttackKind k : spec.attack_kinds) table += "," + to_string(k);
  table += "\n";
  for (InferenceMethod method : spec.grid.methods) {
    Stopwatch clock;
    const PosteriorEnsemble e = obtain_ensemble(spec, method, arch, spec.trainers, data.train, train_seed(spec));
    auto info = ensemble_info(e, method_name(method));
    maybe_save(spec, e, method_name(method), info);
    out.ensembles.push_back(info);
    const AttackConfig cfg = attack_config_for(spec, method, data.test);
    const Eigen::MatrixXd clean = predictive_probs(e, data.test.inputs);
    const double clean_acc = accuracy(e, data.test);
    Metrics m = {{"clean_accuracy", clean_acc}};
    std::string row = fmt::format("{},{},{}", spec.dataset, method_name(method), format_double(clean_acc));
    for (AttackKind kind : spec.attack_kinds) {
      const Eigen::MatrixXd adv =
          run_attack(spec, kind, e, data.test, cfg, derive_seed(spec.seed, kAttackStream + static_cast<int>(kind)));
      const double acc = adversarial_accuracy(e, data.test, adv);
      m.emplace_back(to_string(kind), acc);
      m.emplace_back(to_string(kind) + "_softmax_diff", softmax_difference(clean, predictive_probs(e, adv)));
      row += "," + format_double(acc);
    }
    m.emplace_back("grad_samples", static_cast<double>(cfg.samples_for(e)));
    add_model_metrics(m, e);
    table += row + "\n";
    out.records.push_back(make_record(
        spec, {{"dataset", spec.dataset}, {"method", method_name(method)}, {"epsilon", num(cfg.epsilon)}}, m,
        clock.seconds()));
  }
  out.files["attack_table.csv"] = table;
  return out;
}

RunOutput run_tradeoff_grid(const ExperimentSpec& spec) {
  struct Model {
    InferenceMethod method;
    int hidden;
    int depth;
    std::string hyper_name;
    double hyper;
    int epochs;  // sgd only
    int replicate;
  };
  std::vector<Model> models;
  for (InferenceMethod method : spec.grid.methods) {
    std::vector<std::pair<double, int>> hypers;
    std::string name;
    switch (method) {
      case InferenceMethod::hmc:
        name = "step_size";
        for (double s : spec.grid.hmc_step_size) hypers.emplace_back(s, 0);
        if (hypers.empty()) hypers.emplace_back(spec.trainers.hmc.step_size, 0);
        break;
      case InferenceMethod::vi:
        name = "learning_rate";
        for (double lr : spec.grid.vi_learning_rate) hypers.emplace_back(lr, 0);
        if (hypers.empty()) hypers.emplace_back(spec.trainers.vi.learning_rate, 0);
        break;
      case InferenceMethod::point: {
        name = "learning_rate";
        std::vector<double> lrs = spec.grid.sgd_learning_rate;
        std::vector<int> epochs = spec.grid.sgd_epochs;
        if (lrs.empty()) lrs.push_back(spec.trainers.sgd.learning_rate);
        if (epochs.empty()) epochs.push_back(spec.trainers.sgd.epochs);
        for (double lr : lrs) {
          for (int ep : epochs) hypers.emplace_back(lr, ep);
        }
        break;
      }
    }
    for (int depth : spec.grid.depth) {
      for (int h : spec.grid.hidden) {
        for (const auto& [value, epochs] : hypers) {
          for (int r = 0; r < spec.grid.replicates; ++r) models.push_back({method, h, depth, name, value, epochs, r});
        }
      }
    }
  }

  const DataBundle data = load_data(spec, spec.train_size, spec.seed);
  struct Outcome {
    ResultRecord record;
    nlohmann::json ensemble;
    std::optional<std::pair<double, double>> point;  // accuracy, robustness
  };
  std::vector<Outcome> outcomes(models.size());
  parallel_for_index(models.size(), spec.jobs, [&](std::size_t i) {
    Stopwatch clock;
    const Model& md = models[i];
    TrainerSettings t = spec.trainers;
    switch (md.method) {
      case InferenceMethod::hmc: t.hmc.step_size = md.hyper; break;
      case InferenceMethod::vi: t.vi.learning_rate = md.hyper; break;
      case InferenceMethod::point:
        t.sgd.learning_rate = md.hyper;
        t.sgd.epochs = md.epochs;
        break;
    }
    const NetworkArch arch =
        make_arch(spec, data.train, std::vector<int>(static_cast<std::size_t>(md.depth), md.hidden));
    Cell cell = {{"method", method_name(md.method)},
                 {"hidden", std::to_string(md.hidden)},
                 {"depth", std::to_string(md.depth)},
                 {md.hyper_name, num(md.hyper)}};
    if (md.method == InferenceMethod::point) cell.emplace_back("epochs", std::to_string(md.epochs));
    cell.emplace_back("replicate", std::to_string(md.replicate));
    Outcome& o = outcomes[i];
    const std::uint64_t seed = derive_seed(spec.seed, kCellStream + i);
    try {
      const PosteriorEnsemble e = obtain_ensemble(spec, md.method, arch, t, data.train, seed);
      const AttackConfig cfg = attack_config_for(spec, md.method, data.test);
      const Eigen::MatrixXd adv =
          run_attack(spec, AttackKind::fgsm, e, data.test, cfg, derive_seed(seed, kAttackStream));
      const double acc = accuracy(e, data.test);
      const double diff = softmax_difference(e, data.test.inputs, adv);
      Metrics m = {{"accuracy", acc}, {"softmax_diff", diff}, {"robustness", 1.0 - diff}, {"epsilon", cfg.epsilon}};
      add_model_metrics(m, e);
      o.record = make_record(spec, cell, m, clock.seconds());
      o.ensemble = ensemble_info(e, o.record.cell_id());
      o.point = std::make_pair(acc, 1.0 - diff);
    } catch (const DiagnosticFailure& err) {
      o.record = make_record(spec, cell, {}, clock.seconds());
      o.record.flags.push_back("diagnostic_failure");
      o.ensemble = {{"label", o.record.cell_id()}, {"error", err.what()}};
    }
  });

  RunOutput out;
  out.datasets = {{"train", dataset_info(data.train)}, {"test", dataset_info(data.test)}};
  std::string scatter = "method,hidden,depth,hyper,epochs,replicate,accuracy,robustness\n";
  std::vector<ScatterPoint> plot;
  for (std::size_t i = 0; i < models.size(); ++i) {
    out.records.push_back(outcomes[i].record);
    out.ensembles.push_back(outcomes[i].ensemble);
    if (!outcomes[i].point) continue;
    const auto& md = models[i];
    const auto [acc, rob] = *outcomes[i].point;
    scatter += fmt::format("{},{},{},{},{},{},{},{}\n", method_name(md.method), md.hidden, md.depth,
                           format_double(md.hyper), md.epochs, md.replicate, format_double(acc), format_double(rob));
    plot.push_back({acc, rob, method_name(md.method)});
  }
  for (InferenceMethod method : spec.grid.methods) {
    std::vector<double> acc, rob;
    std::map<int, std::vector<double>> by_width;
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (models[i].method != method || !outcomes[i].point) continue;
      acc.push_back(outcomes[i].point->first);
      rob.push_back(outcomes[i].point->second);
      by_width[models[i].hidden].push_back(outcomes[i].point->second);
    }
    Metrics m = {{"models", static_cast<double>(acc.size())}};
    if (acc.size() >= 2) {
      m.emplace_back("pearson", pearson(acc, rob));
      m.emplace_back("spearman", spearman(acc, rob));
    }
    out.records.push_back(make_record(spec, {{"method", method_name(method)}, {"summary", "correlation"}}, m));
    for (const auto& [width, values] : by_width) {
      out.records.push_back(make_record(
          spec, {{"method", method_name(method)}, {"hidden", std::to_string(width)}, {"summary", "width"}},
          {{"median_robustness", median(values)},
           {"p25_robustness", quantile(values, 0.25)},
           {"p75_robustness", quantile(values, 0.75)}}));
    }
  }
  out.files["tradeoff_scatter.csv"] = scatter;
  out.files["tradeoff.svg"] = emit_svg_scatter(plot, {"Robustness vs accuracy", "test accuracy", "1 - softmax difference"});
  return out;
}

RunOutput run_experiment(const ExperimentSpec& spec) {
  switch (spec.experiment) {
    case Experiment::train: return run_train(spec);
    case Experiment::attack: return run_attack_command(spec);
    case Experiment::grad_scan: return run_grad_scan(spec);
    case Experiment::halfmoons_sweep: return run_halfmoons_sweep(spec);
    case Experiment::attack_eval: return run_attack_eval(spec);
    case Experiment::tradeoff_grid: return run_tradeoff_grid(spec);
  }
  throw ConfigError("unknown experiment");
}

}  // namespace bnnrobust::harness
