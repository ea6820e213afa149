// bnnrobust: train posteriors, attack them, and run the robustness experiments.
//
// Settings resolve in this order (later wins): built-in defaults for the
// subcommand (desk scale unless --full-scale), --config file, --set
// overrides, then the named flags.
//
// Exit codes: 0 success, 1 data or I/O error, 2 configuration error,
// 3 diagnostic failure (e.g. an HMC chain that never accepted).

#include "bnnrobust/harness/experiment.hpp"
#include "bnnrobust/util.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using bnnrobust::harness::Experiment;
using bnnrobust::harness::Settings;

struct CommonOptions {
  std::string config;
  std::string seed;
  std::string out;
  std::string dataset;
  std::string method;
  std::string data_dir;
  std::string cache_dir;
  std::string ensemble;
  std::string attacks;
  std::vector<std::string> overrides;
  double epsilon = -1.0;
  int jobs = 0;
  bool full_scale = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, Experiment experiment) {
  cmd->add_option("--config", o.config, "INI settings file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "experiment seed (required here or in the config)");
  cmd->add_option("--out", o.out, "output directory")->default_str(fmt::format("runs/{}", to_string(experiment)));
  cmd->add_option("--dataset", o.dataset, "halfmoons, mnist or fashion");
  cmd->add_option("--method", o.method, "hmc, vi or sgd");
  cmd->add_option("--epsilon", o.epsilon, "attack radius (l_inf), applied to every method");
  cmd->add_option("--jobs", o.jobs, "worker threads for grid cells");
  cmd->add_option("--data-dir", o.data_dir, "directory holding mnist/ and fashion/ IDX files");
  cmd->add_option("--cache-dir", o.cache_dir, "reuse trained ensembles stored here");
  cmd->add_option("--set", o.overrides, "section.key=value override (repeatable)");
  cmd->add_flag("--full-scale", o.full_scale, "use full-scale defaults instead of desk-scale ones");
  if (experiment == Experiment::attack) {
    cmd->add_option("--ensemble", o.ensemble, "ensemble directory written by 'train'");
    cmd->add_option("--attacks", o.attacks, "comma list of rand, fgsm, pgd");
  }
}

Settings resolve(Experiment experiment, const CommonOptions& o) {
  Settings s = Settings::defaults(experiment, o.full_scale);
  if (!o.config.empty()) s.merge_file(o.config);
  for (const auto& kv : o.overrides) s.assign(kv);
  if (!o.seed.empty()) s.set("experiment.seed", o.seed);
  if (!o.dataset.empty()) s.set("data.dataset", o.dataset);
  if (!o.method.empty()) s.set("model.method", o.method);
  if (!o.data_dir.empty()) s.set("data.dir", o.data_dir);
  if (!o.cache_dir.empty()) s.set("experiment.cache_dir", o.cache_dir);
  if (!o.ensemble.empty()) s.set("attack.ensemble", o.ensemble);
  if (!o.attacks.empty()) s.set("attack.kinds", o.attacks);
  if (o.jobs > 0) s.set("experiment.jobs", std::to_string(o.jobs));
  if (o.epsilon >= 0.0) {
    const std::string eps = fmt::format("{}", o.epsilon);
    for (const char* key : {"attack.epsilon", "attack.epsilon_hmc", "attack.epsilon_vi", "attack.epsilon_sgd"}) {
      s.set(key, eps);
    }
  }
  return s;
}

int run(Experiment experiment, const CommonOptions& o) {
  const Settings settings = resolve(experiment, o);
  const std::string out = o.out.empty() ? fmt::format("runs/{}", to_string(experiment)) : o.out;
  const auto spec = bnnrobust::harness::make_spec(experiment, settings, out);
  const auto output = bnnrobust::harness::run_experiment(spec);
  bnnrobust::harness::write_run(spec, output);
  for (const auto& r : output.records) {
    std::string line = fmt::format("{:<48}", r.cell_id());
    for (const auto& [name, value] : r.metrics) line += fmt::format(" {}={:.6g}", name, value);
    for (const auto& flag : r.flags) line += " [" + flag + "]";
    std::cout << line << "\n";
  }
  std::cout << "wrote " << (spec.out_dir / "results.csv").string() << "\n";
  return 0;
}

int report(const std::vector<std::string>& dirs) {
  std::string md = "# bnnrobust report\n";
  for (const auto& dir : dirs) {
    const auto path = std::filesystem::path(dir) / "results.csv";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw bnnrobust::DataError(fmt::format("cannot open {}", path.string()));
    std::ostringstream text;
    text << in.rdbuf();
    const auto records = bnnrobust::harness::parse_results_csv(text.str());
    md += fmt::format("\n## {}\n\n| experiment | cell | metric | value |\n|---|---|---|---|\n", dir);
    for (const auto& r : records) {
      for (const auto& [name, value] : r.metrics) {
        md += fmt::format("| {} | {} | {} | {:.6g} |\n", r.experiment, r.cell_id(), name, value);
      }
    }
  }
  std::cout << md;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  bnnrobust::retain_large_allocations();
  CLI::App app{"Bayesian neural network robustness experiments"};
  app.require_subcommand(1);

  struct Entry {
    const char* name;
    Experiment experiment;
    const char* help;
  };
  const Entry entries[] = {
      {"train", Experiment::train, "train an ensemble and save it under <out>/ensemble"},
      {"attack", Experiment::attack, "attack a saved ensemble on the test split"},
      {"grad-scan", Experiment::grad_scan, "expected input gradient statistics versus posterior sample count"},
      {"halfmoons-sweep", Experiment::halfmoons_sweep, "gradient components over width x training size"},
      {"attack-eval", Experiment::attack_eval, "rand / fgsm / pgd adversarial accuracy table"},
      {"tradeoff-grid", Experiment::tradeoff_grid, "accuracy versus robustness over an architecture grid"},
  };
  std::vector<CommonOptions> options(std::size(entries));
  std::vector<CLI::App*> commands;
  for (std::size_t i = 0; i < std::size(entries); ++i) {
    commands.push_back(app.add_subcommand(entries[i].name, entries[i].help));
    add_common(commands.back(), options[i], entries[i].experiment);
  }
  std::vector<std::string> report_dirs;
  auto* report_cmd = app.add_subcommand("report", "summarise results.csv files as a markdown table");
  report_cmd->add_option("dirs", report_dirs, "run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (report_cmd->parsed()) return report(report_dirs);
    for (std::size_t i = 0; i < commands.size(); ++i) {
      if (commands[i]->parsed()) return run(entries[i].experiment, options[i]);
    }
  } catch (const bnnrobust::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const bnnrobust::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const bnnrobust::DiagnosticFailure& e) {
    std::cerr << "diagnostic failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
