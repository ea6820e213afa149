#include "bnnrobust/harness/settings.hpp"

#include "bnnrobust/common.hpp"
#include "bnnrobust/util.hpp"

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <charconv>

#ifndef BNNROBUST_DATA_DIR
#define BNNROBUST_DATA_DIR "data"
#endif

namespace bnnrobust::harness {
namespace {

using Table = std::map<std::string, std::string>;

Table base_defaults() {
  return {
      {"experiment.seed", ""},
      {"experiment.jobs", "1"},
      {"experiment.cache_dir", ""},
      {"experiment.save_ensembles", "false"},
      {"experiment.raw_components", "auto"},

      {"data.dataset", "mnist"},
      {"data.dir", BNNROBUST_DATA_DIR},
      {"data.train_size", "5000"},
      {"data.test_size", "200"},
      {"data.noise", "0.1"},

      {"model.method", "hmc"},
      {"model.hidden", "128,128"},
      {"model.activation", "relu"},

      {"hmc.step_size", "0.002"},
      {"hmc.leapfrog_steps", "40"},
      {"hmc.warmup_samples", "40"},
      {"hmc.posterior_samples", "250"},
      {"hmc.prior_std", "0.05"},
      {"hmc.thinning", "1"},
      {"hmc.step_reference_n", "0"},

      {"vi.learning_rate", "0.001"},
      {"vi.epochs", "10"},
      {"vi.batch_size", "128"},
      {"vi.elbo_mc_samples", "1"},
      {"vi.prior_std", "1"},
      {"vi.rho_init", "-5"},
      {"vi.samples", "250"},

      {"sgd.learning_rate", "0.05"},
      {"sgd.epochs", "10"},
      {"sgd.batch_size", "128"},

      {"attack.kinds", "rand,fgsm,pgd"},
      {"attack.epsilon", "0.1"},
      {"attack.epsilon_hmc", "0.1"},
      {"attack.epsilon_vi", "0.1"},
      {"attack.epsilon_sgd", "0.1"},
      {"attack.pgd_alpha", "auto"},
      {"attack.pgd_iterations", "15"},
      {"attack.pgd_restarts", "1"},
      {"attack.clamp", "auto"},
      {"attack.grad_samples", "100"},
      {"attack.resample", "false"},
      {"attack.gradient", "expected_loss"},
      {"attack.ensemble", ""},

      {"grid.n_use", "1,10,50,100,250"},
      {"grid.hidden", "16,64,256"},
      {"grid.depth", "1"},
      {"grid.train_size", "500,2000,8000"},
      {"grid.replicates", "1"},
      {"grid.methods", "hmc,sgd"},
      {"grid.filter_accuracy", "0.8"},
      {"grid.hmc_step_size", ""},
      {"grid.vi_learning_rate", ""},
      {"grid.sgd_learning_rate", ""},
      {"grid.sgd_epochs", ""},
  };
}

void apply(Table& t, const Table& overrides) {
  for (const auto& [k, v] : overrides) t.at(k) = v;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, std::string_view expected) {
  throw ConfigError(fmt::format("setting {} = '{}' is not {}", key, value, expected));
}

template <class T>
T parse_number(const std::string& key, const std::string& text, std::string_view expected) {
  const std::string s = boost::algorithm::trim_copy(text);
  T value{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (s.empty() || ec != std::errc() || ptr != end) bad_value(key, text, expected);
  return value;
}

}  // namespace

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::train: return "train";
    case Experiment::attack: return "attack";
    case Experiment::grad_scan: return "grad_scan";
    case Experiment::halfmoons_sweep: return "halfmoons_sweep";
    case Experiment::attack_eval: return "attack_eval";
    case Experiment::tradeoff_grid: return "tradeoff_grid";
  }
  return "unknown";
}

Experiment parse_experiment(std::string_view name) {
  for (auto e : {Experiment::train, Experiment::attack, Experiment::grad_scan, Experiment::halfmoons_sweep,
                 Experiment::attack_eval, Experiment::tradeoff_grid}) {
    std::string canonical = to_string(e);
    std::string dashed = canonical;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    if (name == canonical || name == dashed) return e;
  }
  throw ConfigError(fmt::format("unknown experiment '{}'", name));
}

Settings Settings::defaults(Experiment experiment, bool full_scale) {
  Table t = base_defaults();
  switch (experiment) {
    case Experiment::train:
    case Experiment::attack:
    case Experiment::grad_scan:
      break;
    case Experiment::halfmoons_sweep:
      apply(t, {{"data.dataset", "halfmoons"},
                {"data.test_size", "100"},
                {"model.activation", "leaky_relu"},
                {"hmc.step_size", "0.01"},
                {"hmc.step_reference_n", "500"},
                {"hmc.leapfrog_steps", "10"},
                {"hmc.warmup_samples", "100"},
                {"hmc.prior_std", "1"},
                {"grid.replicates", "3"}});
      break;
    case Experiment::attack_eval:
      apply(t, {{"data.test_size", "500"}});
      break;
    case Experiment::tradeoff_grid:
      apply(t, {{"data.test_size", "200"},
                {"attack.kinds", "fgsm"},
                {"grid.hidden", "32,64,128"},
                {"grid.depth", "1,2"},
                {"grid.hmc_step_size", "0.002,0.003"},
                {"hmc.leapfrog_steps", "20"},
                {"hmc.warmup_samples", "30"},
                {"hmc.posterior_samples", "100"},
                {"grid.replicates", "3"},
                {"grid.sgd_learning_rate", "0.01,0.05,0.1"},
                {"grid.sgd_epochs", "5,20"},
                {"grid.vi_learning_rate", "0.001,0.01"}});
      break;
  }
  if (full_scale) {
    apply(t, {{"data.train_size", "0"},
              {"model.hidden", "1024"},
              {"hmc.leapfrog_steps", "10"},
              {"hmc.posterior_samples", "500"},
              {"vi.samples", "500"},
              {"attack.grad_samples", "250"}});
    if (experiment == Experiment::halfmoons_sweep) {
      apply(t, {{"grid.hidden", "32,128,256,512"},
                {"grid.train_size", "5000,10000,15000"},
                {"hmc.posterior_samples", "250"},
                {"hmc.warmup_samples", "500"}});
    }
  }
  Settings s;
  s.values_ = std::move(t);
  return s;
}

void Settings::merge_file(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("cannot read config {}: {}", path.string(), e.what()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(fmt::format("{}: key '{}' must sit inside a [section]", path.string(), section));
    }
    for (const auto& [key, value] : body) set(section + "." + key, value.data());
  }
}

void Settings::assign(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError(fmt::format("override '{}' is not of the form section.key=value", assignment));
  }
  set(boost::algorithm::trim_copy(std::string(assignment.substr(0, eq))),
      boost::algorithm::trim_copy(std::string(assignment.substr(eq + 1))));
}

void Settings::set(const std::string& key, std::string value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(fmt::format("unknown setting '{}'", key));
  it->second = std::move(value);
}

const std::string& Settings::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(fmt::format("unknown setting '{}'", key));
  return it->second;
}

long long Settings::get_int(const std::string& key) const {
  return parse_number<long long>(key, raw(key), "an integer");
}

std::uint64_t Settings::get_u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, raw(key), "an unsigned 64-bit integer");
}

double Settings::get_double(const std::string& key) const {
  return parse_number<double>(key, raw(key), "a number");
}

bool Settings::get_bool(const std::string& key) const {
  const std::string& v = raw(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::vector<long long> Settings::get_int_list(const std::string& key) const {
  std::vector<long long> out;
  for (const auto& item : split_list(raw(key))) out.push_back(parse_number<long long>(key, item, "an integer list"));
  return out;
}

std::vector<double> Settings::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(raw(key))) out.push_back(parse_number<double>(key, item, "a number list"));
  return out;
}

std::vector<std::string> Settings::get_string_list(const std::string& key) const { return split_list(raw(key)); }

nlohmann::json Settings::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

std::string Settings::hash() const {
  std::string canonical;
  for (const auto& [k, v] : values_) {
    // the data directory is a location, not an input
    if (k == "data.dir" || k == "experiment.jobs" || k == "experiment.cache_dir") continue;
    canonical += k + "=" + v + "\n";
  }
  return hash_hex(canonical);
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  const std::string s(text);
  if (boost::algorithm::trim_copy(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(boost::algorithm::trim_copy(s.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace bnnrobust::harness
