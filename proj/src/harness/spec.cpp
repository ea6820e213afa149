#include "bnnrobust/harness/experiment.hpp"

#include "bnnrobust/predictive.hpp"
#include "bnnrobust/util.hpp"
#include "bnnrobust/weights_io.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace bnnrobust::harness {
namespace {

template <class To>
std::vector<To> positive_list(const Settings& s, const std::string& key, bool allow_empty = false) {
  std::vector<To> out;
  for (long long v : s.get_int_list(key)) {
    if (v < 1) throw ConfigError(fmt::format("{} entries must be >= 1, got {}", key, v));
    out.push_back(static_cast<To>(v));
  }
  if (out.empty() && !allow_empty) throw ConfigError(fmt::format("{} must not be empty", key));
  return out;
}

std::vector<double> positive_doubles(const Settings& s, const std::string& key) {
  auto out = s.get_double_list(key);
  for (double v : out) {
    if (!(v > 0.0)) throw ConfigError(fmt::format("{} entries must be > 0, got {}", key, v));
  }
  return out;
}

int non_negative_int(const Settings& s, const std::string& key) {
  const long long v = s.get_int(key);
  if (v < 0) throw ConfigError(fmt::format("{} must be >= 0, got {}", key, v));
  return static_cast<int>(v);
}

std::filesystem::path dataset_file(const ExperimentSpec& spec, const std::string& stem) {
  const auto dir = spec.data_dir / spec.dataset;
  for (const char* ext : {".gz", ""}) {
    auto p = dir / (stem + ext);
    if (std::filesystem::exists(p)) return p;
  }
  throw DataError(fmt::format("missing {} (looked for {}.gz and {})", (dir / stem).string(), stem, stem));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw DataError(fmt::format("short write to {}", path.string()));
}

nlohmann::json trainer_json(InferenceMethod method, const TrainerSettings& t) {
  switch (method) {
    case InferenceMethod::hmc: return t.hmc.to_json();
    case InferenceMethod::vi: {
      auto j = t.vi.to_json();
      j["samples"] = t.vi_samples;
      return j;
    }
    case InferenceMethod::point: return t.sgd.to_json();
  }
  return {};
}

PosteriorEnsemble train(InferenceMethod method, const NetworkArch& arch, const TrainerSettings& t,
                        const Dataset& train_set, std::uint64_t seed) {
  switch (method) {
    case InferenceMethod::hmc: return hmc_sample(arch, train_set, t.hmc, seed);
    case InferenceMethod::vi:
      return vi_sample(vi_fit(arch, train_set, t.vi, seed), t.vi_samples, derive_seed(seed, 1));
    case InferenceMethod::point: return sgd_train(arch, train_set, t.sgd, seed);
  }
  throw ConfigError("unknown inference method");
}

}  // namespace

ExperimentSpec make_spec(Experiment experiment, const Settings& s, const std::filesystem::path& out_dir) {
  ExperimentSpec spec;
  spec.experiment = experiment;
  spec.settings = s;
  spec.config_hash = s.hash();
  spec.out_dir = out_dir;

  if (s.raw("experiment.seed").empty()) throw ConfigError("a seed is required (--seed or experiment.seed)");
  spec.seed = s.get_u64("experiment.seed");
  const long long jobs = s.get_int("experiment.jobs");
  if (jobs < 1) throw ConfigError(fmt::format("experiment.jobs must be >= 1, got {}", jobs));
  spec.jobs = static_cast<unsigned>(jobs);
  if (!s.raw("experiment.cache_dir").empty()) spec.cache_dir = s.raw("experiment.cache_dir");
  spec.save_ensembles = s.get_bool("experiment.save_ensembles");
  if (s.raw("experiment.raw_components") != "auto") spec.raw_components = s.get_bool("experiment.raw_components");

  spec.dataset = s.raw("data.dataset");
  if (spec.dataset != "halfmoons" && spec.dataset != "mnist" && spec.dataset != "fashion") {
    throw ConfigError(fmt::format("unknown dataset '{}' (expected halfmoons, mnist or fashion)", spec.dataset));
  }
  spec.data_dir = s.raw("data.dir");
  spec.train_size = non_negative_int(s, "data.train_size");
  spec.test_size = non_negative_int(s, "data.test_size");
  if (spec.test_size < 1) throw ConfigError("data.test_size must be >= 1");
  spec.noise = s.get_double("data.noise");
  if (!(spec.noise >= 0.0)) throw ConfigError(fmt::format("data.noise must be >= 0, got {}", spec.noise));

  spec.method = parse_method(s.raw("model.method"));
  spec.hidden = positive_list<int>(s, "model.hidden", true);
  spec.activation = parse_activation(s.raw("model.activation"));

  auto& t = spec.trainers;
  t.hmc.step_size = s.get_double("hmc.step_size");
  t.hmc.leapfrog_steps = static_cast<int>(s.get_int("hmc.leapfrog_steps"));
  t.hmc.warmup_samples = static_cast<int>(s.get_int("hmc.warmup_samples"));
  t.hmc.posterior_samples = static_cast<int>(s.get_int("hmc.posterior_samples"));
  t.hmc.prior_std = s.get_double("hmc.prior_std");
  t.hmc.thinning = static_cast<int>(s.get_int("hmc.thinning"));
  t.hmc_step_reference_n = non_negative_int(s, "hmc.step_reference_n");
  t.hmc.validate();
  t.vi.learning_rate = s.get_double("vi.learning_rate");
  t.vi.epochs = static_cast<int>(s.get_int("vi.epochs"));
  t.vi.batch_size = static_cast<int>(s.get_int("vi.batch_size"));
  t.vi.elbo_mc_samples = static_cast<int>(s.get_int("vi.elbo_mc_samples"));
  t.vi.prior_std = s.get_double("vi.prior_std");
  t.vi.rho_init = s.get_double("vi.rho_init");
  t.vi.validate();
  const long long vi_samples = s.get_int("vi.samples");
  if (vi_samples < 1) throw ConfigError(fmt::format("vi.samples must be >= 1, got {}", vi_samples));
  t.vi_samples = static_cast<std::size_t>(vi_samples);
  t.sgd.learning_rate = s.get_double("sgd.learning_rate");
  t.sgd.epochs = static_cast<int>(s.get_int("sgd.epochs"));
  t.sgd.batch_size = static_cast<int>(s.get_int("sgd.batch_size"));
  t.sgd.validate();

  spec.attack.epsilon = s.get_double("attack.epsilon");
  if (s.raw("attack.pgd_alpha") != "auto") spec.attack.pgd_alpha = s.get_double("attack.pgd_alpha");
  spec.attack.pgd_iterations = static_cast<int>(s.get_int("attack.pgd_iterations"));
  spec.attack.pgd_restarts = static_cast<int>(s.get_int("attack.pgd_restarts"));
  const long long grad_samples = s.get_int("attack.grad_samples");
  if (grad_samples < 1) throw ConfigError(fmt::format("attack.grad_samples must be >= 1, got {}", grad_samples));
  spec.attack.grad_samples = static_cast<std::size_t>(grad_samples);
  spec.attack.resample_per_iteration = s.get_bool("attack.resample");
  spec.clamp_mode = s.raw("attack.clamp");
  if (spec.clamp_mode != "auto" && spec.clamp_mode != "none") {
    const auto bounds = s.get_double_list("attack.clamp");
    if (bounds.size() != 2) throw ConfigError("attack.clamp must be auto, none or 'lo,hi'");
    spec.attack.clamp = Bounds{bounds[0], bounds[1]};
  }
  spec.attack.validate();
  spec.epsilon_per_method[InferenceMethod::hmc] = s.get_double("attack.epsilon_hmc");
  spec.epsilon_per_method[InferenceMethod::vi] = s.get_double("attack.epsilon_vi");
  spec.epsilon_per_method[InferenceMethod::point] = s.get_double("attack.epsilon_sgd");
  for (const auto& [m, eps] : spec.epsilon_per_method) {
    if (!(eps >= 0.0)) throw ConfigError(fmt::format("attack.epsilon_{} must be >= 0", to_string(m)));
  }
  for (const auto& k : s.get_string_list("attack.kinds")) spec.attack_kinds.push_back(parse_attack_kind(k));
  if (spec.attack_kinds.empty()) throw ConfigError("attack.kinds must not be empty");
  const std::string& gradient = s.raw("attack.gradient");
  if (gradient == "expected_loss") {
    spec.attack_gradient = AttackGradient::expected_loss;
  } else if (gradient == "expected_prediction") {
    spec.attack_gradient = AttackGradient::expected_prediction;
  } else {
    throw ConfigError(fmt::format("attack.gradient must be expected_loss or expected_prediction, got '{}'", gradient));
  }
  spec.ensemble_path = s.raw("attack.ensemble");

  auto& g = spec.grid;
  g.n_use = positive_list<std::size_t>(s, "grid.n_use");
  g.hidden = positive_list<int>(s, "grid.hidden");
  g.depth = positive_list<int>(s, "grid.depth");
  g.train_size = positive_list<Eigen::Index>(s, "grid.train_size");
  g.replicates = static_cast<int>(s.get_int("grid.replicates"));
  if (g.replicates < 1) throw ConfigError("grid.replicates must be >= 1");
  for (const auto& m : s.get_string_list("grid.methods")) g.methods.push_back(parse_method(m));
  if (g.methods.empty()) throw ConfigError("grid.methods must not be empty");
  g.filter_accuracy = s.get_double("grid.filter_accuracy");
  g.hmc_step_size = positive_doubles(s, "grid.hmc_step_size");
  g.vi_learning_rate = positive_doubles(s, "grid.vi_learning_rate");
  g.sgd_learning_rate = positive_doubles(s, "grid.sgd_learning_rate");
  g.sgd_epochs = positive_list<int>(s, "grid.sgd_epochs", true);
  return spec;
}

std::string ResultRecord::cell_id() const {
  std::string id;
  for (const auto& [k, v] : cell) {
    if (!id.empty()) id += ';';
    id += k + "=" + v;
  }
  return id;
}

std::optional<double> ResultRecord::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics) {
    if (k == name) return v;
  }
  return std::nullopt;
}

bool ResultRecord::has_flag(const std::string& flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

DataBundle load_data(const ExperimentSpec& spec, Eigen::Index train_size, std::uint64_t seed) {
  Rng train_rng(derive_seed(seed, 0x7261696eULL));
  Rng test_rng(derive_seed(seed, 0x74657374ULL));
  DataBundle out;
  if (spec.dataset == "halfmoons") {
    if (train_size < 2) throw ConfigError("half-moons training sets need at least 2 points");
    // the generator alternates classes, so sizes are rounded up to even
    out.train = make_half_moons(train_size + train_size % 2, spec.noise, train_rng);
    out.test = make_half_moons(spec.test_size + spec.test_size % 2, spec.noise, test_rng);
    return out;
  }
  Dataset train_all = load_idx(dataset_file(spec, "train-images-idx3-ubyte"), dataset_file(spec, "train-labels-idx1-ubyte"));
  Dataset test_all = load_idx(dataset_file(spec, "t10k-images-idx3-ubyte"), dataset_file(spec, "t10k-labels-idx1-ubyte"));
  train_all.name = spec.dataset + "-train";
  test_all.name = spec.dataset + "-test";
  if (train_size > train_all.size()) {
    throw ConfigError(fmt::format("requested {} training points but {} has only {}", train_size, train_all.name,
                                  train_all.size()));
  }
  if (spec.test_size > test_all.size()) {
    throw ConfigError(fmt::format("requested {} test points but {} has only {}", spec.test_size, test_all.name,
                                  test_all.size()));
  }
  out.train = train_size == 0 ? std::move(train_all) : subsample(train_all, train_size, train_rng);
  out.test = subsample(test_all, spec.test_size, test_rng);
  return out;
}

NetworkArch make_arch(const ExperimentSpec& spec, const Dataset& data, const std::vector<int>& hidden) {
  NetworkArch arch;
  arch.input_dim = static_cast<int>(data.dim());
  arch.hidden_sizes = hidden;
  arch.num_classes = data.num_classes;
  arch.activation = spec.activation;
  arch.validate();
  return arch;
}

PosteriorEnsemble obtain_ensemble(const ExperimentSpec& spec, InferenceMethod method, const NetworkArch& arch,
                                  const TrainerSettings& requested, const Dataset& train_set, std::uint64_t seed) {
  TrainerSettings trainers = requested;
  if (trainers.hmc_step_reference_n > 0 && train_set.size() > 0) {
    trainers.hmc.step_size *= std::sqrt(static_cast<double>(trainers.hmc_step_reference_n) /
                                        static_cast<double>(train_set.size()));
  }
  if (!spec.cache_dir) return train(method, arch, trainers, train_set, seed);
  const nlohmann::json key = {{"method", std::string(to_string(method))},
                              {"arch", arch_to_json(arch)},
                              {"trainer", trainer_json(method, trainers)},
                              {"train_fingerprint", fmt::format("{:016x}", fingerprint(train_set))},
                              {"seed", seed}};
  const auto dir = *spec.cache_dir / hash_hex(key.dump());
  const auto key_file = dir / "cache_key.json";
  if (std::filesystem::exists(key_file) && nlohmann::json::parse(read_text(key_file)) == key) {
    return load_ensemble(dir);
  }
  PosteriorEnsemble ensemble = train(method, arch, trainers, train_set, seed);
  // write to a scratch directory first so a crash never leaves a half-written entry behind
  const auto scratch = dir.string() + fmt::format(".tmp{:x}", seed);
  std::filesystem::remove_all(scratch);
  save_ensemble(ensemble, scratch);
  write_text(std::filesystem::path(scratch) / "cache_key.json", key.dump(2) + "\n");
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir.parent_path());
  std::filesystem::rename(scratch, dir);
  return ensemble;
}

AttackConfig attack_config_for(const ExperimentSpec& spec, InferenceMethod method, const Dataset& data) {
  AttackConfig cfg = spec.attack;
  if (spec.experiment == Experiment::tradeoff_grid) cfg.epsilon = spec.epsilon_per_method.at(method);
  if (spec.clamp_mode == "auto") cfg.clamp = data.domain;
  if (spec.clamp_mode == "none") cfg.clamp.reset();
  cfg.validate();
  return cfg;
}

Eigen::MatrixXd run_attack(const ExperimentSpec& spec, AttackKind kind, const PosteriorEnsemble& ensemble,
                           const Dataset& data, const AttackConfig& cfg, std::uint64_t seed) {
  if (kind != AttackKind::fgsm || spec.attack_gradient == AttackGradient::expected_loss) {
    return attack_batch(kind, ensemble, data.inputs, data.label_span(), cfg, seed);
  }
  Eigen::MatrixXd out = data.inputs;
  const std::size_t n_use = cfg.samples_for(ensemble);
  for (Eigen::Index j = 0; j < data.size(); ++j) {
    const Eigen::VectorXd x = data.inputs.col(j);
    const Eigen::VectorXd g =
        expected_prediction_gradient(ensemble, x, data.labels[static_cast<std::size_t>(j)], n_use);
    const Eigen::VectorXd step = g.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); });
    Eigen::VectorXd adv = project_linf(x + cfg.epsilon * step, x, cfg.epsilon);
    if (cfg.clamp) adv = adv.cwiseMax(cfg.clamp->lo).cwiseMin(cfg.clamp->hi);
    out.col(j) = adv;
  }
  return out;
}

namespace {

// RFC 4180 quoting, only when needed.
std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string q = "\"";
  for (char c : v) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c != '"') {
        fields.back() += c;
      } else if (i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else {
        quoted = false;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

}  // namespace

std::string results_csv(const std::vector<ResultRecord>& records) {
  std::string out = "experiment,cell,seed,config_hash,metric,value\n";
  for (const auto& r : records) {
    for (const auto& [name, value] : r.metrics) {
      out += fmt::format("{},{},{},{},{},{}\n", csv_field(r.experiment), csv_field(r.cell_id()), r.seed,
                         csv_field(r.config_hash), csv_field(name), format_double(value));
    }
  }
  return out;
}

std::vector<ResultRecord> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "experiment,cell,seed,config_hash,metric,value") {
    throw DataError("results.csv: unexpected header");
  }
  std::vector<ResultRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 6) throw DataError(fmt::format("results.csv line {}: expected 6 fields, got {}", line_no, f.size()));
    if (records.empty() || records.back().experiment != f[0] || records.back().cell_id() != f[1] ||
        records.back().config_hash != f[3]) {
      ResultRecord r;
      r.experiment = f[0];
      r.seed = std::stoull(f[2]);
      r.config_hash = f[3];
      std::istringstream cell(f[1]);
      for (std::string kv; std::getline(cell, kv, ';');) {
        const auto eq = kv.find('=');
        r.cell.emplace_back(kv.substr(0, eq), eq == std::string::npos ? "" : kv.substr(eq + 1));
      }
      records.push_back(std::move(r));
    }
    records.back().metrics.emplace_back(f[4], std::stod(f[5]));
  }
  return records;
}

void write_run(const ExperimentSpec& spec, const RunOutput& output) {
  std::filesystem::create_directories(spec.out_dir);
  const std::string csv = results_csv(output.records);
  write_text(spec.out_dir / "results.csv", csv);

  nlohmann::json files = nlohmann::json::object();
  files["results.csv"] = hash_hex(csv);
  for (const auto& [name, content] : output.files) {
    write_text(spec.out_dir / name, content);
    files[name] = hash_hex(content);
  }
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : output.records) {
    records.push_back({{"cell", r.cell_id()},
                       {"seed", r.seed},
                       {"wall_time_s", r.wall_time_s},
                       {"flags", r.flags},
                       {"metrics", r.metrics.size()}});
  }
  const nlohmann::json manifest = {{"tool", "bnnrobust"},
                                   {"tool_version", kToolVersion},
                                   {"experiment", to_string(spec.experiment)},
                                   {"seed", spec.seed},
                                   {"config_hash", spec.config_hash},
                                   {"config", spec.settings.to_json()},
                                   {"datasets", output.datasets},
                                   {"ensembles", output.ensembles},
                                   {"files", files},
                                   {"records", records}};
  write_text(spec.out_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace bnnrobust::harness
