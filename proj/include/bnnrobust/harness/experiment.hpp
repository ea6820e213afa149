#pragma once

#include "bnnrobust/arch.hpp"
#include "bnnrobust/attacks.hpp"
#include "bnnrobust/data.hpp"
#include "bnnrobust/ensemble.hpp"
#include "bnnrobust/harness/settings.hpp"
#include "bnnrobust/hmc.hpp"
#include "bnnrobust/sgd.hpp"
#include "bnnrobust/vi.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bnnrobust::harness {

inline constexpr const char* kToolVersion = "1.0.0";

struct TrainerSettings {
  HmcConfig hmc;
  // > 0: hmc.step_size applies at this many training points and is scaled by
  // sqrt(reference / n) for other sizes (the potential's curvature grows with n)
  Eigen::Index hmc_step_reference_n = 0;
  ViConfig vi;
  std::size_t vi_samples = 250;
  SgdConfig sgd;
};

/// Which input gradient the attack follows.
enum class AttackGradient { expected_loss, expected_prediction };

struct GridAxes {
  std::vector<std::size_t> n_use;
  std::vector<int> hidden;
  std::vector<int> depth;
  std::vector<Eigen::Index> train_size;
  int replicates = 1;
  std::vector<InferenceMethod> methods;
  double filter_accuracy = 0.8;
  std::vector<double> hmc_step_size;
  std::vector<double> vi_learning_rate;
  std::vector<double> sgd_learning_rate;
  std::vector<int> sgd_epochs;
};

struct ExperimentSpec {
  Experiment experiment = Experiment::grad_scan;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> cache_dir;
  unsigned jobs = 1;
  bool save_ensembles = false;
  std::optional<bool> raw_components;  // empty: only for inputs of dimension <= 16

  std::string dataset = "mnist";
  Eigen::Index train_size = 5000;  // 0: everything available
  Eigen::Index test_size = 200;
  double noise = 0.1;

  InferenceMethod method = InferenceMethod::hmc;
  std::vector<int> hidden;
  Activation activation = Activation::relu;
  TrainerSettings trainers;

  AttackConfig attack;
  std::string clamp_mode = "auto";  // auto: the dataset's domain; none; or "lo,hi"
  std::map<InferenceMethod, double> epsilon_per_method;
  std::vector<AttackKind> attack_kinds;
  AttackGradient attack_gradient = AttackGradient::expected_loss;
  std::filesystem::path ensemble_path;

  GridAxes grid;

  Settings settings;
  std::string config_hash;
};

/// Validates and converts resolved settings. Throws ConfigError.
ExperimentSpec make_spec(Experiment experiment, const Settings& settings, const std::filesystem::path& out_dir);

struct ResultRecord {
  std::string experiment;
  std::vector<std::pair<std::string, std::string>> cell;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::pair<std::string, double>> metrics;
  double wall_time_s = 0.0;
  std::vector<std::string> flags;

  /// "key=value;key=value" in insertion order.
  std::string cell_id() const;
  std::optional<double> metric(const std::string& name) const;
  bool has_flag(const std::string& flag) const;
};

struct RunOutput {
  std::vector<ResultRecord> records;
  /// Additional files written next to results.csv, by file name.
  std::map<std::string, std::string> files;
  nlohmann::json datasets = nlohmann::json::object();
  nlohmann::json ensembles = nlohmann::json::array();
};

struct DataBundle {
  Dataset train;
  Dataset test;
};

/// Loads (or generates) the train and test sets named by the spec.
DataBundle load_data(const ExperimentSpec& spec, Eigen::Index train_size, std::uint64_t seed);

NetworkArch make_arch(const ExperimentSpec& spec, const Dataset& data, const std::vector<int>& hidden);

/// Trains `method` or reuses a cached ensemble with an identical cache key.
PosteriorEnsemble obtain_ensemble(const ExperimentSpec& spec, InferenceMethod method, const NetworkArch& arch,
                                  const TrainerSettings& trainers, const Dataset& train, std::uint64_t seed);

/// The attack configuration for `method` against `data`.
AttackConfig attack_config_for(const ExperimentSpec& spec, InferenceMethod method, const Dataset& data);

/// Attacked copies of data.inputs.
Eigen::MatrixXd run_attack(const ExperimentSpec& spec, AttackKind kind, const PosteriorEnsemble& ensemble,
                           const Dataset& data, const AttackConfig& cfg, std::uint64_t seed);

RunOutput run_train(const ExperimentSpec& spec);
RunOutput run_attack_command(const ExperimentSpec& spec);
RunOutput run_grad_scan(const ExperimentSpec& spec);
RunOutput run_halfmoons_sweep(const ExperimentSpec& spec);
RunOutput run_attack_eval(const ExperimentSpec& spec);
RunOutput run_tradeoff_grid(const ExperimentSpec& spec);
RunOutput run_experiment(const ExperimentSpec& spec);

/// Long-format CSV: experiment,cell,seed,config_hash,metric,value. Wall
/// times are excluded so reruns are byte-identical.
std::string results_csv(const std::vector<ResultRecord>& records);
std::vector<ResultRecord> parse_results_csv(const std::string& text);

/// Writes results.csv, manifest.json and every extra file into spec.out_dir.
void write_run(const ExperimentSpec& spec, const RunOutput& output);

}  // namespace bnnrobust::harness
