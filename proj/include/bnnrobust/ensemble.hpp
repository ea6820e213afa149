#pragma once

#include "bnnrobust/arch.hpp"
#include "bnnrobust/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bnnrobust {

enum class InferenceMethod { hmc, vi, point };

std::string_view to_string(InferenceMethod method);
InferenceMethod parse_method(std::string_view name);

struct EnsembleMeta {
  InferenceMethod method = InferenceMethod::point;
  std::uint64_t seed = 0;
  std::string config_hash;
  /// Resolved trainer configuration.
  nlohmann::json config = nlohmann::json::object();
  std::optional<double> acceptance_rate;
  std::vector<double> elbo_trace;
  /// Free-form notes carried into the persisted manifest.
  std::vector<std::string> flags;
};

/// n >= 1 weight samples standing in for the posterior p(w | D). Immutable.
class PosteriorEnsemble {
 public:
  PosteriorEnsemble(NetworkArch arch, std::vector<WeightVector> samples, EnsembleMeta meta);

  const NetworkArch& arch() const { return arch_; }
  const std::vector<WeightVector>& samples() const { return samples_; }
  const WeightVector& sample(std::size_t i) const { return samples_.at(i); }
  std::size_t size() const { return samples_.size(); }
  const EnsembleMeta& meta() const { return meta_; }

  /// Same posterior restricted to the first n samples.
  PosteriorEnsemble prefix(std::size_t n) const;

 private:
  NetworkArch arch_;
  std::vector<WeightVector> samples_;
  EnsembleMeta meta_;
};

/// Directory layout: manifest.json plus sample_0000.brwv, sample_0001.brwv, ...
void save_ensemble(const PosteriorEnsemble& ensemble, const std::filesystem::path& dir);
PosteriorEnsemble load_ensemble(const std::filesystem::path& dir);

/// Reads only the manifest, e.g. to compare config hashes before loading weights.
nlohmann::json read_ensemble_manifest(const std::filesystem::path& dir);

}  // namespace bnnrobust
