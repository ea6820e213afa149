#include "bnnrobust/ensemble.hpp"

#include "bnnrobust/weights_io.hpp"

#include <fmt/format.h>

#include <fstream>

namespace bnnrobust {

std::string_view to_string(InferenceMethod method) {
  switch (method) {
    case InferenceMethod::hmc: return "hmc";
    case InferenceMethod::vi: return "vi";
    case InferenceMethod::point: return "point";
  }
  return "unknown";
}

InferenceMethod parse_method(std::string_view name) {
  if (name == "hmc") return InferenceMethod::hmc;
  if (name == "vi") return InferenceMethod::vi;
  if (name == "point" || name == "sgd") return InferenceMethod::point;
  throw ConfigError(fmt::format("unknown inference method '{}' (expected hmc, vi, sgd)", name));
}

PosteriorEnsemble::PosteriorEnsemble(NetworkArch arch, std::vector<WeightVector> samples, EnsembleMeta meta)
    : arch_(std::move(arch)), samples_(std::move(samples)), meta_(std::move(meta)) {
  arch_.validate();
  if (samples_.empty()) throw ShapeError("a posterior ensemble needs at least one sample");
  if (meta_.method == InferenceMethod::point && samples_.size() != 1) {
    throw ShapeError(fmt::format("a point ensemble holds exactly one sample, got {}", samples_.size()));
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (static_cast<std::size_t>(samples_[i].size()) != arch_.parameter_count()) {
      throw ShapeError(fmt::format("sample {} has {} weights, {} needs {}", i, samples_[i].size(), arch_.describe(),
                                   arch_.parameter_count()));
    }
    if (!samples_[i].allFinite()) throw DiagnosticFailure(fmt::format("sample {} has non-finite weights", i));
  }
}

PosteriorEnsemble PosteriorEnsemble::prefix(std::size_t n) const {
  if (n < 1 || n > samples_.size()) {
    throw std::out_of_range(fmt::format("prefix of {} samples from an ensemble of {}", n, samples_.size()));
  }
  return PosteriorEnsemble(arch_, {samples_.begin(), samples_.begin() + static_cast<std::ptrdiff_t>(n)}, meta_);
}

void save_ensemble(const PosteriorEnsemble& ensemble, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& meta = ensemble.meta();
  nlohmann::json manifest = {{"method", std::string(to_string(meta.method))},
                             {"arch", arch_to_json(ensemble.arch())},
                             {"config", meta.config},
                             {"config_hash", meta.config_hash},
                             {"seed", meta.seed},
                             {"num_samples", ensemble.size()},
                             {"elbo_trace", meta.elbo_trace},
                             {"flags", meta.flags}};
  manifest["acceptance_rate"] = meta.acceptance_rate ? nlohmann::json(*meta.acceptance_rate) : nlohmann::json();
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const auto name = fmt::format("sample_{:04d}.brwv", i);
    write_brwv(dir / name, ensemble.arch(), ensemble.sample(i));
    files.push_back(name);
  }
  manifest["files"] = files;
  std::ofstream f(dir / "manifest.json");
  if (!f) throw DataError(fmt::format("cannot write {}", (dir / "manifest.json").string()));
  f << manifest.dump(2) << '\n';
}

nlohmann::json read_ensemble_manifest(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw DataError(fmt::format("no manifest.json in {}", dir.string()));
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", (dir / "manifest.json").string(), e.what()));
  }
}

PosteriorEnsemble load_ensemble(const std::filesystem::path& dir) {
  const auto manifest = read_ensemble_manifest(dir);
  EnsembleMeta meta;
  meta.method = parse_method(manifest.at("method").get<std::string>());
  meta.seed = manifest.at("seed").get<std::uint64_t>();
  meta.config_hash = manifest.value("config_hash", "");
  meta.config = manifest.value("config", nlohmann::json::object());
  if (manifest.contains("acceptance_rate") && !manifest["acceptance_rate"].is_null()) {
    meta.acceptance_rate = manifest["acceptance_rate"].get<double>();
  }
  meta.elbo_trace = manifest.value("elbo_trace", std::vector<double>{});
  meta.flags = manifest.value("flags", std::vector<std::string>{});
  const NetworkArch arch = arch_from_json(manifest.at("arch"));
  std::vector<WeightVector> samples;
  for (const auto& name : manifest.at("files")) {
    auto stored = read_brwv(dir / name.get<std::string>());
    if (!(stored.arch == arch)) {
      throw DataError(fmt::format("{}: architecture {} differs from manifest {}", name.get<std::string>(),
                                  stored.arch.describe(), arch.describe()));
    }
    samples.push_back(std::move(stored.weights));
  }
  return PosteriorEnsemble(arch, std::move(samples), std::move(meta));
}

}  // namespace bnnrobust
