#pragma once

#include "bnnrobust/ensemble.hpp"

#include <random>
#include <vector>

namespace fixture {

inline bnnrobust::WeightVector random_weights(const bnnrobust::NetworkArch& arch, std::mt19937_64& rng,
                                              double scale = 0.8) {
  std::normal_distribution<double> normal(0.0, scale);
  bnnrobust::WeightVector w(static_cast<Eigen::Index>(arch.parameter_count()));
  for (auto& v : w) v = normal(rng);
  return w;
}

/// Metadata of a sampled posterior, so ensembles may hold several samples.
inline bnnrobust::EnsembleMeta sampled() {
  bnnrobust::EnsembleMeta meta;
  meta.method = bnnrobust::InferenceMethod::hmc;
  return meta;
}

inline bnnrobust::PosteriorEnsemble random_ensemble(const bnnrobust::NetworkArch& arch, std::size_t n,
                                                    std::mt19937_64& rng, double scale = 0.8) {
  std::vector<bnnrobust::WeightVector> samples;
  for (std::size_t i = 0; i < n; ++i) samples.push_back(random_weights(arch, rng, scale));
  return {arch, std::move(samples), sampled()};
}

inline bnnrobust::PosteriorEnsemble single(const bnnrobust::NetworkArch& arch, bnnrobust::WeightVector w) {
  return {arch, {std::move(w)}, {}};
}

inline Eigen::VectorXd uniform_vector(Eigen::Index d, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd x(d);
  for (auto& v : x) v = u(rng);
  return x;
}

}  // namespace fixture
