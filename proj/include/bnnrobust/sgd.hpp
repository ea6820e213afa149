#pragma once

#include "bnnrobust/data.hpp"
#include "bnnrobust/ensemble.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>

namespace bnnrobust {

struct SgdConfig {
  double learning_rate = 0.05;
  int epochs = 5;
  int batch_size = 128;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Minibatch SGD on the mean cross-entropy from he initialisation, reshuffled
/// every epoch. Returns a single-sample (method = point) ensemble.
PosteriorEnsemble sgd_train(const NetworkArch& arch, const Dataset& data, const SgdConfig& cfg, std::uint64_t seed);

}  // namespace bnnrobust
