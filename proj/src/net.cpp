#include "bnnrobust/net.hpp"

#include <cmath>

namespace bnnrobust {

WeightVector init_weights(const NetworkArch& arch, InitScheme scheme, Rng& rng) {
  arch.validate();
  WeightVector w = WeightVector::Zero(static_cast<Eigen::Index>(arch.parameter_count()));
  if (scheme == InitScheme::zeros) return w;
  for (const auto& s : layer_slices(arch)) {
    const double variance = (scheme == InitScheme::he ? 2.0 : 1.0) / s.fan_in;
    std::normal_distribution<double> normal(0.0, std::sqrt(variance));
    const std::size_t count = static_cast<std::size_t>(s.fan_in) * static_cast<std::size_t>(s.fan_out);
    for (std::size_t i = 0; i < count; ++i) w(static_cast<Eigen::Index>(s.weight_offset + i)) = normal(rng);
  }
  return w;
}

}  // namespace bnnrobust
