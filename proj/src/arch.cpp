#include "bnnrobust/arch.hpp"

#include "bnnrobust/common.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace bnnrobust {

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "leaky_relu" || name == "leaky-relu" || name == "leakyrelu") return Activation::leaky_relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError(fmt::format("unknown activation '{}' (expected relu, leaky_relu, tanh, sigmoid)", name));
}

void NetworkArch::validate() const {
  if (input_dim < 1) throw ConfigError(fmt::format("input_dim must be >= 1, got {}", input_dim));
  for (int h : hidden_sizes) {
    if (h < 1) throw ConfigError(fmt::format("hidden sizes must be >= 1, got {}", h));
  }
  if (num_classes < 2) throw ConfigError(fmt::format("num_classes must be >= 2, got {}", num_classes));
  if (activation == Activation::leaky_relu && !(leaky_slope >= 0.0 && leaky_slope < 1.0)) {
    throw ConfigError(fmt::format("leaky_relu slope must lie in [0, 1), got {}", leaky_slope));
  }
}

std::vector<int> NetworkArch::layer_widths() const {
  std::vector<int> widths;
  widths.reserve(hidden_sizes.size() + 2);
  widths.push_back(input_dim);
  widths.insert(widths.end(), hidden_sizes.begin(), hidden_sizes.end());
  widths.push_back(num_classes);
  return widths;
}

std::size_t NetworkArch::parameter_count() const {
  std::size_t total = 0;
  const auto widths = layer_widths();
  for (std::size_t l = 1; l < widths.size(); ++l) {
    total += static_cast<std::size_t>(widths[l - 1] + 1) * static_cast<std::size_t>(widths[l]);
  }
  return total;
}

std::string NetworkArch::describe() const {
  return fmt::format("{}-[{}]-{} {}", input_dim, fmt::join(hidden_sizes, ","), num_classes, to_string(activation));
}

std::vector<LayerSlice> layer_slices(const NetworkArch& arch) {
  const auto widths = arch.layer_widths();
  std::vector<LayerSlice> slices;
  slices.reserve(widths.size() - 1);
  std::size_t offset = 0;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    LayerSlice s;
    s.fan_in = widths[l - 1];
    s.fan_out = widths[l];
    s.weight_offset = offset;
    offset += static_cast<std::size_t>(s.fan_in) * static_cast<std::size_t>(s.fan_out);
    s.bias_offset = offset;
    offset += static_cast<std::size_t>(s.fan_out);
    slices.push_back(s);
  }
  return slices;
}

}  // namespace bnnrobust
