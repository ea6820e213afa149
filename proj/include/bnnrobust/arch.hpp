#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bnnrobust {

enum class Activation : std::uint8_t { relu = 0, leaky_relu = 1, tanh = 2, sigmoid = 3 };

std::string_view to_string(Activation activation);
Activation parse_activation(std::string_view name);

/// Dense feed-forward architecture: input -> hidden_sizes... -> num_classes logits.
struct NetworkArch {
  int input_dim = 0;
  std::vector<int> hidden_sizes;
  int num_classes = 0;
  Activation activation = Activation::relu;
  double leaky_slope = 0.01;

  /// Throws ConfigError if any dimension is invalid.
  void validate() const;

  /// Widths of every layer including input and output.
  std::vector<int> layer_widths() const;
  std::size_t num_layers() const { return hidden_sizes.size() + 1; }
  std::size_t parameter_count() const;

  /// e.g. "784-[128,128]-10 relu"
  std::string describe() const;

  bool operator==(const NetworkArch&) const = default;
};

/// Offsets of one dense layer inside a flat weight vector.
struct LayerSlice {
  int fan_in = 0;
  int fan_out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

std::vector<LayerSlice> layer_slices(const NetworkArch& arch);

}  // namespace bnnrobust
