#pragma once

// Portable serialization of a (NetworkArch, WeightVector) pair.
//
// Binary container (all integers and floats little-endian):
//
//   offset  size           field
//   0       4              magic "BRWV"
//   4       2              version (u16, currently 1)
//   6       4              input_dim (u32)
//   10      4              number of hidden layers H (u32)
//   14      4*H            hidden widths (u32 each)
//   ..      4              num_classes (u32)
//   ..      1              activation (u8: 0 relu, 1 leaky_relu, 2 tanh, 3 sigmoid)
//   ..      8              leaky slope (f64)
//   ..      8              parameter count P (u64)
//   ..      8*P            weights (f64), layout of layer_slices()

#include "bnnrobust/arch.hpp"
#include "bnnrobust/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace bnnrobust {

inline constexpr std::uint16_t kBrwvVersion = 1;

struct StoredWeights {
  NetworkArch arch;
  WeightVector weights;
};

std::vector<std::uint8_t> encode_brwv(const NetworkArch& arch, const WeightVector& w);
StoredWeights decode_brwv(const std::vector<std::uint8_t>& bytes);

void write_brwv(const std::filesystem::path& path, const NetworkArch& arch, const WeightVector& w);
StoredWeights read_brwv(const std::filesystem::path& path);

nlohmann::json arch_to_json(const NetworkArch& arch);
NetworkArch arch_from_json(const nlohmann::json& j);

/// Debug-friendly text form: {"arch": {...}, "weights": [...]}. Doubles are
/// written with round-trip precision.
nlohmann::json weights_to_json(const NetworkArch& arch, const WeightVector& w);
StoredWeights weights_from_json(const nlohmann::json& j);

}  // namespace bnnrobust
