#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace bnnrobust {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Flat parameter vector of a network, laid out layer by layer as
/// [W_1 (row-major), b_1, W_2, b_2, ...].
using WeightVector = Eigen::VectorXd;
using InputVector = Eigen::VectorXd;

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream index (splitmix64 finaliser) so that
/// independent streams can be derived without consuming a parent generator.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Inconsistent dimensions between an architecture, weights, inputs or labels.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid user-facing configuration (maps to CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent data files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure ran but produced an unusable result, e.g. an HMC chain
/// that rejected every proposal (maps to CLI exit code 3).
class DiagnosticFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Closed box [lo, hi] applied componentwise to inputs.
struct Bounds {
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const Bounds&) const = default;
};

}  // namespace bnnrobust
