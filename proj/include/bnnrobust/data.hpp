#pragma once

#include "bnnrobust/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bnnrobust {

/// Labelled examples. `inputs` holds one example per column (d x N).
struct Dataset {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;
  /// Valid input domain, e.g. [0, 1] for normalised images; empty when unbounded.
  std::optional<Bounds> domain;

  Eigen::Index size() const { return inputs.cols(); }
  Eigen::Index dim() const { return inputs.rows(); }

  /// Throws DataError if labels, sizes or values violate the invariants.
  void validate() const;

  std::span<const int> label_span() const { return labels; }
  Dataset select(std::span<const Eigen::Index> indices) const;
  std::vector<Eigen::Index> class_counts() const;
};

/// Interleaving half circles: class 0 on (cos t, sin t), class 1 on
/// (1 - cos t, 0.5 - sin t), t ~ U[0, pi], plus isotropic Gaussian noise.
/// Examples alternate class 0, class 1, ... so counts are exactly n/2 each.
Dataset make_half_moons(Eigen::Index n, double noise_std, Rng& rng);

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Raw IDX container with unsigned-byte payload.
struct IdxFile {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

/// Parses IDX bytes (gzip-compressed input is detected and inflated).
IdxFile parse_idx(std::vector<std::uint8_t> bytes, const std::string& source = "<memory>");
std::vector<std::uint8_t> encode_idx(const IdxFile& file);
IdxFile read_idx_file(const std::filesystem::path& path);

/// Loads an image/label IDX pair; pixel bytes are scaled by 1/255 into [0, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int num_classes = 10);

/// Writes an image dataset (values k/255) back to IDX; gzip when the path ends in ".gz".
void save_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels,
              std::uint32_t rows, std::uint32_t cols);

/// Stratified shuffle split; train_fraction must lie strictly inside (0, 1)
/// and both parts must be non-empty.
std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, Rng& rng);

/// Stratified random subset of size n (n <= N). Class shares follow the
/// source proportions using largest-remainder rounding.
Dataset subsample(const Dataset& data, Eigen::Index n, Rng& rng);

/// CSV with header x0,...,x{d-1},label; one example per line.
void export_csv(const Dataset& data, const std::filesystem::path& path);

/// FNV-1a over the raw bytes of inputs, labels and class count.
std::uint64_t fingerprint(const Dataset& data);

}  // namespace bnnrobust
