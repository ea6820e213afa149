#include "bnnrobust/data.hpp"

#include <fmt/format.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

namespace bnnrobust {
namespace {

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in, const std::string& source) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw DataError("zlib: inflateInit2 failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof(chunk);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      const auto at = zs.total_in;
      inflateEnd(&zs);
      throw DataError(fmt::format("{}: corrupt gzip stream near compressed byte offset {}", source, at));
    }
    out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
    if (rc != Z_STREAM_END && zs.avail_in == 0 && zs.avail_out != 0) {
      const auto at = zs.total_in;
      inflateEnd(&zs);
      throw DataError(fmt::format("{}: truncated gzip stream at compressed byte offset {}", source, at));
    }
  }
  inflateEnd(&zs);
  return out;
}

std::vector<std::uint8_t> gzip(const std::vector<std::uint8_t>& in) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw DataError("zlib: deflateInit2 failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())) + 64);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw DataError("zlib: deflate failed");
  out.resize(zs.total_out);
  return out;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError(fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(fmt::format("cannot open {} for writing", path.string()));
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) b.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::vector<std::vector<Eigen::Index>> indices_by_class(const Dataset& data) {
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(data.num_classes));
  for (Eigen::Index i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  return by_class;
}

}  // namespace

void Dataset::validate() const {
  if (num_classes < 2) throw DataError(fmt::format("dataset '{}': num_classes must be >= 2", name));
  if (inputs.cols() < 1) throw DataError(fmt::format("dataset '{}' is empty", name));
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) {
    throw DataError(fmt::format("dataset '{}': {} inputs but {} labels", name, inputs.cols(), labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw DataError(fmt::format("dataset '{}': label {} at index {} outside [0, {})", name, labels[i], i,
                                  num_classes));
    }
  }
  if (!inputs.allFinite()) throw DataError(fmt::format("dataset '{}' has non-finite inputs", name));
  if (domain && (inputs.minCoeff() < domain->lo || inputs.maxCoeff() > domain->hi)) {
    throw DataError(fmt::format("dataset '{}' has inputs outside [{}, {}]", name, domain->lo, domain->hi));
  }
}

Dataset Dataset::select(std::span<const Eigen::Index> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.name = name;
  out.domain = domain;
  out.inputs.resize(inputs.rows(), static_cast<Eigen::Index>(indices.size()));
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out.inputs.col(static_cast<Eigen::Index>(k)) = inputs.col(indices[k]);
    out.labels.push_back(labels[static_cast<std::size_t>(indices[k])]);
  }
  return out;
}

std::vector<Eigen::Index> Dataset::class_counts() const {
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

Dataset make_half_moons(Eigen::Index n, double noise_std, Rng& rng) {
  if (n < 2 || n % 2 != 0) throw ConfigError(fmt::format("half moons needs an even positive size, got {}", n));
  if (!(noise_std >= 0.0)) throw ConfigError(fmt::format("noise_std must be >= 0, got {}", noise_std));
  Dataset data;
  data.name = "halfmoons";
  data.num_classes = 2;
  data.inputs.resize(2, n);
  data.labels.resize(static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double t = angle(rng);
    double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
    double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
    if (noise_std > 0.0) {
      x += noise_std * noise(rng);
      y += noise_std * noise(rng);
    }
    data.inputs(0, i) = x;
    data.inputs(1, i) = y;
    data.labels[static_cast<std::size_t>(i)] = label;
  }
  return data;
}

IdxFile parse_idx(std::vector<std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) bytes = gunzip(bytes, source);
  if (bytes.size() < 4) throw DataError(fmt::format("{}: truncated header, {} bytes at offset 0", source, bytes.size()));
  IdxFile f;
  f.magic = read_be32(bytes, 0);
  if (f.magic != kIdxImagesMagic && f.magic != kIdxLabelsMagic) {
    throw DataError(fmt::format("{}: bad magic 0x{:08x} at byte offset 0 (expected 0x{:08x} for images or "
                                "0x{:08x} for labels)",
                                source, f.magic, kIdxImagesMagic, kIdxLabelsMagic));
  }
  const std::size_t ndims = bytes[3];
  const std::size_t header = 4 + 4 * ndims;
  if (ndims == 0 || bytes.size() < header) {
    throw DataError(fmt::format("{}: truncated dimension header, need {} bytes, file has {}", source, header,
                                bytes.size()));
  }
  std::size_t expected = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    f.dims.push_back(read_be32(bytes, 4 + 4 * i));
    expected *= f.dims.back();
  }
  const std::size_t available = bytes.size() - header;
  if (available < expected) {
    throw DataError(fmt::format("{}: truncated payload starting at byte offset {}: expected {} bytes, found {}",
                                source, header, expected, available));
  }
  if (available > expected) {
    throw DataError(fmt::format("{}: {} trailing bytes after payload end at byte offset {}", source,
                                available - expected, header + expected));
  }
  f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return f;
}

std::vector<std::uint8_t> encode_idx(const IdxFile& file) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * file.dims.size() + file.payload.size());
  put_be32(out, (file.magic & 0xffffff00u) | static_cast<std::uint32_t>(file.dims.size()));
  for (auto d : file.dims) put_be32(out, d);
  out.insert(out.end(), file.payload.begin(), file.payload.end());
  return out;
}

IdxFile read_idx_file(const std::filesystem::path& path) { return parse_idx(read_bytes(path), path.string()); }

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int num_classes) {
  const IdxFile img = read_idx_file(images);
  const IdxFile lab = read_idx_file(labels);
  if (img.magic != kIdxImagesMagic) {
    throw DataError(fmt::format("{}: magic 0x{:08x} at byte offset 0 is not an image file (expected 0x{:08x}; "
                                "labels use 0x{:08x})",
                                images.string(), img.magic, kIdxImagesMagic, kIdxLabelsMagic));
  }
  if (lab.magic != kIdxLabelsMagic) {
    throw DataError(fmt::format("{}: magic 0x{:08x} at byte offset 0 is not a label file (expected 0x{:08x}; "
                                "images use 0x{:08x})",
                                labels.string(), lab.magic, kIdxLabelsMagic, kIdxImagesMagic));
  }
  const std::size_t count = img.dims[0];
  if (lab.dims[0] != count) {
    throw DataError(fmt::format("count mismatch: {} holds {} images (byte offset 4) but {} holds {} labels (byte "
                                "offset 4)",
                                images.string(), count, labels.string(), lab.dims[0]));
  }
  const std::size_t pixels = count == 0 ? 0 : img.payload.size() / count;
  Dataset data;
  data.name = images.stem().string();
  data.num_classes = num_classes;
  data.domain = Bounds{0.0, 1.0};
  data.inputs.resize(static_cast<Eigen::Index>(pixels), static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) {
      data.inputs(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) = img.payload[i * pixels + p] / 255.0;
    }
  }
  data.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (lab.payload[i] >= num_classes) {
      throw DataError(fmt::format("{}: label {} at byte offset {} exceeds {} classes", labels.string(),
                                  lab.payload[i], 4 + 4 * lab.dims.size() + i, num_classes));
    }
    data.labels.push_back(lab.payload[i]);
  }
  return data;
}

void save_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels,
              std::uint32_t rows, std::uint32_t cols) {
  if (static_cast<Eigen::Index>(rows) * cols != data.dim()) {
    throw ShapeError(fmt::format("{}x{} images do not match input dimension {}", rows, cols, data.dim()));
  }
  IdxFile img{kIdxImagesMagic, {static_cast<std::uint32_t>(data.size()), rows, cols}, {}};
  img.payload.reserve(static_cast<std::size_t>(data.inputs.size()));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index p = 0; p < data.dim(); ++p) {
      const double v = data.inputs(p, i) * 255.0;
      if (!(v >= 0.0 && v <= 255.0)) throw DataError("save_idx: inputs must lie in [0, 1]");
      img.payload.push_back(static_cast<std::uint8_t>(std::lround(v)));
    }
  }
  IdxFile lab{kIdxLabelsMagic, {static_cast<std::uint32_t>(data.size())}, {}};
  for (int y : data.labels) {
    if (y < 0 || y > 255) throw DataError("save_idx: labels must fit in one byte");
    lab.payload.push_back(static_cast<std::uint8_t>(y));
  }
  auto emit = [](const std::filesystem::path& p, std::vector<std::uint8_t> bytes) {
    if (p.extension() == ".gz") bytes = gzip(bytes);
    write_bytes(p, bytes);
  };
  emit(images, encode_idx(img));
  emit(labels, encode_idx(lab));
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, Rng& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError(fmt::format("train_fraction must lie strictly inside (0, 1), got {}", train_fraction));
  }
  std::vector<Eigen::Index> train, test;
  for (auto& idx : indices_by_class(data)) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto take = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
  }
  if (train.empty() || test.empty()) {
    throw ConfigError(fmt::format("split of {} examples at fraction {} leaves an empty part", data.size(),
                                  train_fraction));
  }
  std::shuffle(train.begin(), train.end(), rng);
  std::shuffle(test.begin(), test.end(), rng);
  return {data.select(train), data.select(test)};
}

Dataset subsample(const Dataset& data, Eigen::Index n, Rng& rng) {
  if (n < 1 || n > data.size()) {
    throw ConfigError(fmt::format("cannot subsample {} examples from {}", n, data.size()));
  }
  auto by_class = indices_by_class(data);
  const auto total = static_cast<double>(data.size());
  std::vector<std::size_t> quota(by_class.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    const double exact = static_cast<double>(n) * static_cast<double>(by_class[k].size()) / total;
    quota[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[k];
    remainders.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < static_cast<std::size_t>(n); ++r) {
    const auto k = remainders[r % remainders.size()].second;
    if (quota[k] < by_class[k].size()) {
      ++quota[k];
      ++assigned;
    }
  }
  std::vector<Eigen::Index> chosen;
  chosen.reserve(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    std::shuffle(by_class[k].begin(), by_class[k].end(), rng);
    chosen.insert(chosen.end(), by_class[k].begin(), by_class[k].begin() + static_cast<std::ptrdiff_t>(quota[k]));
  }
  std::shuffle(chosen.begin(), chosen.end(), rng);
  return data.select(chosen);
}

void export_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError(fmt::format("cannot open {} for writing", path.string()));
  for (Eigen::Index p = 0; p < data.dim(); ++p) f << 'x' << p << ',';
  f << "label\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index p = 0; p < data.dim(); ++p) f << fmt::format("{}", data.inputs(p, i)) << ',';
    f << data.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

std::uint64_t fingerprint(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::int64_t rows = data.inputs.rows();
  const std::int64_t cols = data.inputs.cols();
  mix(&rows, sizeof rows);
  mix(&cols, sizeof cols);
  mix(data.inputs.data(), static_cast<std::size_t>(data.inputs.size()) * sizeof(double));
  mix(data.labels.data(), data.labels.size() * sizeof(int));
  mix(&data.num_classes, sizeof data.num_classes);
  return h;
}

}  // namespace bnnrobust
