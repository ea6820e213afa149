#include "bnnrobust/weights_io.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bnnrobust {
namespace {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(const char* s, std::size_t n) { bytes_.insert(bytes_.end(), s, s + n); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::uint64_t get(int n) {
    if (remaining() < static_cast<std::size_t>(n)) {
      throw DataError(fmt::format("BRWV: truncated at byte offset {} (need {} more bytes)", pos_, n));
    }
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_brwv(const NetworkArch& arch, const WeightVector& w) {
  arch.validate();
  if (static_cast<std::size_t>(w.size()) != arch.parameter_count()) {
    throw ShapeError(fmt::format("cannot encode {} weights for {}", w.size(), arch.describe()));
  }
  ByteWriter out;
  out.raw("BRWV", 4);
  out.u16(kBrwvVersion);
  out.u32(static_cast<std::uint32_t>(arch.input_dim));
  out.u32(static_cast<std::uint32_t>(arch.hidden_sizes.size()));
  for (int h : arch.hidden_sizes) out.u32(static_cast<std::uint32_t>(h));
  out.u32(static_cast<std::uint32_t>(arch.num_classes));
  out.u8(static_cast<std::uint8_t>(arch.activation));
  out.f64(arch.leaky_slope);
  out.u64(static_cast<std::uint64_t>(w.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) out.f64(w(i));
  return out.take();
}

StoredWeights decode_brwv(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "BRWV", 4) != 0) {
    throw DataError("BRWV: bad magic at byte offset 0 (expected \"BRWV\")");
  }
  ByteReader in(bytes);
  for (int i = 0; i < 4; ++i) in.u8();
  const auto version = in.u16();
  if (version != kBrwvVersion) {
    throw DataError(fmt::format("BRWV: unsupported version {} at byte offset 4", version));
  }
  StoredWeights out;
  out.arch.input_dim = static_cast<int>(in.u32());
  const auto hidden = in.u32();
  if (static_cast<std::size_t>(hidden) * 4 > in.remaining()) {
    throw DataError(fmt::format("BRWV: hidden layer count {} exceeds file size", hidden));
  }
  for (std::uint32_t i = 0; i < hidden; ++i) out.arch.hidden_sizes.push_back(static_cast<int>(in.u32()));
  out.arch.num_classes = static_cast<int>(in.u32());
  const auto act_offset = in.offset();
  const auto act = in.u8();
  if (act > 3) throw DataError(fmt::format("BRWV: invalid activation code {} at byte offset {}", act, act_offset));
  out.arch.activation = static_cast<Activation>(act);
  out.arch.leaky_slope = in.f64();
  try {
    out.arch.validate();
  } catch (const ConfigError& e) {
    throw DataError(fmt::format("BRWV: invalid architecture: {}", e.what()));
  }
  const auto count_offset = in.offset();
  const auto count = in.u64();
  if (count != out.arch.parameter_count()) {
    throw DataError(fmt::format("BRWV: parameter count {} at byte offset {} does not match {} ({} expected)", count,
                                count_offset, out.arch.describe(), out.arch.parameter_count()));
  }
  if (in.remaining() != count * 8) {
    throw DataError(fmt::format("BRWV: payload at byte offset {} has {} bytes, expected {}", in.offset(),
                                in.remaining(), count * 8));
  }
  out.weights.resize(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) out.weights(static_cast<Eigen::Index>(i)) = in.f64();
  return out;
}

void write_brwv(const std::filesystem::path& path, const NetworkArch& arch, const WeightVector& w) {
  const auto bytes = encode_brwv(arch, w);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(fmt::format("cannot open {} for writing", path.string()));
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError(fmt::format("failed writing {}", path.string()));
}

StoredWeights read_brwv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError(fmt::format("cannot open {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_brwv(bytes);
}

nlohmann::json arch_to_json(const NetworkArch& arch) {
  return {{"input_dim", arch.input_dim},
          {"hidden_sizes", arch.hidden_sizes},
          {"num_classes", arch.num_classes},
          {"activation", std::string(to_string(arch.activation))},
          {"leaky_slope", arch.leaky_slope}};
}

NetworkArch arch_from_json(const nlohmann::json& j) {
  NetworkArch arch;
  arch.input_dim = j.at("input_dim").get<int>();
  arch.hidden_sizes = j.at("hidden_sizes").get<std::vector<int>>();
  arch.num_classes = j.at("num_classes").get<int>();
  arch.activation = parse_activation(j.at("activation").get<std::string>());
  arch.leaky_slope = j.value("leaky_slope", 0.01);
  arch.validate();
  return arch;
}

nlohmann::json weights_to_json(const NetworkArch& arch, const WeightVector& w) {
  if (static_cast<std::size_t>(w.size()) != arch.parameter_count()) {
    throw ShapeError(fmt::format("cannot encode {} weights for {}", w.size(), arch.describe()));
  }
  return {{"arch", arch_to_json(arch)}, {"weights", std::vector<double>(w.data(), w.data() + w.size())}};
}

StoredWeights weights_from_json(const nlohmann::json& j) {
  StoredWeights out;
  out.arch = arch_from_json(j.at("arch"));
  const auto values = j.at("weights").get<std::vector<double>>();
  if (values.size() != out.arch.parameter_count()) {
    throw DataError(fmt::format("JSON weights: {} values for {} ({} expected)", values.size(), out.arch.describe(),
                                out.arch.parameter_count()));
  }
  out.weights = Eigen::Map<const WeightVector>(values.data(), static_cast<Eigen::Index>(values.size()));
  return out;
}

}  // namespace bnnrobust
