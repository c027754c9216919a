#pragma once

// Binary model files.
//
//   magic   "MFLNET\0\0"            8 bytes
//   version u32 (= 1)
//   layers  u32
//   per layer:
//     rows u32, cols u32, activation u8
//     weight  rows*cols f64, row-major
//     bias    rows f64
//     box     2*rows f64 (lower then upper), bounded-affine only
//
// All integers and IEEE-754 doubles are little-endian. Round trips are
// bit-exact.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

#include "mfl/errors.hpp"
#include "mfl/nn.hpp"

namespace mfl {

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::array<char, 8> kModelMagic{'M', 'F', 'L', 'N', 'E', 'T', '\0', '\0'};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b.data(), 8);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b.data(), 4);
}
inline void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

inline void read_exact(std::istream& is, char* dst, std::size_t n) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError("model file truncated");
}
inline std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  read_exact(is, reinterpret_cast<char*>(b.data()), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
inline std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  read_exact(is, reinterpret_cast<char*>(b.data()), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace detail

inline void write_model(std::ostream& os, const DenseNet& net) {
  os.write(kModelMagic.data(), kModelMagic.size());
  detail::put_u32(os, kModelFormatVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(net.layer_count()));
  for (const auto& l : net.layers()) {
    detail::put_u32(os, static_cast<std::uint32_t>(l.weight.rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(l.weight.cols()));
    const char tag = static_cast<char>(l.activation);
    os.write(&tag, 1);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) detail::put_f64(os, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) detail::put_f64(os, l.bias[r]);
    if (l.activation == Activation::bounded_affine) {
      for (Eigen::Index r = 0; r < l.box_lower.size(); ++r) detail::put_f64(os, l.box_lower[r]);
      for (Eigen::Index r = 0; r < l.box_upper.size(); ++r) detail::put_f64(os, l.box_upper[r]);
    }
  }
  if (!os) throw FormatError("failed writing model");
}

inline DenseNet read_model(std::istream& is) {
  std::array<char, 8> magic{};
  detail::read_exact(is, magic.data(), magic.size());
  if (magic != kModelMagic) throw FormatError("not a model file (bad magic)");
  const auto version = detail::get_u32(is);
  if (version != kModelFormatVersion)
    throw FormatError("unsupported model format version " + std::to_string(version));
  const auto count = detail::get_u32(is);
  if (count > 4096) throw FormatError("implausible layer count");
  std::vector<Layer> layers;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto rows = detail::get_u32(is);
    const auto cols = detail::get_u32(is);
    if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20))
      throw FormatError("implausible layer shape");
    char tag = 0;
    detail::read_exact(is, &tag, 1);
    if (tag < 0 || tag > 2) throw FormatError("unknown activation tag");
    Layer l;
    l.activation = static_cast<Activation>(tag);
    l.weight.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) l.weight(r, c) = detail::get_f64(is);
    l.bias.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) l.bias[r] = detail::get_f64(is);
    if (l.activation == Activation::bounded_affine) {
      l.box_lower.resize(rows);
      l.box_upper.resize(rows);
      for (Eigen::Index r = 0; r < rows; ++r) l.box_lower[r] = detail::get_f64(is);
      for (Eigen::Index r = 0; r < rows; ++r) l.box_upper[r] = detail::get_f64(is);
    }
    layers.push_back(std::move(l));
  }
  return DenseNet(std::move(layers));
}

inline void save_model(const DenseNet& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_model(os, net);
}

inline DenseNet load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_model(is);
}

}  // namespace mfl
