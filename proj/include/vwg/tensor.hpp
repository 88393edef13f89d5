#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "vwg/error.hpp"

namespace vwg {

// Dense row-major (rows, cols, channels) tensor. Channel-last layout keeps a
// grid cell's feature vector contiguous, which is what every rasterizer and
// convolution in this library iterates over.
template <typename T>
struct TensorT {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  std::vector<T> v;

  TensorT() = default;
  TensorT(int r, int c, int ch) : rows(r), cols(c), channels(ch), v(static_cast<std::size_t>(r) * c * ch, T(0)) {}

  T& at(int r, int c, int ch) { return v[(static_cast<std::size_t>(r) * cols + c) * channels + ch]; }
  const T& at(int r, int c, int ch) const { return v[(static_cast<std::size_t>(r) * cols + c) * channels + ch]; }

  T* cell(int r, int c) { return v.data() + (static_cast<std::size_t>(r) * cols + c) * channels; }
  const T* cell(int r, int c) const { return v.data() + (static_cast<std::size_t>(r) * cols + c) * channels; }

  std::size_t size() const { return v.size(); }

  bool same_shape(const TensorT& o) const { return rows == o.rows && cols == o.cols && channels == o.channels; }
};

using Tensor = TensorT<float>;

// Per-cell class indices, 0 = background.
struct LabelMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::int32_t> v;

  LabelMask() = default;
  LabelMask(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0) {}

  std::int32_t& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  std::int32_t at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

// ---------------------------------------------------------------------------
// VWGT binary tensor file:
//   magic "VWGT" | dtype u8 (0 = f32) | rank u8 | rank x dim u32 LE | f32 LE payload
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoFailure("unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }

inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

inline std::uint64_t checked_element_count(const std::vector<std::uint32_t>& dims) {
  if (dims.empty() || dims.size() > 8) throw ShapeOverflow("rank must be in 1..8");
  std::uint64_t n = 1;
  for (std::uint32_t d : dims) {
    if (d == 0) throw ShapeOverflow("zero-length dimension");
    if (n > (1ULL << 32) / d) throw ShapeOverflow("element count exceeds format limit");
    n *= d;
  }
  return n;
}

}  // namespace detail

inline void write_tensor_raw(const std::string& path, const std::vector<std::uint32_t>& dims,
                             const float* data) {
  const std::uint64_t n = detail::checked_element_count(dims);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoFailure("cannot open for write: " + path);
  os.write("VWGT", 4);
  const unsigned char dtype = 0, rank = static_cast<unsigned char>(dims.size());
  os.write(reinterpret_cast<const char*>(&dtype), 1);
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (std::uint32_t d : dims) detail::put_u32(os, d);
  for (std::uint64_t i = 0; i < n; ++i) detail::put_f32(os, data[i]);
  if (!os) throw IoFailure("short write: " + path);
}

struct RawTensorFile {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

inline RawTensorFile read_tensor_raw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoFailure("cannot open for read: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VWGT", 4) != 0) throw BadMagic("not a VWGT file: " + path);
  unsigned char dtype = 0, rank = 0;
  is.read(reinterpret_cast<char*>(&dtype), 1);
  is.read(reinterpret_cast<char*>(&rank), 1);
  if (!is) throw IoFailure("truncated header: " + path);
  if (dtype != 0) throw MalformedFile("unsupported dtype " + std::to_string(dtype));
  RawTensorFile out;
  out.dims.resize(rank);
  for (auto& d : out.dims) d = detail::get_u32(is);
  const std::uint64_t n = detail::checked_element_count(out.dims);
  out.data.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) out.data[i] = detail::get_f32(is);
  // no trailing bytes allowed
  is.peek();
  if (!is.eof()) throw MalformedFile("trailing bytes: " + path);
  return out;
}

inline void write_tensor(const std::string& path, const Tensor& t) {
  write_tensor_raw(path,
                   {static_cast<std::uint32_t>(t.rows), static_cast<std::uint32_t>(t.cols),
                    static_cast<std::uint32_t>(t.channels)},
                   t.v.data());
}

inline Tensor read_tensor(const std::string& path) {
  RawTensorFile raw = read_tensor_raw(path);
  if (raw.dims.size() != 3) throw ShapeMismatch("expected rank-3 tensor in " + path);
  Tensor t(static_cast<int>(raw.dims[0]), static_cast<int>(raw.dims[1]), static_cast<int>(raw.dims[2]));
  t.v = std::move(raw.data);
  return t;
}

// Label masks travel as rank-2 f32 tensors holding integral values.
inline void write_mask(const std::string& path, const LabelMask& m) {
  std::vector<float> buf(m.v.begin(), m.v.end());
  write_tensor_raw(path, {static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)}, buf.data());
}

inline LabelMask read_mask(const std::string& path) {
  RawTensorFile raw = read_tensor_raw(path);
  if (raw.dims.size() != 2) throw ShapeMismatch("expected rank-2 mask in " + path);
  LabelMask m(static_cast<int>(raw.dims[0]), static_cast<int>(raw.dims[1]));
  for (std::size_t i = 0; i < raw.data.size(); ++i) m.v[i] = static_cast<std::int32_t>(raw.data[i]);
  return m;
}

}  // namespace vwg
