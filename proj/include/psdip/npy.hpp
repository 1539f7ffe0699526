#pragma once

// NPY v1.0 reader/writer for little-endian float32, float64 and uint16 arrays in C order.
// uint16 payloads are normalized by 2^11 on load.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "psdip/error.hpp"
#include "psdip/tensor.hpp"

namespace psdip {

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

inline constexpr double kUint16Scale = 2048.0;

struct NpyArray {
  std::vector<std::size_t> shape;
  std::string descr;          // as declared in the header, e.g. "<f8"
  std::vector<double> values;  // decoded (and normalized, for uint16) samples in C order
};

namespace detail {

inline std::string npy_header_field(const std::string& header, const std::string& key) {
  const std::regex re("['\"]" + key + "['\"]\\s*:\\s*([^,}][^}]*?)\\s*(,\\s*['\"]|,?\\s*\\})");
  std::smatch m;
  if (!std::regex_search(header, m, re)) fail_io("npy.header", "NPY header lacks the '" + key + "' field");
  return m[1].str();
}

inline std::vector<std::size_t> npy_parse_shape(const std::string& text) {
  if (text.size() < 2 || text.front() != '(' || text.back() != ')')
    fail_io("npy.header", "malformed NPY shape: " + text);
  std::vector<std::size_t> shape;
  std::stringstream ss(text.substr(1, text.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    try {
      shape.push_back(static_cast<std::size_t>(std::stoull(item.substr(first))));
    } catch (...) {
      fail_io("npy.header", "malformed NPY shape entry: " + item);
    }
  }
  return shape;
}

inline std::string npy_unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '\'' || s.front() == '"')) return s.substr(1, s.size() - 2);
  return s;
}

}  // namespace detail

inline NpyArray read_npy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("io.open", "cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, "\x93NUMPY", 6) != 0) fail_io("npy.magic", path + " is not an NPY file");
  if (magic[6] != 1 || magic[7] != 0)
    fail_io("npy.version", path + ": only NPY format version 1.0 is supported");
  unsigned char len_bytes[2];
  in.read(reinterpret_cast<char*>(len_bytes), 2);
  if (in.gcount() != 2) fail_io("npy.truncated", path + ": truncated header");
  const std::size_t header_len = len_bytes[0] | (static_cast<std::size_t>(len_bytes[1]) << 8);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::size_t>(in.gcount()) != header_len) fail_io("npy.truncated", path + ": truncated header");

  NpyArray arr;
  const std::string fortran = detail::npy_header_field(header, "fortran_order");
  if (fortran != "False") fail_io("npy.fortran_order", path + ": Fortran-ordered arrays are not supported");
  arr.descr = detail::npy_unquote(detail::npy_header_field(header, "descr"));
  arr.shape = detail::npy_parse_shape(detail::npy_header_field(header, "shape"));

  std::size_t width = 0;
  if (arr.descr == "<f8") width = 8;
  else if (arr.descr == "<f4") width = 4;
  else if (arr.descr == "<u2") width = 2;
  else fail_io("npy.dtype", path + ": unsupported dtype " + arr.descr + " (expected <f4, <f8 or <u2)");

  std::size_t count = 1;
  for (auto d : arr.shape) count *= d;
  std::vector<char> payload(count * width);
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size())
    fail_io("npy.truncated", path + ": payload shorter than the declared shape");

  arr.values.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    const char* src = payload.data() + k * width;
    if (width == 8) {
      double v;
      std::memcpy(&v, src, 8);
      arr.values[k] = v;
    } else if (width == 4) {
      float v;
      std::memcpy(&v, src, 4);
      arr.values[k] = v;
    } else {
      std::uint16_t v;
      std::memcpy(&v, src, 2);
      arr.values[k] = static_cast<double>(v) / kUint16Scale;
    }
  }
  return arr;
}

namespace detail {

inline void write_npy_raw(const std::string& path, const std::vector<std::size_t>& shape, const char* descr,
                          const void* data, std::size_t bytes) {
  std::string dims;
  for (std::size_t k = 0; k < shape.size(); ++k) dims += (k ? ", " : "") + std::to_string(shape[k]);
  if (shape.size() == 1) dims += ",";
  std::string header = "{'descr': '" + std::string(descr) + "', 'fortran_order': False, 'shape': (" + dims + "), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_io("io.open", "cannot write " + path);
  const auto len = static_cast<std::uint16_t>(header.size());
  out.write("\x93NUMPY\x01\x00", 8);
  const char len_bytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) fail_io("io.write", "failed writing " + path);
}

template <class T>
constexpr const char* npy_descr() {
  return sizeof(T) == 8 ? "<f8" : "<f4";
}

}  // namespace detail

template <class T>
void write_npy(const std::string& path, const Tensor3<T>& x) {
  detail::write_npy_raw(path, {x.height(), x.width(), x.bands()}, detail::npy_descr<T>(), x.data().data(),
                        x.size() * sizeof(T));
}

template <class T>
void write_npy(const std::string& path, const Tensor2<T>& x) {
  detail::write_npy_raw(path, {x.height(), x.width()}, detail::npy_descr<T>(), x.data().data(), x.size() * sizeof(T));
}

/// (H, W) arrays load as a single band.
template <class T = double>
Tensor3<T> to_tensor3(const NpyArray& a) {
  if (a.shape.size() != 2 && a.shape.size() != 3)
    fail_io("npy.shape", "expected a 2-D or 3-D array, got " + std::to_string(a.shape.size()) + " dimensions");
  const std::size_t bands = a.shape.size() == 3 ? a.shape[2] : 1;
  if (a.shape[0] == 0 || a.shape[1] == 0 || bands == 0) fail_io("npy.shape", "array has an empty dimension");
  return Tensor3<T>(a.shape[0], a.shape[1], bands, std::vector<T>(a.values.begin(), a.values.end()));
}

/// Accepts (H, W) or (H, W, 1).
template <class T = double>
Tensor2<T> to_tensor2(const NpyArray& a) {
  const bool ok = a.shape.size() == 2 || (a.shape.size() == 3 && a.shape[2] == 1);
  if (!ok) fail_io("npy.shape", "expected a single-band image");
  if (a.shape[0] == 0 || a.shape[1] == 0) fail_io("npy.shape", "array has an empty dimension");
  return Tensor2<T>(a.shape[0], a.shape[1], std::vector<T>(a.values.begin(), a.values.end()));
}

}  // namespace psdip
