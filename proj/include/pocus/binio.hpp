#ifndef POCUS_BINIO_HPP
#define POCUS_BINIO_HPP

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pocus/errors.hpp"

namespace pocus {

// Little-endian binary containers. Integers and floats are serialized
// byte-by-byte so the files are portable regardless of host endianness.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw RuntimeFailure("cannot write file: " + path);
  }

  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }

  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }

  void f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u32(u);
  }

  void f64(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    u64(u);
  }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  void f32_array(const float* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) f32(p[i]);
  }

  void f64_array(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) f64(p[i]);
  }

  void close() {
    out_.close();
    if (!out_) throw RuntimeFailure("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open file: " + path);
  }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw DataError("truncated file: " + path_);
  }

  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  float f32() {
    std::uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }

  double f64() {
    std::uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }

  std::string str(std::size_t max_len = 1 << 20) {
    std::uint32_t n = u32();
    if (n > max_len) throw DataError("corrupt string length in " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  void f32_array(float* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] = f32();
  }

  void f64_array(double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] = f64();
  }

  bool at_eof() {
    return in_.peek() == EOF;
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

// Shortest decimal string that round-trips the exact double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& context) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("cannot parse number '" + s + "' in " + context);
  return v;
}

inline long parse_long(const std::string& s, const std::string& context) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("cannot parse integer '" + s + "' in " + context);
  return v;
}

}  // namespace pocus

#endif  // POCUS_BINIO_HPP
