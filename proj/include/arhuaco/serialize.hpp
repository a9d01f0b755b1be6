#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "arhuaco/error.hpp"

namespace arhuaco {

// Model files share one framing: magic, u64 format version, payload,
// trailing CRC-32 (stored as a little-endian u64) over everything before it.
// All integers and floats are little-endian 64-bit.

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t seed = 0) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

class ByteWriter {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }

  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }

  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }

  void magic(const char m[4]) { bytes(m, 4); }

  void f64_array(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }

  const std::vector<std::uint8_t>& data() const { return buf_; }

  /// Appends the CRC-32 of everything written so far and flushes to disk.
  void finish_to_file(const std::string& path) {
    const std::uint32_t c = crc32(buf_.data(), buf_.size());
    u64(c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(Errc::io_error, "cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) raise(Errc::io_error, "short write: " + path);
  }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  explicit ByteReader(const std::vector<std::uint8_t>& v) : ByteReader(v.data(), v.size()) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

  std::vector<double> f64_array() {
    const std::uint64_t n = u64();
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }

  void expect_magic(const char m[4]) {
    need(4);
    if (std::memcmp(data_ + pos_, m, 4) != 0)
      raise(Errc::version_mismatch, std::string("bad magic, expected ") + std::string(m, 4));
    pos_ += 4;
  }

  std::size_t remaining() const { return size_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > size_) raise(Errc::checksum_mismatch, "truncated payload");
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io_error, "cannot open: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

/// Loads a framed model file: checks the magic first (VersionMismatch), then
/// the CRC-32 trailer (ChecksumMismatch), and returns a reader over the payload
/// positioned just after the magic.
inline std::pair<std::vector<std::uint8_t>, ByteReader> open_checked(const std::string& path,
                                                                     const char magic[4]) {
  auto buf = read_file_bytes(path);
  if (buf.size() >= 4 && std::memcmp(buf.data(), magic, 4) != 0)
    raise(Errc::version_mismatch, "bad magic in " + path);
  if (buf.size() < 12) raise(Errc::checksum_mismatch, "file too short: " + path);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(buf[buf.size() - 8 + i]) << (8 * i);
  const std::uint32_t actual = crc32(buf.data(), buf.size() - 8);
  if (stored != actual) raise(Errc::checksum_mismatch, "checksum mismatch in " + path);
  ByteReader r(buf.data(), buf.size() - 8);
  r.expect_magic(magic);
  return {std::move(buf), r};
}

}  // namespace arhuaco
