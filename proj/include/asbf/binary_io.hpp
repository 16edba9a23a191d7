#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "asbf/errors.hpp"

namespace asbf::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& bytes);

/// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void bytes(std::string_view s) { raw(s.data(), s.size()); }
  void f64s(const double* p, std::size_t n) { raw(p, n * sizeof(double)); }

  const std::vector<char>& buffer() const { return buf_; }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<char> buf_;
};

/// Bounds-checked reader; every failure reports the byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v, "u32");
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v, "f64");
    return v;
  }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    raw(s.data(), n, "bytes");
    return s;
  }
  void f64s(double* p, std::size_t n) { raw(p, n * sizeof(double), "f64 array"); }

  void expect_magic(std::string_view magic) {
    const std::size_t at = pos_;
    if (bytes(magic.size()) != magic) {
      throw FormatError("bad magic at byte offset " + std::to_string(at) + ", expected \"" +
                        std::string(magic) + "\"");
    }
  }
  void expect_end() const {
    if (pos_ != data_.size()) {
      throw FormatError("trailing data at byte offset " + std::to_string(pos_));
    }
  }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void raw(void* p, std::size_t n, const char* what) {
    if (n > data_.size() - pos_) {
      throw FormatError(std::string("truncated file: need ") + std::to_string(n) + " bytes for " +
                        what + " at byte offset " + std::to_string(pos_) + ", " +
                        std::to_string(data_.size() - pos_) + " available");
    }
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

}  // namespace asbf::io
