#pragma once

// Little-endian byte buffers shared by the bank and checkpoint formats.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ssvmr/error.hpp"

namespace ssvmr::detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8(const char* what) { return le<std::uint8_t>(what); }
  std::uint16_t u16(const char* what) { return le<std::uint16_t>(what); }
  std::uint32_t u32(const char* what) { return le<std::uint32_t>(what); }
  double f64(const char* what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(msg + " at byte offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      fail(std::string("truncated payload reading ") + what + " (need " + std::to_string(n) + " bytes, have " +
           std::to_string(remaining()) + ")");
    }
  }
  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ssvmr::detail
