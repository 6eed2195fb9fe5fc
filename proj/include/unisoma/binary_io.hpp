#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "unisoma/tensor.hpp"

namespace unisoma::io {

static_assert(std::endian::native == std::endian::little,
              "payload encoding assumes a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    put_bytes(s.data(), s.size());
  }
  std::size_t offset() const { return bytes_.size(); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

/// Bounds-checked reader; failures name the byte offset and what was expected.
class ByteReader {
 public:
  ByteReader(const std::vector<char>& bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_bytes(void* out, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string get_string(const char* what) {
    const auto n = get<std::uint64_t>(what);
    std::string s(n, '\0');
    get_bytes(s.data(), n, what);
    return s;
  }
  std::size_t offset() const { return pos_; }
  void seek(std::size_t pos) { pos_ = pos; }
  std::size_t size() const { return bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw ParseError(source_ + ": truncated at byte offset " + std::to_string(pos_) +
                       " while reading " + what + " (need " + std::to_string(n) + " bytes, " +
                       std::to_string(bytes_.size() - pos_) + " left)");
    }
  }

  const std::vector<char>& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& bytes);
void write_text(const std::string& path, const std::string& text);

}  // namespace unisoma::io
