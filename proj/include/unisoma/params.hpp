#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "unisoma/tensor.hpp"

namespace unisoma {

class Tape;

/// Named bag of learnable tensors keyed by a stable path such as
/// `encoder/metal/in/weight`. Iteration order is lexicographic in the key.
class ParamStore {
 public:
  void set(const std::string& key, Tensor value);
  const Tensor& get(const std::string& key) const;
  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  /// Copy whose tensors are watched leaves on `tape`.
  ParamStore bind(Tape& tape) const;

 private:
  std::map<std::string, Tensor> entries_;
};

/// Versioned checkpoint container: magic, format version, a JSON header and
/// (key, shape, little-endian f64 payload) entries in key order.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;
  nlohmann::json header;
  ParamStore params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace unisoma
