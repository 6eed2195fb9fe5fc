#include "unisoma/params.hpp"

#include <fstream>
#include <iterator>

#include "unisoma/autograd.hpp"
#include "unisoma/binary_io.hpp"

namespace unisoma {

namespace io {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::vector<char>(text.begin(), text.end()));
}

}  // namespace io

void ParamStore::set(const std::string& key, Tensor value) {
  entries_.insert_or_assign(key, std::move(value));
}

const Tensor& ParamStore::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing parameter '" + key + "'");
  return it->second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

ParamStore ParamStore::bind(Tape& tape) const {
  ParamStore out;
  for (const auto& [k, t] : entries_) out.entries_.emplace(k, tape.watch(t));
  return out;
}

namespace {
constexpr char kMagic[8] = {'U', 'S', 'M', 'C', 'K', 'P', 'T', '\0'};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::ByteWriter w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(Checkpoint::kFormatVersion);
  w.put_string(ckpt.header.dump());
  w.put<std::uint64_t>(ckpt.params.size());
  for (const auto& [key, t] : ckpt.params.entries()) {
    w.put_string(key);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint64_t>(d);
    w.put_bytes(t.ptr(), t.numel() * sizeof(double));
  }
  io::write_file(path.string(), w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ParseError("checkpoint not found: " + path.string());
  const auto bytes = io::read_file(path.string());
  io::ByteReader r(bytes, path.string());
  char magic[8];
  r.get_bytes(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path.string() + ": not a checkpoint file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>("format version");
  if (version != Checkpoint::kFormatVersion) {
    throw ParseError(path.string() + ": checkpoint format version " + std::to_string(version) +
                     ", expected " + std::to_string(Checkpoint::kFormatVersion));
  }
  Checkpoint ckpt;
  const auto header_offset = r.offset();
  const std::string header = r.get_string("header");
  try {
    ckpt.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": bad header at byte offset " +
                     std::to_string(header_offset + 8 + e.byte) + ": " + e.what());
  }
  const auto count = r.get<std::uint64_t>("entry count");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string key = r.get_string("entry key");
    const auto rank = r.get<std::uint32_t>("entry rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>("entry shape");
    std::vector<double> data(numel(shape));
    r.get_bytes(data.data(), data.size() * sizeof(double), "entry payload");
    ckpt.params.set(key, Tensor(std::move(shape), std::move(data)));
  }
  if (r.offset() != r.size()) {
    throw ParseError(path.string() + ": trailing bytes after offset " + std::to_string(r.offset()));
  }
  return ckpt;
}

}  // namespace unisoma
