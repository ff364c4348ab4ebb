#pragma once

// Checkpoint layout: a tab-separated text manifest plus one little-endian blob.
//
//   <dir>/model.manifest
//     acgan-checkpoint<TAB>1
//     meta<TAB><key><TAB><value>
//     tensor<TAB><name><TAB><f32|f64><TAB><d0,d1,...><TAB><byte offset><TAB><count>
//   <dir>/model.bin
//
// Values are stored bit-for-bit; a save/load round trip is exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "acgan/tensor.hpp"

namespace acgan {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

namespace detail {

template <typename T>
void append_le(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

template <typename T>
T read_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(p[b]) << (8 * b);
  return std::bit_cast<T>(bits);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace detail

struct CheckpointEntry {
  std::string name;
  std::string dtype;
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t count = 0;
};

class CheckpointWriter {
 public:
  void add_meta(const std::string& key, const std::string& value) {
    if (key.find_first_of("\t\n") != std::string::npos || value.find_first_of("\t\n") != std::string::npos)
      throw CheckpointError("checkpoint metadata may not contain tabs or newlines");
    meta_.emplace_back(key, value);
  }

  template <typename T>
  void add(const std::string& name, const Shape& shape, std::span<const T> values) {
    if (name.find_first_of("\t\n") != std::string::npos)
      throw CheckpointError("tensor name may not contain tabs or newlines");
    if (shape_numel(shape) != values.size()) throw CheckpointError("shape/data size mismatch for " + name);
    entries_.push_back({name, dtype_name<T>(), shape, blob_.size(), values.size()});
    for (T v : values) detail::append_le(blob_, v);
  }

  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "model.manifest", std::ios::trunc);
    manifest << "acgan-checkpoint\t1\n";
    for (const auto& [k, v] : meta_) manifest << "meta\t" << k << '\t' << v << '\n';
    for (const auto& e : entries_) {
      manifest << "tensor\t" << e.name << '\t' << e.dtype << '\t';
      for (std::size_t i = 0; i < e.shape.size(); ++i) manifest << (i ? "," : "") << e.shape[i];
      manifest << '\t' << e.offset << '\t' << e.count << '\n';
    }
    std::ofstream blob(dir / "model.bin", std::ios::binary | std::ios::trunc);
    blob.write(reinterpret_cast<const char*>(blob_.data()), static_cast<std::streamsize>(blob_.size()));
    if (!manifest || !blob) throw CheckpointError("failed to write checkpoint to " + dir.string());
  }

 private:
  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<CheckpointEntry> entries_;
  std::vector<unsigned char> blob_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "model.manifest");
    if (!manifest) throw CheckpointError("cannot open " + (dir / "model.manifest").string());
    std::string line;
    if (!std::getline(manifest, line) || line != "acgan-checkpoint\t1")
      throw CheckpointError("not a checkpoint manifest: " + (dir / "model.manifest").string());
    while (std::getline(manifest, line)) {
      if (line.empty()) continue;
      auto f = detail::split(line, '\t');
      if (f[0] == "meta" && f.size() == 3) {
        meta_[f[1]] = f[2];
      } else if (f[0] == "tensor" && f.size() == 6) {
        CheckpointEntry e;
        e.name = f[1];
        e.dtype = f[2];
        if (!f[3].empty())
          for (const auto& d : detail::split(f[3], ',')) e.shape.push_back(std::stoull(d));
        e.offset = std::stoull(f[4]);
        e.count = std::stoull(f[5]);
        entries_[e.name] = e;
        order_.push_back(e.name);
      } else {
        throw CheckpointError("malformed manifest line: " + line);
      }
    }
    std::ifstream blob(dir / "model.bin", std::ios::binary);
    if (!blob) throw CheckpointError("cannot open " + (dir / "model.bin").string());
    blob_.assign(std::istreambuf_iterator<char>(blob), {});
  }

  const std::map<std::string, std::string>& meta() const { return meta_; }
  const std::string& meta(const std::string& key) const {
    auto it = meta_.find(key);
    if (it == meta_.end()) throw CheckpointError("checkpoint lacks metadata '" + key + "'");
    return it->second;
  }
  const std::vector<std::string>& names() const { return order_; }
  const CheckpointEntry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
    return it->second;
  }

  template <typename T>
  std::vector<T> load(const std::string& name, const Shape& expected) const {
    const auto& e = entry(name);
    if (e.dtype != dtype_name<T>())
      throw CheckpointError("tensor '" + name + "' stored as " + e.dtype + ", requested " + dtype_name<T>());
    if (e.shape != expected)
      throw CheckpointError("tensor '" + name + "' has shape " + shape_str(e.shape) + ", expected " +
                            shape_str(expected));
    if (e.offset + e.count * sizeof(T) > blob_.size())
      throw CheckpointError("tensor '" + name + "' runs past the end of the blob");
    std::vector<T> out(e.count);
    for (std::size_t i = 0; i < e.count; ++i)
      out[i] = detail::read_le<T>(blob_.data() + e.offset + i * sizeof(T));
    return out;
  }

 private:
  std::map<std::string, std::string> meta_;
  std::map<std::string, CheckpointEntry> entries_;
  std::vector<std::string> order_;
  std::vector<unsigned char> blob_;
};

}  // namespace acgan
