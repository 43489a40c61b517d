#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cytoarch {

// Versioned container: 8-byte magic, u32 container version, u64 header
// length, a JSON header, then the raw little-endian blocks in header order.
// The header's "blocks" array lists {name, dtype, count}; dtype is one of
// f64, i32, u64.
class BinaryArchive {
 public:
  static constexpr std::uint32_t kContainerVersion = 1;

  nlohmann::json header = nlohmann::json::object();

  void put_f64(const std::string& name, std::span<const double> values);
  void put_i32(const std::string& name, std::span<const std::int32_t> values);
  void put_u64(const std::string& name, std::span<const std::uint64_t> values);

  std::vector<double> get_f64(const std::string& name) const;
  std::vector<std::int32_t> get_i32(const std::string& name) const;
  std::vector<std::uint64_t> get_u64(const std::string& name) const;
  bool has(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static BinaryArchive deserialize(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static BinaryArchive load(const std::filesystem::path& path);

 private:
  struct Block {
    std::string name;
    std::string dtype;
    std::size_t count = 0;
    std::vector<std::uint8_t> bytes;
  };
  const Block& find(const std::string& name, const std::string& dtype) const;
  std::vector<Block> blocks_;
};

}  // namespace cytoarch
