#include "cytoarch/binary_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "cytoarch/error.hpp"
#include "cytoarch/fileio.hpp"

namespace cytoarch {

static_assert(std::endian::native == std::endian::little, "binary artifacts assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'Y', 'T', 'O', 'A', 'R', 'C', 'H'};

template <class T>
std::vector<std::uint8_t> raw(std::span<const T> values) {
  std::vector<std::uint8_t> out(values.size_bytes());
  if (!out.empty()) std::memcpy(out.data(), values.data(), out.size());
  return out;
}

template <class T>
std::vector<T> cooked(const std::vector<std::uint8_t>& bytes, std::size_t count) {
  std::vector<T> out(count);
  if (count) std::memcpy(out.data(), bytes.data(), count * sizeof(T));
  return out;
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f64" || dtype == "u64") return 8;
  if (dtype == "i32") return 4;
  throw IoError("unknown block dtype: " + dtype);
}

template <class T>
void append(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

}  // namespace

void BinaryArchive::put_f64(const std::string& name, std::span<const double> values) {
  blocks_.push_back({name, "f64", values.size(), raw(values)});
}
void BinaryArchive::put_i32(const std::string& name, std::span<const std::int32_t> values) {
  blocks_.push_back({name, "i32", values.size(), raw(values)});
}
void BinaryArchive::put_u64(const std::string& name, std::span<const std::uint64_t> values) {
  blocks_.push_back({name, "u64", values.size(), raw(values)});
}

const BinaryArchive::Block& BinaryArchive::find(const std::string& name, const std::string& dtype) const {
  auto it = std::find_if(blocks_.begin(), blocks_.end(), [&](const Block& b) { return b.name == name; });
  if (it == blocks_.end()) throw IoError("missing block '" + name + "'");
  if (it->dtype != dtype) throw IoError("block '" + name + "' has dtype " + it->dtype + ", expected " + dtype);
  return *it;
}

bool BinaryArchive::has(const std::string& name) const {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const Block& b) { return b.name == name; });
}

std::vector<double> BinaryArchive::get_f64(const std::string& name) const {
  const auto& b = find(name, "f64");
  return cooked<double>(b.bytes, b.count);
}
std::vector<std::int32_t> BinaryArchive::get_i32(const std::string& name) const {
  const auto& b = find(name, "i32");
  return cooked<std::int32_t>(b.bytes, b.count);
}
std::vector<std::uint64_t> BinaryArchive::get_u64(const std::string& name) const {
  const auto& b = find(name, "u64");
  return cooked<std::uint64_t>(b.bytes, b.count);
}

std::vector<std::uint8_t> BinaryArchive::serialize() const {
  nlohmann::json h = header;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& b : blocks_) list.push_back({{"name", b.name}, {"dtype", b.dtype}, {"count", b.count}});
  h["blocks"] = list;
  const std::string text = h.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  append<std::uint32_t>(out, kContainerVersion);
  append<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& b : blocks_) out.insert(out.end(), b.bytes.begin(), b.bytes.end());
  return out;
}

BinaryArchive BinaryArchive::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw IoError("not a cytoarch binary artifact");
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&header_len, bytes.data() + 12, 8);
  if (version != kContainerVersion) throw IoError("unsupported container version " + std::to_string(version));
  if (bytes.size() < 20 + header_len) throw IoError("truncated header");
  BinaryArchive ar;
  try {
    ar.header = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad archive header: ") + e.what());
  }
  std::size_t pos = 20 + header_len;
  for (const auto& entry : ar.header.at("blocks")) {
    Block b;
    b.name = entry.at("name").get<std::string>();
    b.dtype = entry.at("dtype").get<std::string>();
    b.count = entry.at("count").get<std::size_t>();
    const std::size_t n = b.count * dtype_size(b.dtype);
    if (pos + n > bytes.size()) throw IoError("truncated block '" + b.name + "'");
    b.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    ar.blocks_.push_back(std::move(b));
  }
  ar.header.erase("blocks");
  return ar;
}

void BinaryArchive::save(const std::filesystem::path& path) const { write_atomic(path, serialize()); }

BinaryArchive BinaryArchive::load(const std::filesystem::path& path) { return deserialize(read_bytes(path)); }

}  // namespace cytoarch
