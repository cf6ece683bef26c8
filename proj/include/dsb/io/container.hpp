#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsb/core/tensor.hpp"

namespace dsb::io {

using Json = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

inline constexpr int kSchemaVersion = 1;

// File magics (8 bytes each).
inline constexpr const char* kPairMagic = "DSBPAIR1";
inline constexpr const char* kSetMagic = "DSBSET01";
inline constexpr const char* kModelMagic = "DSBMODEL";

/// Self-describing file: 8-byte magic, little-endian u64 header length, JSON
/// header, then a binary payload whose length and SHA-256 are recorded in the
/// header.
struct Container {
  Json header;
  Bytes payload;
};

void write_container(const std::string& path, const char* magic, Json header, const Bytes& payload);
// Validates magic, schema version, role (when non-empty), payload length and checksum.
Container read_container(const std::string& path, const char* magic, const std::string& role);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
// Git blob object id: SHA-1 over "blob <size>\0" followed by the bytes.
std::string git_blob_hash(std::span<const std::uint8_t> bytes);
std::string file_content_hash(const std::string& path);

// Little-endian scalar/array packing.
void put_f64(Bytes& out, std::span<const double> values);
void put_u16(Bytes& out, std::span<const std::uint16_t> values);

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Appends the tensors to `payload` and returns their name/shape index for the header.
Json pack_tensors(const std::vector<NamedTensor>& tensors, Bytes& payload);
std::vector<NamedTensor> unpack_tensors(const Json& index, const Bytes& payload);
const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

class Reader {
 public:
  explicit Reader(const Bytes& bytes) : bytes_(bytes) {}
  std::vector<double> f64(std::size_t count);
  std::vector<std::uint16_t> u16(std::size_t count);
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const;
  const Bytes& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace dsb::io
