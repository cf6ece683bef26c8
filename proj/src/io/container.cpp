#include "dsb/io/container.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "dsb/core/error.hpp"

namespace dsb::io {

static_assert(std::endian::native == std::endian::little,
              "file formats are written with native little-endian stores");

namespace {

std::string hex(const unsigned char* digest, unsigned int len) {
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

std::string evp_digest(const EVP_MD* md, std::span<const std::uint8_t> prefix,
                       std::span<const std::uint8_t> bytes) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw Error("digest: out of memory");
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, md, nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, prefix.data(), prefix.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("digest computation failed");
  return hex(digest, len);
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  return evp_digest(EVP_sha256(), {}, bytes);
}

std::string git_blob_hash(std::span<const std::uint8_t> bytes) {
  const std::string prefix = "blob " + std::to_string(bytes.size()) + '\0';
  const std::span<const std::uint8_t> p(reinterpret_cast<const std::uint8_t*>(prefix.data()),
                                        prefix.size());
  return evp_digest(EVP_sha1(), p, bytes);
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path + "' failed");
}

std::string file_content_hash(const std::string& path) { return git_blob_hash(read_file(path)); }

void put_f64(Bytes& out, std::span<const double> values) {
  const std::size_t at = out.size();
  out.resize(at + values.size() * sizeof(double));
  std::memcpy(out.data() + at, values.data(), values.size() * sizeof(double));
}

void put_u16(Bytes& out, std::span<const std::uint16_t> values) {
  const std::size_t at = out.size();
  out.resize(at + values.size() * sizeof(std::uint16_t));
  std::memcpy(out.data() + at, values.data(), values.size() * sizeof(std::uint16_t));
}

void Reader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) throw CorruptFileError("payload shorter than its header declares");
}

std::vector<double> Reader::f64(std::size_t count) {
  need(count * sizeof(double));
  std::vector<double> out(count);
  std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(double));
  pos_ += count * sizeof(double);
  return out;
}

std::vector<std::uint16_t> Reader::u16(std::size_t count) {
  need(count * sizeof(std::uint16_t));
  std::vector<std::uint16_t> out(count);
  std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(std::uint16_t));
  pos_ += count * sizeof(std::uint16_t);
  return out;
}

void write_container(const std::string& path, const char* magic, Json header, const Bytes& payload) {
  header["schema_version"] = kSchemaVersion;
  header["payload_bytes"] = payload.size();
  header["payload_sha256"] = sha256_hex(payload);
  const std::string text = header.dump();
  Bytes out;
  out.insert(out.end(), magic, magic + 8);
  const std::uint64_t len = text.size();
  const auto* lp = reinterpret_cast<const std::uint8_t*>(&len);
  out.insert(out.end(), lp, lp + sizeof(len));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  write_file(path, out);
}

Container read_container(const std::string& path, const char* magic, const std::string& role) {
  const Bytes bytes = read_file(path);
  if (bytes.size() < 16) throw CorruptFileError("'" + path + "' is too short to be a container");
  if (std::memcmp(bytes.data(), magic, 8) != 0) {
    throw CorruptFileError("'" + path + "' does not start with the expected magic " + magic);
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  if (len > bytes.size() - 16) throw CorruptFileError("'" + path + "': header is truncated");
  Container c;
  try {
    c.header = Json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
  } catch (const Json::exception& e) {
    throw CorruptFileError("'" + path + "': header is not valid JSON (" + e.what() + ")");
  }
  if (!c.header.is_object() || !c.header.contains("schema_version")) {
    throw CorruptFileError("'" + path + "': header lacks schema_version");
  }
  const int version = c.header["schema_version"].get<int>();
  if (version != kSchemaVersion) {
    throw VersionMismatchError("'" + path + "' has schema version " + std::to_string(version) +
                               ", expected " + std::to_string(kSchemaVersion));
  }
  if (!role.empty() && c.header.value("role", std::string()) != role) {
    throw ValidationError("'" + path + "' has role '" + c.header.value("role", std::string()) +
                          "', expected '" + role + "'");
  }
  const std::size_t start = 16 + static_cast<std::size_t>(len);
  const std::size_t declared = c.header.value("payload_bytes", std::size_t{0});
  if (bytes.size() - start != declared) {
    throw CorruptFileError("'" + path + "': payload is " + std::to_string(bytes.size() - start) +
                           " bytes, header declares " + std::to_string(declared));
  }
  c.payload.assign(bytes.begin() + static_cast<long>(start), bytes.end());
  if (sha256_hex(c.payload) != c.header.value("payload_sha256", std::string())) {
    throw CorruptFileError("'" + path + "': payload checksum mismatch");
  }
  return c;
}

}  // namespace dsb::io

namespace dsb::io {

Json pack_tensors(const std::vector<NamedTensor>& tensors, Bytes& payload) {
  Json index = Json::array();
  for (const auto& t : tensors) {
    index.push_back({{"name", t.name}, {"shape", t.value.shape()}});
    put_f64(payload, t.value.data());
  }
  return index;
}

std::vector<NamedTensor> unpack_tensors(const Json& index, const Bytes& payload) {
  std::vector<NamedTensor> out;
  Reader r(payload);
  try {
    for (const auto& entry : index) {
      Shape shape = entry.at("shape").get<Shape>();
      const std::size_t n = shape_size(shape);
      out.push_back({entry.at("name").get<std::string>(), Tensor(shape, r.f64(n))});
    }
  } catch (const Json::exception& e) {
    throw CorruptFileError(std::string("tensor index is malformed: ") + e.what());
  }
  if (!r.done()) throw CorruptFileError("payload has trailing bytes after the tensors");
  for (const auto& t : out) {
    for (double v : t.value.data()) {
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        throw CorruptFileError("tensor '" + t.name + "' contains NaN or +inf");
      }
    }
  }
  return out;
}

const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw CorruptFileError("tensor '" + name + "' is missing");
}

}  // namespace dsb::io
