#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "dsb/core/error.hpp"
#include "dsb/core/logmath.hpp"
#include "dsb/io/pair_io.hpp"
#include "helpers.hpp"

using namespace dsb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dsb_unit_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("hashes match well-known digests") {
  const std::string abc = "abc";
  const std::span<const std::uint8_t> b(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size());
  CHECK(io::sha256_hex(b) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const std::string hello = "hello\n";
  const std::span<const std::uint8_t> h(reinterpret_cast<const std::uint8_t*>(hello.data()), hello.size());
  CHECK(io::git_blob_hash(h) == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("pair round trip is lossless") {
  PairConfig cfg = testing::small_config(3, 7, ReferenceKind::gaussian, 0.05, 8, 3, 4);
  cfg.source = SourceSpec::gaussian(3, 3.0, 1.5);
  const BenchmarkPair pair = generate_pair(cfg);
  const auto path = scratch("a.dsbpair").string();
  io::save_pair(pair, path);
  const BenchmarkPair back = io::load_pair(path);
  CHECK(back.config() == pair.config());
  CHECK(back.field() == pair.field());
  const std::vector<std::uint16_t> x0{1, 2, 3}, x1{6, 0, 2};
  CHECK(back.sampler().log_prob(x0, x1) == pair.sampler().log_prob(x0, x1));

  const auto path2 = scratch("b.dsbpair").string();
  io::save_pair(generate_pair(cfg), path2);
  CHECK(io::file_content_hash(path) == io::file_content_hash(path2));
}

TEST_CASE("truncated and tampered files are rejected") {
  const BenchmarkPair pair = generate_pair(testing::small_config(2, 5, ReferenceKind::uniform, 0.1, 4, 2));
  const auto path = scratch("c.dsbpair").string();
  io::save_pair(pair, path);
  auto bytes = io::read_file(path);

  auto cut = bytes;
  cut.resize(cut.size() - 9);
  io::write_file(path, cut);
  CHECK_THROWS_AS(io::load_pair(path), CorruptFileError);

  auto flipped = bytes;
  flipped.back() ^= 0x40;
  io::write_file(path, flipped);
  CHECK_THROWS_AS(io::load_pair(path), CorruptFileError);

  io::write_file(path, std::vector<std::uint8_t>{'n', 'o', 'p', 'e'});
  CHECK_THROWS_AS(io::load_pair(path), CorruptFileError);
  CHECK_THROWS_AS(io::load_pair(scratch("missing.dsbpair").string()), Error);
}

TEST_CASE("schema version and role are enforced") {
  const auto path = scratch("d.bin").string();
  io::write_container(path, io::kPairMagic, io::Json{{"role", "pair"}}, {});
  auto c = io::read_container(path, io::kPairMagic, "pair");
  CHECK(c.header["schema_version"] == io::kSchemaVersion);
  CHECK_THROWS_AS(io::read_container(path, io::kPairMagic, "test_set"), ValidationError);
  CHECK_THROWS_AS(io::read_container(path, io::kSetMagic, ""), CorruptFileError);

  // Same-length edit of the header: schema version 1 -> 9.
  auto bytes = io::read_file(path);
  std::string text(bytes.begin(), bytes.end());
  const auto at = text.find("\"schema_version\":1");
  REQUIRE(at != std::string::npos);
  bytes[at + std::string("\"schema_version\":").size()] = '9';
  io::write_file(path, bytes);
  CHECK_THROWS_AS(io::read_container(path, io::kPairMagic, "pair"), VersionMismatchError);
}

TEST_CASE("test set round trip, including the empty set") {
  const BenchmarkPair pair = generate_pair(testing::small_config(2, 6, ReferenceKind::uniform, 0.1, 4, 2));
  for (std::size_t count : {std::size_t{0}, std::size_t{257}}) {
    const TestSet set = generate_test_set(pair, count, 3, 2);
    const auto path = scratch("e.dsbset").string();
    io::save_test_set(set, path, "abc123");
    const auto back = io::load_test_set(path);
    CHECK(back.set == set);
    CHECK(back.pair_hash == "abc123");
    CHECK(back.set.rows() == count);
  }
  // A test set is not a pair.
  CHECK_THROWS_AS(io::load_pair(scratch("e.dsbset").string()), CorruptFileError);
}

TEST_CASE("tensor packing refuses NaN and keeps -inf") {
  io::Bytes payload;
  const std::vector<io::NamedTensor> ts{{"a", Tensor(Shape{2, 2}, {1.0, -2.0, kNegInf, 4.0})},
                                        {"b", Tensor::vector({0.5})}};
  const io::Json index = io::pack_tensors(ts, payload);
  const auto back = io::unpack_tensors(index, payload);
  CHECK(io::find_tensor(back, "a") == ts[0].value);
  CHECK_THROWS_AS(io::find_tensor(back, "zz"), Error);

  io::Bytes bad;
  const io::Json idx = io::pack_tensors({{"n", Tensor::vector({std::nan("")})}}, bad);
  CHECK_THROWS_AS(io::unpack_tensors(idx, bad), Error);
}
