#pragma once

#include <string>

#include "dsb/benchmark/pair.hpp"
#include "dsb/io/container.hpp"

namespace dsb::io {

Json to_json(const PairConfig& config);
PairConfig pair_config_from_json(const Json& j);

// Writes a .dsbpair file; `extra` is merged into the header (e.g. a config echo).
void save_pair(const BenchmarkPair& pair, const std::string& path, const Json& extra = Json::object());
BenchmarkPair load_pair(const std::string& path);

struct LoadedTestSet {
  TestSet set;
  std::string pair_hash;
  Json header;
};

// The header records the content hash of the pair file the rows came from and
// tags the file with the "test_set" role so training code can refuse it.
void save_test_set(const TestSet& set, const std::string& path, const std::string& pair_hash,
                   const Json& extra = Json::object());
LoadedTestSet load_test_set(const std::string& path);

}  // namespace dsb::io
