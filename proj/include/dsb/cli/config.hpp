#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dsb/benchmark/pair.hpp"
#include "dsb/io/container.hpp"
#include "dsb/light/light.hpp"
#include "dsb/matching/matching.hpp"
#include "dsb/metrics/metrics.hpp"

namespace dsb::cli {

enum class Method { dlightsb, dlightsb_m, csbm, alpha_csbm };
std::string to_string(Method m);
Method parse_method(const std::string& name);

/// Fully resolved run configuration.
///
/// Read from a sectioned INI file; every key has a default, so an empty file
/// (apart from schema_version) is a valid D=2 gaussian gamma=0.02 run.
struct RunConfig {
  std::string output_dir;  // empty: $DSB_OUTPUT_DIR, then "."
  std::size_t jobs = 0;    // 0: all hardware threads

  PairConfig pair;
  std::size_t test_count = 20000;
  std::uint64_t test_seed = 1;

  Method method = Method::dlightsb;
  LossKind loss = LossKind::kl;
  LightConfig light;
  CsbmConfig csbm;
  AlphaCsbmConfig alpha;

  ConditionalConfig metrics;

  std::size_t solver_steps() const;
  std::string resolved_output_dir() const;
};

// Parses INI text. `overrides` are "section.key=value" strings applied on top.
// Unknown sections or keys, a missing or different schema_version and
// out-of-range values raise ValidationError / VersionMismatchError.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
// No file: defaults plus overrides.
RunConfig default_config(const std::vector<std::string>& overrides = {});

io::Json to_json(const RunConfig& config);
// INI text that parses back to the same configuration.
std::string to_ini(const RunConfig& config);

}  // namespace dsb::cli
