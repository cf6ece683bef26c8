#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dsb/benchmark/field.hpp"
#include "dsb/core/rng.hpp"
#include "dsb/refproc/reference.hpp"

namespace dsb {

enum class SourceKind { uniform, gaussian };

std::string to_string(SourceKind kind);
SourceKind parse_source_kind(const std::string& name);

/// Product source distribution p0. The Gaussian variant is a continuous density
/// evaluated at the integer categories and renormalized, per dimension.
struct SourceSpec {
  SourceKind kind = SourceKind::uniform;
  std::vector<double> mean;    // per dimension, gaussian only
  std::vector<double> stddev;  // per dimension, gaussian only

  static SourceSpec uniform() { return {}; }
  static SourceSpec gaussian(std::size_t D, double mean, double stddev);

  void validate(std::size_t D) const;
  std::vector<double> log_marginal(std::size_t d, std::size_t S) const;
  void sample(RngStream& rng, std::size_t S, std::span<std::uint16_t> x) const;

  friend bool operator==(const SourceSpec&, const SourceSpec&) = default;
};

// Log-probabilities of exp(-(s - mean)^2 / (2 sd^2)) over s = 0..S-1, normalized.
std::vector<double> discretized_gaussian_log(std::size_t S, double mean, double stddev);

struct PairConfig {
  std::size_t D = 2;
  std::size_t S = 50;
  ReferenceKind kind = ReferenceKind::gaussian;
  double gamma = 0.02;
  std::size_t steps = 128;
  std::size_t K = 4;
  std::uint64_t seed = 0;
  SourceSpec source;
  // Component means are drawn uniformly from [lo, hi] * (S - 1).
  double mean_lo = 0.15;
  double mean_hi = 0.85;
  // Core standard deviation as a fraction of S - 1.
  double core_sigma = 1.0 / 12.0;

  void validate() const;
  friend bool operator==(const PairConfig&, const PairConfig&) = default;
};

/// Benchmark pair: source p0, reference process and scalar potential. Together
/// they fix the target p1 and the ground-truth SB coupling.
class BenchmarkPair {
 public:
  BenchmarkPair(PairConfig config, CPScalarField field);
  BenchmarkPair(const BenchmarkPair& other);
  BenchmarkPair& operator=(const BenchmarkPair&) = delete;

  const PairConfig& config() const { return config_; }
  const CPScalarField& field() const { return field_; }
  const ReferenceProcess& process() const { return proc_; }
  const ConditionalSampler& sampler() const { return *sampler_; }
  std::size_t D() const { return config_.D; }
  std::size_t S() const { return config_.S; }

  void sample_x0(RngStream& rng, std::span<std::uint16_t> x0) const {
    config_.source.sample(rng, config_.S, x0);
  }
  void sample_x1_given_x0(RngStream& rng, std::span<const std::uint16_t> x0,
                          std::span<std::uint16_t> x1) const {
    sampler_->sample(rng, x0, x1);
  }

 private:
  PairConfig config_;
  CPScalarField field_;
  ReferenceProcess proc_;
  std::unique_ptr<ConditionalSampler> sampler_;
};

BenchmarkPair generate_pair(const PairConfig& config);

/// Row-major block of categorical points.
struct SampleBatch {
  std::size_t D = 0;
  std::size_t S = 0;
  std::vector<std::uint16_t> data;

  SampleBatch() = default;
  SampleBatch(std::size_t D_, std::size_t S_, std::size_t rows = 0)
      : D(D_), S(S_), data(rows * D_, 0) {}

  std::size_t rows() const { return D == 0 ? 0 : data.size() / D; }
  std::span<std::uint16_t> row(std::size_t i) { return {data.data() + i * D, D}; }
  std::span<const std::uint16_t> row(std::size_t i) const { return {data.data() + i * D, D}; }
  void append(std::span<const std::uint16_t> x) { data.insert(data.end(), x.begin(), x.end()); }

  friend bool operator==(const SampleBatch&, const SampleBatch&) = default;
};

struct TestSet {
  SampleBatch x0;
  SampleBatch x1;
  std::uint64_t seed = 0;

  std::size_t rows() const { return x0.rows(); }
  friend bool operator==(const TestSet&, const TestSet&) = default;
};

// Rows are drawn on per-row streams, so the result does not depend on `jobs`.
TestSet generate_test_set(const BenchmarkPair& pair, std::size_t count, std::uint64_t seed,
                          std::size_t jobs = 1);

/// Unpaired training stream: x0 batches from p0 and x1 batches from p1, drawn
/// independently. Never touches a stored test set.
class PairDataSource {
 public:
  PairDataSource(const BenchmarkPair& pair, std::uint64_t seed);

  SampleBatch x0_batch(std::size_t n);
  SampleBatch x1_batch(std::size_t n);

 private:
  const BenchmarkPair& pair_;
  RngStream rng0_;
  RngStream rng1_;
};

// Histogram helpers used by the generator summary.
std::vector<double> marginal_histogram(const SampleBatch& batch, std::size_t d);
// Local maxima of a lightly smoothed histogram that reach `min_fraction` of the
// global maximum. count_modes_2d works on the joint histogram of dims (i, j).
std::size_t count_modes_1d(std::span<const double> hist, double min_fraction = 0.2);
std::size_t count_modes_2d(const SampleBatch& batch, std::size_t i, std::size_t j,
                           double min_fraction = 0.2);
double entropy(std::span<const double> probs);

// Stream-id tags. Every consumer of a seed derives its own stream from one of
// these so that independent tasks never share draws.
namespace stream_tag {
inline constexpr std::uint64_t pair_construction = 0x1001;
inline constexpr std::uint64_t test_set = 0x1002;
inline constexpr std::uint64_t train_x0 = 0x2001;
inline constexpr std::uint64_t train_x1 = 0x2002;
inline constexpr std::uint64_t model_init = 0x2003;
inline constexpr std::uint64_t train_bridge = 0x2004;
inline constexpr std::uint64_t eval = 0x3001;
inline constexpr std::uint64_t eval_test_set = 0x3002;
}  // namespace stream_tag

}  // namespace dsb
