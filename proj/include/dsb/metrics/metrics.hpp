#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dsb/benchmark/pair.hpp"

namespace dsb {

/// Per-item scores and their arithmetic mean. Items are dimensions for the
/// shape score and unordered dimension pairs (i < j, lexicographic) for trend.
struct ScoreSet {
  std::vector<double> items;
  double mean = 0.0;
};

// 1 - TV between the per-dimension empirical marginals. Each batch is
// normalized by its own row count.
ScoreSet shape_score(const SampleBatch& real, const SampleBatch& pred);
// 1 - TV between the 2-D empirical joints of every dimension pair. Needs D >= 2.
ScoreSet trend_score(const SampleBatch& real, const SampleBatch& pred);
std::vector<std::pair<std::size_t, std::size_t>> dimension_pairs(std::size_t D);

// Draws `count` rows of x1 given one source point.
using X1Sampler =
    std::function<SampleBatch(RngStream& rng, std::span<const std::uint16_t> x0, std::size_t count)>;

struct ConditionalConfig {
  std::size_t n_x0 = 156;
  std::size_t n_per = 1000;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

/// Conditional scores over repeated x0 draws.
///
/// The headline values compare the pooled ground-truth draws against the pooled
/// solver draws (all n_x0 * n_per rows per side). The `*_per_x0` values average
/// the scores computed separately for every x0; at n_per = 1000 they sit on a
/// visibly lower sampling-noise floor.
struct ConditionalScores {
  ScoreSet shape;
  ScoreSet trend;  // empty items and NaN mean when D < 2
  double shape_per_x0 = 0.0;
  double trend_per_x0 = 0.0;
  std::vector<double> shape_by_x0;
  std::vector<double> trend_by_x0;
  std::size_t n_x0 = 0;
  std::size_t n_per = 0;
};

ConditionalScores conditional_scores(const BenchmarkPair& pair, const X1Sampler& sampler,
                                     const ConditionalConfig& config);

// The benchmark's own conditional sampler wrapped as an X1Sampler.
X1Sampler ground_truth_sampler(const BenchmarkPair& pair);

}  // namespace dsb
