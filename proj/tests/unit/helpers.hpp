#pragma once

#include <cmath>
#include <cstdint>

#include "dsb/benchmark/pair.hpp"
#include "dsb/oracle/oracle.hpp"

namespace testing {

inline dsb::CPScalarField random_field(std::size_t K, std::size_t D, std::size_t S, std::uint64_t seed,
                                       double spread = 1.0) {
  dsb::RngStream rng(seed, 99);
  dsb::CPScalarField f(K, D, S);
  for (auto& b : f.log_beta) b = std::log(0.2 + rng.uniform());
  for (auto& c : f.log_cores) c = spread * rng.normal();
  return f;
}

inline dsb::PairConfig small_config(std::size_t D, std::size_t S, dsb::ReferenceKind kind, double gamma,
                                    std::size_t steps, std::size_t K, std::uint64_t seed = 1) {
  dsb::PairConfig c;
  c.D = D;
  c.S = S;
  c.kind = kind;
  c.gamma = gamma;
  c.steps = steps;
  c.K = K;
  c.seed = seed;
  return c;
}

inline dsb::BenchmarkPair random_pair(std::size_t D, std::size_t S, dsb::ReferenceKind kind, double gamma,
                                      std::size_t steps, std::size_t K, std::uint64_t seed) {
  return dsb::BenchmarkPair(small_config(D, S, kind, gamma, steps, K, seed), random_field(K, D, S, seed));
}

}  // namespace testing
