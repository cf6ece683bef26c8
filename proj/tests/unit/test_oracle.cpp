#include <doctest.h>

#include <cmath>

#include "dsb/core/error.hpp"
#include "dsb/oracle/oracle.hpp"
#include "helpers.hpp"

using namespace dsb;

TEST_CASE("state encoding round trip") {
  for (std::size_t i = 0; i < 125; ++i) CHECK(oracle::encode_state(oracle::decode_state(i, 5, 3), 5) == i);
  CHECK(oracle::decode_state(7, 5, 2) == std::vector<std::uint16_t>{1, 2});
}

TEST_CASE("sinkhorn: zero cost gives the independent coupling") {
  const std::vector<double> p0{0.2, 0.3, 0.5}, p1{0.6, 0.4};
  const auto res = oracle::sinkhorn(p0, p1, Tensor(Shape{3, 2}, 0.0));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) CHECK(res.coupling(i, j) == doctest::Approx(p0[i] * p1[j]).epsilon(1e-12));
  }
  CHECK(res.row_residual <= 1e-10);
}

TEST_CASE("sinkhorn: point masses give a point-mass coupling") {
  const std::vector<double> p0{0.0, 1.0, 0.0}, p1{0.0, 0.0, 1.0};
  RngStream rng(1, 1);
  Tensor cost(Shape{3, 3});
  for (double& c : cost.data()) c = rng.uniform();
  const auto res = oracle::sinkhorn(p0, p1, cost);
  CHECK(res.coupling(1, 2) == doctest::Approx(1.0));
  double total = 0.0;
  for (double v : res.coupling.data()) total += v;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("sinkhorn reproduces the construction coupling (D=1, S=8)") {
  const BenchmarkPair pair = testing::random_pair(1, 8, ReferenceKind::uniform, 0.1, 4, 3, 12);
  const Tensor construction = oracle::construction_coupling(pair);
  const auto p0 = oracle::dense_source(pair.config().source, 8, 1);
  const auto p1 = oracle::target_marginal(construction);
  const auto res = oracle::sinkhorn(p0, p1, oracle::reference_cost(pair.process(), 1));
  CHECK(oracle::total_variation(res.coupling.data(), construction.data()) <= 1e-6);
}

TEST_CASE("sinkhorn reproduces the construction coupling (D=2, gaussian)") {
  const BenchmarkPair pair = testing::random_pair(2, 4, ReferenceKind::gaussian, 0.4, 3, 2, 5);
  const Tensor construction = oracle::construction_coupling(pair);
  const auto p0 = oracle::dense_source(pair.config().source, 4, 2);
  const auto res =
      oracle::sinkhorn(p0, oracle::target_marginal(construction), oracle::reference_cost(pair.process(), 2));
  CHECK(oracle::total_variation(res.coupling.data(), construction.data()) <= 1e-6);
}

TEST_CASE("enumerated conditional: constant field and closed-form agreement") {
  const ReferenceProcess proc(ReferenceKind::uniform, 0.2, 6, 4);
  const std::vector<std::uint16_t> x0{3, 0, 5};
  const auto one = oracle::enumerate_conditional(CPScalarField::constant_one(3, 6), proc, x0);
  for (std::size_t i = 0; i < one.probs.size(); ++i) {
    const auto x1 = oracle::decode_state(i, 6, 3);
    double q = 1.0;
    for (std::size_t d = 0; d < 3; ++d) q *= proc.power(4)(x0[d], x1[d]);
    CHECK(one.probs[i] == doctest::Approx(q).epsilon(1e-12));
  }

  const CPScalarField f = testing::random_field(3, 3, 6, 31);
  const ConditionalSampler sampler(f, proc);
  const auto e = oracle::enumerate_conditional(f, proc, x0);
  CHECK(std::abs(e.log_normalizer - sampler.log_normalizer(x0)) <= 1e-10);
  double worst = 0.0;
  for (std::size_t i = 0; i < e.probs.size(); ++i) {
    worst = std::max(worst, std::abs(e.probs[i] - std::exp(sampler.log_prob(x0, oracle::decode_state(i, 6, 3)))));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("path chaining reproduces the conditional") {
  for (auto kind : {ReferenceKind::uniform, ReferenceKind::gaussian}) {
    const double gamma = kind == ReferenceKind::uniform ? 0.2 : 0.5;
    const CPScalarField f = testing::random_field(2, 1, 4, 40);
    const ReferenceProcess proc(kind, gamma, 4, 3);
    const ConditionalSampler sampler(f, proc);
    const auto chain = oracle::enumerated_sb_transition(f, proc);
    for (std::uint16_t a = 0; a < 4; ++a) {
      const std::vector<std::uint16_t> x0{a};
      const auto law = oracle::enumerate_path_marginal(proc, 1, chain, x0);
      for (std::uint16_t b = 0; b < 4; ++b) {
        CHECK(std::abs(law[b] - std::exp(sampler.log_prob(x0, std::vector<std::uint16_t>{b}))) <= 1e-8);
      }
    }
  }
}

TEST_CASE("path chaining edge cases") {
  const CPScalarField f = testing::random_field(2, 2, 3, 41);
  const ReferenceProcess single(ReferenceKind::uniform, 0.3, 3, 1);
  const ConditionalSampler sampler(f, single);
  const std::vector<std::uint16_t> x0{2, 1};
  const auto law = oracle::enumerate_path_marginal(single, 2, oracle::enumerated_sb_transition(f, single), x0);
  const auto direct = oracle::enumerate_conditional(f, single, x0);
  for (std::size_t i = 0; i < 9; ++i) CHECK(law[i] == doctest::Approx(direct.probs[i]).epsilon(1e-13));

  const ReferenceProcess proc(ReferenceKind::gaussian, 0.5, 3, 3);
  const auto flat = oracle::enumerate_path_marginal(
      proc, 2, oracle::enumerated_sb_transition(CPScalarField::constant_one(2, 3), proc), x0);
  for (std::size_t i = 0; i < 9; ++i) {
    const auto x1 = oracle::decode_state(i, 3, 2);
    CHECK(flat[i] == doctest::Approx(proc.power(3)(2, x1[0]) * proc.power(3)(1, x1[1])).epsilon(1e-12));
  }
}

TEST_CASE("enumeration refuses state spaces beyond the limit") {
  const ReferenceProcess proc(ReferenceKind::uniform, 0.1, 50, 2);
  const std::vector<std::uint16_t> x0(4, 0);
  CHECK_THROWS_AS(oracle::enumerate_conditional(CPScalarField::constant_one(4, 50), proc, x0), ValidationError);
}
