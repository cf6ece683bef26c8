#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dsb/core/rng.hpp"
#include "dsb/refproc/reference.hpp"

namespace dsb {

/// Scalar potential v(x) = sum_k beta_k prod_d r_k^d[x^d], stored as logs.
///
/// log_cores is laid out [K][D][S].
struct CPScalarField {
  std::size_t K = 0;
  std::size_t D = 0;
  std::size_t S = 0;
  std::vector<double> log_beta;
  std::vector<double> log_cores;

  CPScalarField() = default;
  CPScalarField(std::size_t K, std::size_t D, std::size_t S);

  double& log_core(std::size_t k, std::size_t d, std::size_t s) {
    return log_cores[(k * D + d) * S + s];
  }
  double log_core(std::size_t k, std::size_t d, std::size_t s) const {
    return log_cores[(k * D + d) * S + s];
  }
  std::span<const double> core(std::size_t k, std::size_t d) const {
    return {log_cores.data() + (k * D + d) * S, S};
  }

  // Throws ValidationError when sizes disagree or an entry is NaN/+inf or every
  // weight is -inf.
  void validate() const;
  // v == 1: K=1, beta=1, every core equal to 1.
  static CPScalarField constant_one(std::size_t D, std::size_t S);

  friend bool operator==(const CPScalarField&, const CPScalarField&) = default;
};

double log_v(const CPScalarField& field, std::span<const std::uint16_t> x);

/// Closed-form conditional q*(x1|x0) = v(x1) q_ref(x1|x0) / c(x0) of a CP field.
///
/// Precomputes log <r_k^d, Qbar[s0, .]> for every (k, d, s0) where Qbar is the
/// full-horizon reference kernel. Holds references to the field and process,
/// which must outlive it.
class ConditionalSampler {
 public:
  ConditionalSampler(const CPScalarField& field, const ReferenceProcess& proc);

  const CPScalarField& field() const { return field_; }
  const ReferenceProcess& process() const { return proc_; }

  // log <r_k^d, Qbar[s0, .]>
  double log_inner(std::size_t k, std::size_t d, std::size_t s0) const {
    return inner_[(k * field_.D + d) * field_.S + s0];
  }

  double log_normalizer(std::span<const std::uint16_t> x0) const;
  double log_prob(std::span<const std::uint16_t> x0, std::span<const std::uint16_t> x1) const;
  // Log-weights of the mixture components given x0, normalized.
  std::vector<double> component_log_weights(std::span<const std::uint16_t> x0) const;
  void sample(RngStream& rng, std::span<const std::uint16_t> x0, std::span<std::uint16_t> x1) const;

 private:
  const CPScalarField& field_;
  const ReferenceProcess& proc_;
  std::vector<double> inner_;
};

}  // namespace dsb
