#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsb/core/rng.hpp"
#include "dsb/core/tensor.hpp"

namespace dsb {

enum class ReferenceKind { uniform, gaussian };

std::string to_string(ReferenceKind kind);
ReferenceKind parse_reference_kind(const std::string& name);

// One-step kernels. Both return an S x S row-stochastic matrix.
Tensor build_uniform(std::size_t S, double gamma);
Tensor build_gaussian(std::size_t S, double gamma);

// Exponentiation by squaring; n = 0 gives the identity.
Tensor matrix_power(const Tensor& q, std::uint64_t n);
// a*I + (1 - a)/S * ones with a = (1 - gamma*S/(S-1))^n.
Tensor uniform_power_closed_form(std::size_t S, double gamma, std::uint64_t n);

/// Time-homogeneous categorical Markov chain with `steps` transitions on the grid
/// t_n = n / steps.
///
/// `stride` > 1 builds the chain whose single step is `stride` steps of the base
/// kernel. Solvers running on a coarse grid use this so that the overall
/// kernel Q^steps is unchanged. All powers 0..steps are precomputed in both
/// linear and log form; the log form is evaluated with log-domain products so
/// entries too small for linear doubles stay finite.
class ReferenceProcess {
 public:
  ReferenceProcess(ReferenceKind kind, double gamma, std::size_t S, std::size_t steps,
                   std::size_t stride = 1);

  ReferenceKind kind() const { return kind_; }
  double gamma() const { return gamma_; }
  std::size_t states() const { return S_; }
  std::size_t steps() const { return steps_; }
  std::size_t stride() const { return stride_; }
  // True when some off-diagonal entry of the base Gaussian kernel underflowed to 0.
  bool underflowed() const { return underflowed_; }

  const Tensor& transition() const { return powers_[1]; }
  const Tensor& log_transition() const { return log_powers_[1]; }
  const Tensor& power(std::size_t n) const;
  const Tensor& log_power(std::size_t n) const;
  double time(std::size_t n) const { return static_cast<double>(n) / static_cast<double>(steps_); }

  // Same overall kernel, fewer steps. `new_steps` must divide steps().
  ReferenceProcess coarsened(std::size_t new_steps) const;
  // Chain with every kernel transposed. Running it from x1 gives the reference
  // bridge in reverse time, which is how backward models reuse the forward code.
  ReferenceProcess transposed() const;
  bool is_transposed() const { return transposed_; }

  // Log-probabilities of the state at step n (1 <= n <= steps-1) in one
  // dimension given the state a at step n-1 and the endpoint x1. Throws
  // DegenerateError when x1 cannot be reached from a.
  std::vector<double> bridge_step_log_distribution(std::size_t n, std::size_t a,
                                                   std::size_t x1) const;
  std::vector<double> bridge_step_distribution(std::size_t n, std::size_t a, std::size_t x1) const;
  // Log-law of the state at step t (0 <= t <= steps) of the bridge from x0 to x1.
  std::vector<double> bridge_log_marginal(std::size_t t, std::size_t x0, std::size_t x1) const;

  // Interior path x_1..x_{steps-1} of the reference bridge, row-major [steps-1][D].
  std::vector<std::uint16_t> sample_bridge(RngStream& rng, std::span<const std::uint16_t> x0,
                                           std::span<const std::uint16_t> x1) const;

 private:
  ReferenceKind kind_;
  double gamma_;
  std::size_t S_;
  std::size_t steps_;
  std::size_t stride_;
  bool underflowed_ = false;
  bool transposed_ = false;
  std::vector<Tensor> powers_;
  std::vector<Tensor> log_powers_;
};

}  // namespace dsb
