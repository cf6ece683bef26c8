#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "dsb/benchmark/pair.hpp"
#include "dsb/core/tensor.hpp"

namespace dsb::oracle {

// Brute-force helpers. Joint states x in S^D are indexed in row-major order
// (dimension 0 most significant).
std::size_t state_count(std::size_t S, std::size_t D);
std::vector<std::uint16_t> decode_state(std::size_t index, std::size_t S, std::size_t D);
std::size_t encode_state(std::span<const std::uint16_t> x, std::size_t S);

struct DenseCoupling {
  Tensor coupling;  // [|X0|, |X1|]
  double row_residual = 0.0;
  double col_residual = 0.0;
  std::size_t iterations = 0;
};

struct SinkhornOptions {
  std::size_t max_iters = 200000;
  double tol = 1e-10;
};

/// Log-domain Sinkhorn for the entropic OT problem with kernel exp(-cost).
///
/// States with zero mass in p0 or p1 are removed before scaling and get zero rows
/// or columns in the returned coupling. Residuals are the L1 errors of the row
/// and column sums. Throws NotConvergedError when max_iters is reached.
DenseCoupling sinkhorn(std::span<const double> p0, std::span<const double> p1, const Tensor& cost,
                       const SinkhornOptions& options = {});

// Joint reference kernel Qbar_{N+1}(x1 | x0) over S^D, and its cost -log.
Tensor joint_reference_kernel(const ReferenceProcess& proc, std::size_t D);
Tensor reference_cost(const ReferenceProcess& proc, std::size_t D);

std::vector<double> dense_source(const SourceSpec& source, std::size_t S, std::size_t D);

struct EnumeratedConditional {
  std::vector<double> probs;  // over S^D
  double log_normalizer = 0.0;
};

// v(x1) q_ref(x1|x0) over every x1, normalized by explicit summation.
EnumeratedConditional enumerate_conditional(const CPScalarField& field, const ReferenceProcess& proc,
                                            std::span<const std::uint16_t> x0);

// p0(x0) q*(x1|x0) built from the enumerated conditionals, and its x1-marginal.
Tensor construction_coupling(const BenchmarkPair& pair);
std::vector<double> target_marginal(const Tensor& coupling);

double total_variation(std::span<const double> a, std::span<const double> b);
// KL(coupling || p0 x Qbar) with the reference joint built from p0.
double kl_to_reference(const Tensor& coupling, std::span<const double> p0, const Tensor& kernel);

// Joint SB transition at step n: row x_{n-1} holds q(x_n | x_{n-1}) over S^D.
using JointTransition = std::function<std::vector<double>(std::size_t n, std::size_t prev)>;

// SB transitions in the form q_ref(x_n|x_{n-1}) phi_n(x_n) / phi_{n-1}(x_{n-1}),
// where phi_n(x) = sum_{x1} Qbar_{N+1-n}(x, x1) v(x1) is enumerated directly.
JointTransition enumerated_sb_transition(const CPScalarField& field, const ReferenceProcess& proc);

// Pushes a point mass at x0 through all N+1 transitions by exact matrix chaining.
std::vector<double> enumerate_path_marginal(const ReferenceProcess& proc, std::size_t D,
                                            const JointTransition& transition,
                                            std::span<const std::uint16_t> x0);

}  // namespace dsb::oracle
