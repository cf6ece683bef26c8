#pragma once

#include <limits>
#include <span>
#include <vector>

#include "dsb/core/tensor.hpp"

namespace dsb {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum(exp(values))), computed as max + log(sum(exp(values - max))).
///
/// Throws ValidationError on empty input. If every value is -inf the result is
/// -inf, which callers treat as the degenerate (zero-mass) flag.
double logsumexp(std::span<const double> values);

// In-place log-softmax: values become log-probabilities. Returns the normalizer.
double log_normalize(std::span<double> values);

// Converts log-weights to probabilities normalized to one. Throws DegenerateError
// if every weight is -inf.
std::vector<double> softmax(std::span<const double> log_weights);

// Elementwise log with log(0) = -inf.
std::vector<double> log_of(std::span<const double> values);

/// Log-domain matrix product: out(i, j) = logsumexp_s(a(i, s) + b(s, j)).
///
/// With `b_transposed` the second operand is laid out as b(j, s). Evaluated as a
/// row/column-stabilized linear-domain GEMM; entries whose stabilized sum
/// underflows are recomputed exactly term by term.
Tensor log_matmul(const Tensor& a, const Tensor& b, bool b_transposed);

}  // namespace dsb
