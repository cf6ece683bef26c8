#include "dsb/core/logmath.hpp"

#include <algorithm>
#include <cmath>

#include "dsb/core/error.hpp"

namespace dsb {

double logsumexp(std::span<const double> values) {
  if (values.empty()) throw ValidationError("logsumexp of an empty vector");
  const double top = *std::max_element(values.begin(), values.end());
  if (top == kNegInf) return kNegInf;
  if (std::isinf(top)) return top;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - top);
  return top + std::log(sum);
}

double log_normalize(std::span<double> values) {
  const double norm = logsumexp(values);
  if (norm == kNegInf) throw DegenerateError("cannot normalize: all log-weights are -inf");
  for (double& v : values) v -= norm;
  return norm;
}

std::vector<double> softmax(std::span<const double> log_weights) {
  const double norm = logsumexp(log_weights);
  if (norm == kNegInf) throw DegenerateError("cannot normalize: all log-weights are -inf");
  std::vector<double> out(log_weights.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_weights[i] - norm);
  return out;
}

std::vector<double> log_of(std::span<const double> values) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = values[i] > 0.0 ? std::log(values[i]) : kNegInf;
  return out;
}

namespace {

// Entries below this stabilized magnitude lose too many bits; recompute them exactly.
constexpr double kUnderflowGuard = 1e-280;

}  // namespace

Tensor log_matmul(const Tensor& a, const Tensor& b, bool b_transposed) {
  if (a.rank() != 2 || b.rank() != 2) throw ValidationError("log_matmul needs rank-2 operands");
  const std::size_t m = a.rows();
  const std::size_t inner = a.cols();
  const std::size_t n = b_transposed ? b.rows() : b.cols();
  if ((b_transposed ? b.cols() : b.rows()) != inner) {
    throw ValidationError("log_matmul inner extents differ: " + shape_string(a.shape()) + " x " +
                          shape_string(b.shape()));
  }
  auto bval = [&](std::size_t s, std::size_t j) { return b_transposed ? b(j, s) : b(s, j); };

  std::vector<double> a_max(m, kNegInf), b_max(n, kNegInf);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t s = 0; s < inner; ++s) a_max[i] = std::max(a_max[i], a(i, s));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t s = 0; s < inner; ++s) b_max[j] = std::max(b_max[j], bval(s, j));

  RowMatrix ea(m, inner), eb(inner, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t s = 0; s < inner; ++s)
      ea(i, s) = a_max[i] == kNegInf ? 0.0 : std::exp(a(i, s) - a_max[i]);
  for (std::size_t s = 0; s < inner; ++s)
    for (std::size_t j = 0; j < n; ++j)
      eb(s, j) = b_max[j] == kNegInf ? 0.0 : std::exp(bval(s, j) - b_max[j]);
  RowMatrix prod = ea * eb;

  Tensor out(Shape{m, n});
  std::vector<double> terms(inner);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (a_max[i] == kNegInf || b_max[j] == kNegInf) {
        out(i, j) = kNegInf;
      } else if (prod(i, j) > kUnderflowGuard) {
        out(i, j) = a_max[i] + b_max[j] + std::log(prod(i, j));
      } else {
        for (std::size_t s = 0; s < inner; ++s) terms[s] = a(i, s) + bval(s, j);
        out(i, j) = logsumexp(terms);
      }
    }
  }
  return out;
}

}  // namespace dsb
