#include <cmath>

#include "dsb/core/error.hpp"
#include "dsb/core/logmath.hpp"
#include "dsb/oracle/oracle.hpp"

namespace dsb::oracle {

namespace {

std::vector<std::size_t> support(std::span<const double> p) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || !std::isfinite(p[i])) throw ValidationError("sinkhorn: marginals must be finite and >= 0");
    if (p[i] > 0.0) idx.push_back(i);
  }
  if (idx.empty()) throw ValidationError("sinkhorn: a marginal has no mass");
  return idx;
}

}  // namespace

DenseCoupling sinkhorn(std::span<const double> p0, std::span<const double> p1, const Tensor& cost,
                       const SinkhornOptions& options) {
  if (cost.rank() != 2 || cost.rows() != p0.size() || cost.cols() != p1.size()) {
    throw ValidationError("sinkhorn: cost shape does not match the marginals");
  }
  const auto rows = support(p0);
  const auto cols = support(p1);
  const std::size_t n = rows.size();
  const std::size_t m = cols.size();
  Tensor log_k(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < m; ++j) {
      const double c = cost(rows[i], cols[j]);
      if (std::isnan(c) || c == kNegInf) throw ValidationError("sinkhorn: cost must be > -inf and not NaN");
      log_k(i, j) = -c;
      any = any || std::isfinite(c);
    }
    if (!any) throw DegenerateError("sinkhorn: source state " + std::to_string(rows[i]) + " has an empty kernel row");
  }
  for (std::size_t j = 0; j < m; ++j) {
    bool any = false;
    for (std::size_t i = 0; i < n && !any; ++i) any = log_k(i, j) != kNegInf;
    if (!any) throw DegenerateError("sinkhorn: target state " + std::to_string(cols[j]) + " has an empty kernel column");
  }
  std::vector<double> log_a(n), log_b(m);
  for (std::size_t i = 0; i < n; ++i) log_a[i] = std::log(p0[rows[i]]);
  for (std::size_t j = 0; j < m; ++j) log_b[j] = std::log(p1[cols[j]]);

  std::vector<double> f(n, 0.0), g(m, 0.0), buf(std::max(n, m));
  auto residuals = [&](double& row_res, double& col_res) {
    row_res = 0.0;
    col_res = 0.0;
    std::vector<double> col_sum(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double row_sum = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double v = std::exp(f[i] + log_k(i, j) + g[j]);
        row_sum += v;
        col_sum[j] += v;
      }
      row_res += std::abs(row_sum - p0[rows[i]]);
    }
    for (std::size_t j = 0; j < m; ++j) col_res += std::abs(col_sum[j] - p1[cols[j]]);
  };

  DenseCoupling out;
  double row_res = 1.0;
  double col_res = 1.0;
  std::size_t it = 0;
  for (; it < options.max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = log_k(i, j) + g[j];
      f[i] = log_a[i] - logsumexp(std::span<const double>(buf.data(), m));
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = log_k(i, j) + f[i];
      g[j] = log_b[j] - logsumexp(std::span<const double>(buf.data(), n));
    }
    // Column sums are exact after the g update; checking every few sweeps keeps
    // the residual pass from dominating.
    if (it % 10 == 9 || it + 1 == options.max_iters) {
      residuals(row_res, col_res);
      if (row_res <= options.tol && col_res <= options.tol) {
        ++it;
        break;
      }
    }
  }
  if (row_res > options.tol || col_res > options.tol) {
    throw NotConvergedError("sinkhorn did not converge in " + std::to_string(options.max_iters) +
                                " iterations",
                            row_res, col_res);
  }
  out.coupling = Tensor(Shape{p0.size(), p1.size()}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.coupling(rows[i], cols[j]) = std::exp(f[i] + log_k(i, j) + g[j]);
  out.row_residual = row_res;
  out.col_residual = col_res;
  out.iterations = it;
  return out;
}

}  // namespace dsb::oracle
