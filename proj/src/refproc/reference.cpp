#include "dsb/refproc/reference.hpp"

#include <cmath>

#include "dsb/core/error.hpp"
#include "dsb/core/logmath.hpp"

namespace dsb {

namespace {

void check_states(std::size_t S) {
  if (S < 2) throw ValidationError("reference: need at least 2 categories");
  if (S > 65535) throw ValidationError("reference: at most 65535 categories are supported");
}

void check_uniform_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ValidationError("uniform reference: gamma must lie in [0, 1], got " + std::to_string(gamma));
  }
}

void check_gaussian_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("gaussian reference: gamma must be positive, got " + std::to_string(gamma));
  }
}

// Log entries of the one-step Gaussian kernel. Off-diagonal logs are exact even
// where exp() would underflow; the diagonal is log1p(-off-diagonal mass).
Tensor log_gaussian_kernel(std::size_t S, double gamma, bool* underflow) {
  const double span = static_cast<double>(S - 1);
  const double width = gamma * span;
  auto log_w = [&](double delta) { return -4.0 * delta * delta / (width * width); };
  std::vector<double> terms;
  for (long d = -static_cast<long>(S - 1); d <= static_cast<long>(S - 1); ++d) {
    terms.push_back(log_w(static_cast<double>(d)));
  }
  const double log_z = logsumexp(terms);
  Tensor out(Shape{S, S});
  bool under = false;
  for (std::size_t i = 0; i < S; ++i) {
    double off_mass = 0.0;
    for (std::size_t j = 0; j < S; ++j) {
      if (i == j) continue;
      const double delta = static_cast<double>(j) - static_cast<double>(i);
      const double lv = log_w(delta) - log_z;
      out(i, j) = lv;
      const double v = std::exp(lv);
      if (v == 0.0) under = true;
      off_mass += v;
    }
    out(i, i) = std::log1p(-off_mass);
  }
  if (underflow) *underflow = under;
  return out;
}

Tensor log_uniform_power(std::size_t S, double gamma, std::uint64_t n) {
  Tensor out(Shape{S, S});
  const double Sd = static_cast<double>(S);
  const double base = 1.0 - gamma * Sd / (Sd - 1.0);
  double a;
  double one_minus_a;
  if (n == 0) {
    a = 1.0;
    one_minus_a = 0.0;
  } else if (base > 0.0) {
    const double la = static_cast<double>(n) * std::log(base);
    a = std::exp(la);
    one_minus_a = -std::expm1(la);
  } else {
    a = std::pow(base, static_cast<double>(n));
    one_minus_a = 1.0 - a;
  }
  const double off = one_minus_a / Sd;
  const double log_off = off > 0.0 ? std::log(off) : kNegInf;
  const double diag = a + off;
  const double log_diag = diag > 0.0 ? std::log(diag) : kNegInf;
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < S; ++j) out(i, j) = i == j ? log_diag : log_off;
  return out;
}

Tensor log_identity(std::size_t S) {
  Tensor out(Shape{S, S}, kNegInf);
  for (std::size_t i = 0; i < S; ++i) out(i, i) = 0.0;
  return out;
}

Tensor log_matrix_power(const Tensor& log_q, std::uint64_t n) {
  Tensor result = log_identity(log_q.rows());
  Tensor base = log_q;
  bool first = true;
  while (n > 0) {
    if (n & 1u) {
      result = first ? base : log_matmul(result, base, false);
      first = false;
    }
    n >>= 1u;
    if (n > 0) base = log_matmul(base, base, false);
  }
  return result;
}

Tensor exp_of(const Tensor& log_t) {
  Tensor out = log_t;
  for (double& v : out.data()) v = std::exp(v);
  return out;
}

}  // namespace

std::string to_string(ReferenceKind kind) {
  return kind == ReferenceKind::uniform ? "uniform" : "gaussian";
}

ReferenceKind parse_reference_kind(const std::string& name) {
  if (name == "uniform") return ReferenceKind::uniform;
  if (name == "gaussian") return ReferenceKind::gaussian;
  throw ValidationError("unknown reference kind '" + name + "' (expected uniform or gaussian)");
}

Tensor build_uniform(std::size_t S, double gamma) {
  check_states(S);
  check_uniform_gamma(gamma);
  Tensor q(Shape{S, S}, gamma / static_cast<double>(S - 1));
  for (std::size_t i = 0; i < S; ++i) q(i, i) = 1.0 - gamma;
  return q;
}

Tensor build_gaussian(std::size_t S, double gamma) {
  check_states(S);
  check_gaussian_gamma(gamma);
  return exp_of(log_gaussian_kernel(S, gamma, nullptr));
}

Tensor matrix_power(const Tensor& q, std::uint64_t n) {
  if (q.rank() != 2 || q.rows() != q.cols()) throw ValidationError("matrix_power: need a square matrix");
  const std::size_t S = q.rows();
  RowMatrix result = RowMatrix::Identity(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
  RowMatrix base = q.matrix();
  bool first = true;
  while (n > 0) {
    if (n & 1u) {
      if (first) result = base;
      else result = result * base;
      first = false;
    }
    n >>= 1u;
    if (n > 0) base = base * base;
  }
  Tensor out(Shape{S, S});
  out.matrix() = result;
  return out;
}

Tensor uniform_power_closed_form(std::size_t S, double gamma, std::uint64_t n) {
  check_states(S);
  check_uniform_gamma(gamma);
  return exp_of(log_uniform_power(S, gamma, n));
}

ReferenceProcess::ReferenceProcess(ReferenceKind kind, double gamma, std::size_t S, std::size_t steps,
                                   std::size_t stride)
    : kind_(kind), gamma_(gamma), S_(S), steps_(steps), stride_(stride) {
  check_states(S);
  if (steps == 0) throw ValidationError("reference: need at least one step");
  if (stride == 0) throw ValidationError("reference: stride must be positive");
  log_powers_.reserve(steps + 1);
  if (kind == ReferenceKind::uniform) {
    check_uniform_gamma(gamma);
    for (std::size_t n = 0; n <= steps; ++n) {
      log_powers_.push_back(log_uniform_power(S, gamma, static_cast<std::uint64_t>(n) * stride));
    }
  } else {
    check_gaussian_gamma(gamma);
    const Tensor base = log_gaussian_kernel(S, gamma, &underflowed_);
    const Tensor step = log_matrix_power(base, stride);
    log_powers_.push_back(log_identity(S));
    log_powers_.push_back(step);
    for (std::size_t n = 2; n <= steps; ++n) {
      log_powers_.push_back(log_matmul(log_powers_.back(), step, false));
    }
  }
  powers_.reserve(steps + 1);
  for (const auto& lp : log_powers_) powers_.push_back(exp_of(lp));
}

const Tensor& ReferenceProcess::power(std::size_t n) const {
  if (n > steps_) throw ValidationError("reference: power index beyond the step count");
  return powers_[n];
}

const Tensor& ReferenceProcess::log_power(std::size_t n) const {
  if (n > steps_) throw ValidationError("reference: power index beyond the step count");
  return log_powers_[n];
}

ReferenceProcess ReferenceProcess::coarsened(std::size_t new_steps) const {
  if (new_steps == 0 || steps_ % new_steps != 0) {
    throw ValidationError("reference: " + std::to_string(new_steps) + " steps do not divide " +
                          std::to_string(steps_));
  }
  ReferenceProcess out(kind_, gamma_, S_, new_steps, stride_ * (steps_ / new_steps));
  return transposed_ ? out.transposed() : out;
}

ReferenceProcess ReferenceProcess::transposed() const {
  ReferenceProcess out = *this;
  out.transposed_ = !transposed_;
  for (auto* list : {&out.powers_, &out.log_powers_}) {
    for (Tensor& t : *list) {
      for (std::size_t i = 0; i < S_; ++i)
        for (std::size_t j = i + 1; j < S_; ++j) std::swap(t(i, j), t(j, i));
    }
  }
  return out;
}

std::vector<double> ReferenceProcess::bridge_step_log_distribution(std::size_t n, std::size_t a,
                                                                   std::size_t x1) const {
  if (n < 1 || n > steps_) throw ValidationError("bridge step index out of range");
  if (a >= S_ || x1 >= S_) throw ValidationError("bridge step: category out of range");
  const Tensor& lq = log_powers_[1];
  const Tensor& rest = log_powers_[steps_ - n];
  std::vector<double> out(S_);
  for (std::size_t s = 0; s < S_; ++s) out[s] = lq(a, s) + rest(s, x1);
  if (logsumexp(out) == kNegInf) {
    throw DegenerateError("bridge step: endpoint " + std::to_string(x1) + " unreachable from " +
                          std::to_string(a));
  }
  log_normalize(out);
  return out;
}

std::vector<double> ReferenceProcess::bridge_step_distribution(std::size_t n, std::size_t a,
                                                               std::size_t x1) const {
  auto out = bridge_step_log_distribution(n, a, x1);
  for (double& v : out) v = std::exp(v);
  return out;
}

std::vector<double> ReferenceProcess::bridge_log_marginal(std::size_t t, std::size_t x0,
                                                          std::size_t x1) const {
  if (t > steps_) throw ValidationError("bridge marginal: time index out of range");
  if (x0 >= S_ || x1 >= S_) throw ValidationError("bridge marginal: category out of range");
  const Tensor& head = log_powers_[t];
  const Tensor& tail = log_powers_[steps_ - t];
  std::vector<double> out(S_);
  for (std::size_t s = 0; s < S_; ++s) out[s] = head(x0, s) + tail(s, x1);
  if (logsumexp(out) == kNegInf) {
    throw DegenerateError("bridge marginal: endpoints " + std::to_string(x0) + " -> " +
                          std::to_string(x1) + " have zero reference probability");
  }
  log_normalize(out);
  return out;
}

std::vector<std::uint16_t> ReferenceProcess::sample_bridge(RngStream& rng,
                                                           std::span<const std::uint16_t> x0,
                                                           std::span<const std::uint16_t> x1) const {
  if (x0.size() != x1.size()) throw ValidationError("sample_bridge: endpoint dimensions differ");
  const std::size_t D = x0.size();
  const std::size_t interior = steps_ - 1;
  std::vector<std::uint16_t> path(interior * D);
  for (std::size_t d = 0; d < D; ++d) {
    std::size_t cur = x0[d];
    for (std::size_t n = 1; n <= interior; ++n) {
      const auto lp = bridge_step_log_distribution(n, cur, x1[d]);
      cur = rng.categorical_log(lp);
      path[(n - 1) * D + d] = static_cast<std::uint16_t>(cur);
    }
  }
  return path;
}

}  // namespace dsb
