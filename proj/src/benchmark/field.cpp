#include "dsb/benchmark/field.hpp"

#include <cmath>

#include "dsb/core/error.hpp"
#include "dsb/core/logmath.hpp"

namespace dsb {

CPScalarField::CPScalarField(std::size_t K_, std::size_t D_, std::size_t S_)
    : K(K_), D(D_), S(S_), log_beta(K_, 0.0), log_cores(K_ * D_ * S_, 0.0) {}

void CPScalarField::validate() const {
  if (K == 0 || D == 0 || S < 2) throw ValidationError("field: K, D must be >= 1 and S >= 2");
  if (log_beta.size() != K) throw ValidationError("field: log_beta has the wrong length");
  if (log_cores.size() != K * D * S) throw ValidationError("field: log_cores has the wrong length");
  for (double v : log_beta) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw ValidationError("field: log_beta contains NaN or +inf");
    }
  }
  for (double v : log_cores) {
    if (!std::isfinite(v)) throw ValidationError("field: log_cores must be finite");
  }
  if (logsumexp(log_beta) == kNegInf) throw ValidationError("field: every component weight is zero");
}

CPScalarField CPScalarField::constant_one(std::size_t D, std::size_t S) {
  return CPScalarField(1, D, S);
}

double log_v(const CPScalarField& field, std::span<const std::uint16_t> x) {
  if (x.size() != field.D) throw ValidationError("log_v: point has the wrong dimension");
  std::vector<double> terms(field.K);
  for (std::size_t k = 0; k < field.K; ++k) {
    double t = field.log_beta[k];
    for (std::size_t d = 0; d < field.D; ++d) t += field.log_core(k, d, x[d]);
    terms[k] = t;
  }
  return logsumexp(terms);
}

ConditionalSampler::ConditionalSampler(const CPScalarField& field, const ReferenceProcess& proc)
    : field_(field), proc_(proc) {
  field.validate();
  if (proc.states() != field.S) throw ValidationError("sampler: field and process disagree on S");
  const std::size_t S = field.S;
  // inner[(k, d), s0] = log_matmul(logQbar, core(k, d)^T)
  Tensor cores(Shape{field.K * field.D, S}, field.log_cores);
  const Tensor table = log_matmul(proc.log_power(proc.steps()), cores, true);  // [S, K*D]
  inner_.resize(field.K * field.D * S);
  for (std::size_t kd = 0; kd < field.K * field.D; ++kd)
    for (std::size_t s0 = 0; s0 < S; ++s0) inner_[kd * S + s0] = table(s0, kd);
}

std::vector<double> ConditionalSampler::component_log_weights(std::span<const std::uint16_t> x0) const {
  if (x0.size() != field_.D) throw ValidationError("sampler: x0 has the wrong dimension");
  std::vector<double> w(field_.K);
  for (std::size_t k = 0; k < field_.K; ++k) {
    double t = field_.log_beta[k];
    for (std::size_t d = 0; d < field_.D; ++d) t += log_inner(k, d, x0[d]);
    w[k] = t;
  }
  return w;
}

double ConditionalSampler::log_normalizer(std::span<const std::uint16_t> x0) const {
  return logsumexp(component_log_weights(x0));
}

double ConditionalSampler::log_prob(std::span<const std::uint16_t> x0,
                                    std::span<const std::uint16_t> x1) const {
  if (x1.size() != field_.D) throw ValidationError("sampler: x1 has the wrong dimension");
  const Tensor& lq = proc_.log_power(proc_.steps());
  double ref = 0.0;
  for (std::size_t d = 0; d < field_.D; ++d) ref += lq(x0[d], x1[d]);
  if (ref == kNegInf) return kNegInf;
  return log_v(field_, x1) + ref - log_normalizer(x0);
}

void ConditionalSampler::sample(RngStream& rng, std::span<const std::uint16_t> x0,
                                std::span<std::uint16_t> x1) const {
  if (x1.size() != field_.D) throw ValidationError("sampler: x1 has the wrong dimension");
  const auto w = component_log_weights(x0);
  const std::size_t k = rng.categorical_log(w);
  const Tensor& lq = proc_.log_power(proc_.steps());
  const std::size_t S = field_.S;
  std::vector<double> logits(S);
  for (std::size_t d = 0; d < field_.D; ++d) {
    const auto core = field_.core(k, d);
    const auto row = lq.row(x0[d]);
    for (std::size_t s = 0; s < S; ++s) logits[s] = core[s] + row[s];
    x1[d] = static_cast<std::uint16_t>(rng.categorical_log(logits));
  }
}

}  // namespace dsb
