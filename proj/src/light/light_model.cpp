#include <cmath>

#include "dsb/core/error.hpp"
#include "dsb/core/logmath.hpp"
#include "dsb/light/light.hpp"

namespace dsb {

std::string to_string(LossKind kind) { return kind == LossKind::kl ? "kl" : "mse"; }

LossKind parse_loss_kind(const std::string& name) {
  if (name == "kl" || name == "KL") return LossKind::kl;
  if (name == "mse" || name == "MSE") return LossKind::mse;
  throw ValidationError("unknown loss '" + name + "' (expected kl or mse)");
}

std::vector<Tensor> field_to_params(const CPScalarField& field) {
  std::vector<Tensor> params;
  params.push_back(Tensor(Shape{field.K}, field.log_beta));
  for (std::size_t d = 0; d < field.D; ++d) {
    Tensor core(Shape{field.K, field.S});
    for (std::size_t k = 0; k < field.K; ++k)
      for (std::size_t s = 0; s < field.S; ++s) core(k, s) = field.log_core(k, d, s);
    params.push_back(std::move(core));
  }
  return params;
}

CPScalarField params_to_field(const std::vector<Tensor>& params) {
  if (params.size() < 2) throw ValidationError("light parameters: need log_beta and at least one core");
  const std::size_t K = params[0].size();
  const std::size_t D = params.size() - 1;
  const std::size_t S = params[1].cols();
  CPScalarField field(K, D, S);
  field.log_beta.assign(params[0].data().begin(), params[0].data().end());
  for (std::size_t d = 0; d < D; ++d) {
    if (params[d + 1].shape() != Shape{K, S}) throw ValidationError("light parameters: core shape mismatch");
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t s = 0; s < S; ++s) field.log_core(k, d, s) = params[d + 1](k, s);
  }
  return field;
}

LightVars bind_params(ad::Tape& tape, const std::vector<Tensor>& params, bool trainable) {
  LightVars vars;
  auto make = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
  vars.log_beta = make(params.at(0));
  for (std::size_t i = 1; i < params.size(); ++i) vars.log_cores.push_back(make(params[i]));
  return vars;
}

CPScalarField init_from_samples(const SampleBatch& x1, std::size_t K, double sigma_frac) {
  if (x1.rows() < K) throw ValidationError("init: need at least K samples");
  CPScalarField field(K, x1.D, x1.S);
  const double sigma = sigma_frac * static_cast<double>(x1.S - 1);
  std::fill(field.log_beta.begin(), field.log_beta.end(), -std::log(static_cast<double>(K)));
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t d = 0; d < x1.D; ++d) {
      const auto core = discretized_gaussian_log(x1.S, x1.row(k)[d], sigma);
      for (std::size_t s = 0; s < x1.S; ++s) field.log_core(k, d, s) = core[s];
    }
  }
  return field;
}

UTable::UTable(const CPScalarField& field, const ReferenceProcess& proc)
    : steps_(proc.steps()), K_(field.K), D_(field.D), S_(field.S) {
  if (proc.states() != field.S) throw ValidationError("u-table: field and process disagree on S");
  data_.assign((steps_ + 1) * K_ * D_ * S_, 0.0);
  // Backward recursion u_{n-1} = Q u_n from the anchor u_{N+1} = r.
  Tensor cur(Shape{K_ * D_, S_}, field.log_cores);
  const Tensor& lq = proc.log_transition();
  for (std::size_t n = steps_ + 1; n-- > 0;) {
    std::copy(cur.data().begin(), cur.data().end(), data_.begin() + n * K_ * D_ * S_);
    if (n > 0) cur = log_matmul(cur, lq, true);  // cur[kd, s] = lse_s' (cur[kd, s'] + lq[s, s'])
  }
}

std::vector<double> sb_component_log_weights(const CPScalarField& field, const UTable& u,
                                             std::size_t n, std::span<const std::uint16_t> x_prev) {
  if (n < 1 || n > u.steps()) throw ValidationError("SB transition: step out of range");
  std::vector<double> w(field.K);
  for (std::size_t k = 0; k < field.K; ++k) {
    double t = field.log_beta[k];
    for (std::size_t d = 0; d < field.D; ++d) t += u.log_u(n - 1, k, d, x_prev[d]);
    w[k] = t;
  }
  if (logsumexp(w) == kNegInf) throw DegenerateError("SB transition: all component weights vanish");
  log_normalize(w);
  return w;
}

std::vector<double> sb_transition_log_marginal(const CPScalarField& field, const UTable& u,
                                               const ReferenceProcess& proc, std::size_t n,
                                               std::span<const std::uint16_t> x_prev, std::size_t d) {
  const auto w = sb_component_log_weights(field, u, n, x_prev);
  const std::size_t S = field.S;
  const auto lq = proc.log_transition().row(x_prev[d]);
  std::vector<double> out(S);
  std::vector<double> terms(field.K);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t k = 0; k < field.K; ++k) {
      // p(k | x_prev) q_k^d(s | x_prev^d); the per-component factor is Q u_n / u_{n-1}.
      terms[k] = w[k] + u.log_u(n, k, d, s) - u.log_u(n - 1, k, d, x_prev[d]);
    }
    out[s] = lq[s] + logsumexp(terms);
  }
  log_normalize(out);
  return out;
}

double sb_transition_log_prob(const CPScalarField& field, const UTable& u, const ReferenceProcess& proc,
                              std::size_t n, std::span<const std::uint16_t> x_prev,
                              std::span<const std::uint16_t> x_next) {
  if (n < 1 || n > u.steps()) throw ValidationError("SB transition: step out of range");
  const Tensor& lq = proc.log_transition();
  double ref = 0.0;
  for (std::size_t d = 0; d < field.D; ++d) ref += lq(x_prev[d], x_next[d]);
  std::vector<double> next(field.K), prev(field.K);
  for (std::size_t k = 0; k < field.K; ++k) {
    double a = field.log_beta[k];
    double b = field.log_beta[k];
    for (std::size_t d = 0; d < field.D; ++d) {
      a += u.log_u(n, k, d, x_next[d]);
      b += u.log_u(n - 1, k, d, x_prev[d]);
    }
    next[k] = a;
    prev[k] = b;
  }
  return ref + logsumexp(next) - logsumexp(prev);
}

void sb_transition_sample(RngStream& rng, const CPScalarField& field, const UTable& u,
                          const ReferenceProcess& proc, std::size_t n,
                          std::span<const std::uint16_t> x_prev, std::span<std::uint16_t> x_next) {
  const auto w = sb_component_log_weights(field, u, n, x_prev);
  const std::size_t k = rng.categorical_log(w);
  const Tensor& lq = proc.log_transition();
  std::vector<double> logits(field.S);
  for (std::size_t d = 0; d < field.D; ++d) {
    const auto row = lq.row(x_prev[d]);
    const auto lu = u.log_u_row(n, k, d);
    for (std::size_t s = 0; s < field.S; ++s) logits[s] = row[s] + lu[s];
    x_next[d] = static_cast<std::uint16_t>(rng.categorical_log(logits));
  }
}

void sb_chain_sample(RngStream& rng, const CPScalarField& field, const UTable& u,
                     const ReferenceProcess& proc, std::span<const std::uint16_t> x0,
                     std::span<std::uint16_t> x1) {
  std::vector<std::uint16_t> cur(x0.begin(), x0.end());
  std::vector<std::uint16_t> nxt(x0.size());
  for (std::size_t n = 1; n <= proc.steps(); ++n) {
    sb_transition_sample(rng, field, u, proc, n, cur, nxt);
    cur.swap(nxt);
  }
  std::copy(cur.begin(), cur.end(), x1.begin());
}

BridgeBatch make_bridge_batch_at(RngStream& rng, const ReferenceProcess& proc, const SampleBatch& x0,
                                 const SampleBatch& x1, const std::vector<std::size_t>& n) {
  const std::size_t B = x0.rows();
  if (x1.rows() != B || n.size() != B || x0.D != x1.D) {
    throw ValidationError("bridge batch: x0, x1 and n must have matching rows");
  }
  const std::size_t D = x0.D;
  const std::size_t S = x0.S;
  BridgeBatch out;
  out.n = n;
  out.x0 = x0;
  out.x1 = x1;
  out.x_prev = SampleBatch(D, S, B);
  out.x_next = SampleBatch(D, S, B);
  out.target.assign(B * D * S, 0.0);
  out.log_target_at_next.assign(B, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t nb = n[b];
    if (nb < 1 || nb > proc.steps()) throw ValidationError("bridge batch: step out of range");
    for (std::size_t d = 0; d < D; ++d) {
      const std::size_t a = x0.row(b)[d];
      const std::size_t e = x1.row(b)[d];
      const std::size_t prev = nb == 1 ? a : rng.categorical_log(proc.bridge_log_marginal(nb - 1, a, e));
      out.x_prev.row(b)[d] = static_cast<std::uint16_t>(prev);
      const auto post = proc.bridge_step_log_distribution(nb, prev, e);
      const std::size_t next = rng.categorical_log(post);
      out.x_next.row(b)[d] = static_cast<std::uint16_t>(next);
      out.log_target_at_next[b] += post[next];
      for (std::size_t s = 0; s < S; ++s) out.target[(b * D + d) * S + s] = std::exp(post[s]);
    }
  }
  return out;
}

BridgeBatch make_bridge_batch(RngStream& rng, const ReferenceProcess& proc, const SampleBatch& x0,
                              const SampleBatch& x1) {
  std::vector<std::size_t> n(x0.rows());
  for (auto& v : n) v = 1 + rng.below(proc.steps());
  return make_bridge_batch_at(rng, proc, x0, x1, n);
}

LightMatchingContext::LightMatchingContext(const ReferenceProcess& proc) : proc_(proc) {
  const std::size_t S = proc.states();
  Tensor all(Shape{(proc.steps() + 1) * S, S});
  for (std::size_t m = 0; m <= proc.steps(); ++m) {
    const Tensor& lp = proc.log_power(m);
    std::copy(lp.data().begin(), lp.data().end(), all.data().begin() + m * S * S);
  }
  stack_ = ad::MatrixStack::from_log(std::move(all), proc.steps() + 1);
}

}  // namespace dsb
