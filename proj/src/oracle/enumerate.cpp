#include <cmath>
#include <vector>

#include "dsb/core/error.hpp"
#include "dsb/core/logmath.hpp"
#include "dsb/oracle/oracle.hpp"

namespace dsb::oracle {

namespace {

constexpr std::size_t kMaxStates = 1000000;

void check_feasible(std::size_t S, std::size_t D) {
  if (state_count(S, D) > kMaxStates) {
    throw ValidationError("enumeration: S^D exceeds " + std::to_string(kMaxStates) + " states");
  }
}

// sum_d log Qbar_n[x_d, y_d] for joint states indexed by a and b.
double log_joint_kernel(const Tensor& log_q, std::span<const std::uint16_t> x,
                        std::span<const std::uint16_t> y) {
  double t = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) t += log_q(x[d], y[d]);
  return t;
}

std::vector<std::vector<std::uint16_t>> all_states(std::size_t S, std::size_t D) {
  const std::size_t n = state_count(S, D);
  std::vector<std::vector<std::uint16_t>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(decode_state(i, S, D));
  return out;
}

}  // namespace

std::size_t state_count(std::size_t S, std::size_t D) {
  std::size_t n = 1;
  for (std::size_t d = 0; d < D; ++d) {
    if (n > kMaxStates * S) return kMaxStates + 1;
    n *= S;
  }
  return n;
}

std::vector<std::uint16_t> decode_state(std::size_t index, std::size_t S, std::size_t D) {
  std::vector<std::uint16_t> x(D);
  for (std::size_t d = D; d-- > 0;) {
    x[d] = static_cast<std::uint16_t>(index % S);
    index /= S;
  }
  return x;
}

std::size_t encode_state(std::span<const std::uint16_t> x, std::size_t S) {
  std::size_t index = 0;
  for (auto v : x) index = index * S + v;
  return index;
}

Tensor joint_reference_kernel(const ReferenceProcess& proc, std::size_t D) {
  Tensor k = reference_cost(proc, D);
  for (double& v : k.data()) v = std::exp(-v);
  return k;
}

Tensor reference_cost(const ReferenceProcess& proc, std::size_t D) {
  const std::size_t S = proc.states();
  check_feasible(S, D);
  const auto states = all_states(S, D);
  const Tensor& lq = proc.log_power(proc.steps());
  Tensor cost(Shape{states.size(), states.size()});
  for (std::size_t i = 0; i < states.size(); ++i)
    for (std::size_t j = 0; j < states.size(); ++j) cost(i, j) = -log_joint_kernel(lq, states[i], states[j]);
  return cost;
}

std::vector<double> dense_source(const SourceSpec& source, std::size_t S, std::size_t D) {
  check_feasible(S, D);
  std::vector<std::vector<double>> marg;
  for (std::size_t d = 0; d < D; ++d) marg.push_back(source.log_marginal(d, S));
  const auto states = all_states(S, D);
  std::vector<double> p(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    double t = 0.0;
    for (std::size_t d = 0; d < D; ++d) t += marg[d][states[i][d]];
    p[i] = std::exp(t);
  }
  return p;
}

EnumeratedConditional enumerate_conditional(const CPScalarField& field, const ReferenceProcess& proc,
                                            std::span<const std::uint16_t> x0) {
  check_feasible(field.S, field.D);
  const auto states = all_states(field.S, field.D);
  const Tensor& lq = proc.log_power(proc.steps());
  std::vector<double> logw(states.size());
  for (std::size_t j = 0; j < states.size(); ++j) {
    logw[j] = log_v(field, states[j]) + log_joint_kernel(lq, x0, states[j]);
  }
  EnumeratedConditional out;
  out.log_normalizer = logsumexp(logw);
  out.probs.resize(states.size());
  for (std::size_t j = 0; j < states.size(); ++j) out.probs[j] = std::exp(logw[j] - out.log_normalizer);
  return out;
}

Tensor construction_coupling(const BenchmarkPair& pair) {
  const std::size_t S = pair.S();
  const std::size_t D = pair.D();
  const auto p0 = dense_source(pair.config().source, S, D);
  Tensor coupling(Shape{p0.size(), p0.size()}, 0.0);
  for (std::size_t i = 0; i < p0.size(); ++i) {
    if (p0[i] == 0.0) continue;
    const auto cond = enumerate_conditional(pair.field(), pair.process(), decode_state(i, S, D));
    for (std::size_t j = 0; j < p0.size(); ++j) coupling(i, j) = p0[i] * cond.probs[j];
  }
  return coupling;
}

std::vector<double> target_marginal(const Tensor& coupling) {
  std::vector<double> p1(coupling.cols(), 0.0);
  for (std::size_t i = 0; i < coupling.rows(); ++i)
    for (std::size_t j = 0; j < coupling.cols(); ++j) p1[j] += coupling(i, j);
  return p1;
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("total_variation: sizes differ");
  double t = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) t += std::abs(a[i] - b[i]);
  return 0.5 * t;
}

double kl_to_reference(const Tensor& coupling, std::span<const double> p0, const Tensor& kernel) {
  double kl = 0.0;
  for (std::size_t i = 0; i < coupling.rows(); ++i) {
    for (std::size_t j = 0; j < coupling.cols(); ++j) {
      const double pi = coupling(i, j);
      if (pi <= 0.0) continue;
      kl += pi * (std::log(pi) - std::log(p0[i] * kernel(i, j)));
    }
  }
  return kl;
}

JointTransition enumerated_sb_transition(const CPScalarField& field, const ReferenceProcess& proc) {
  check_feasible(field.S, field.D);
  auto states = std::make_shared<std::vector<std::vector<std::uint16_t>>>(all_states(field.S, field.D));
  const std::size_t count = states->size();
  const std::size_t steps = proc.steps();
  std::vector<double> log_v_all(count);
  for (std::size_t j = 0; j < count; ++j) log_v_all[j] = log_v(field, (*states)[j]);
  // log_phi[n][x] = log sum_{x1} Qbar_{N+1-n}(x, x1) v(x1)
  auto log_phi = std::make_shared<std::vector<std::vector<double>>>(steps + 1, std::vector<double>(count));
  std::vector<double> terms(count);
  for (std::size_t n = 0; n <= steps; ++n) {
    const Tensor& lq = proc.log_power(steps - n);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < count; ++j) terms[j] = log_joint_kernel(lq, (*states)[i], (*states)[j]) + log_v_all[j];
      (*log_phi)[n][i] = logsumexp(terms);
    }
  }
  const ReferenceProcess* p = &proc;
  return [states, log_phi, p, count](std::size_t n, std::size_t prev) {
    const Tensor& lq = p->log_transition();
    std::vector<double> out(count);
    const double denom = (*log_phi)[n - 1][prev];
    for (std::size_t j = 0; j < count; ++j) {
      out[j] = std::exp(log_joint_kernel(lq, (*states)[prev], (*states)[j]) + (*log_phi)[n][j] - denom);
    }
    return out;
  };
}

std::vector<double> enumerate_path_marginal(const ReferenceProcess& proc, std::size_t D,
                                            const JointTransition& transition,
                                            std::span<const std::uint16_t> x0) {
  const std::size_t S = proc.states();
  check_feasible(S, D);
  const std::size_t count = state_count(S, D);
  if (count * count * proc.steps() > 100000000) {
    throw ValidationError("enumerate_path_marginal: instance too large to chain exactly");
  }
  std::vector<double> dist(count, 0.0);
  dist[encode_state(x0, S)] = 1.0;
  for (std::size_t n = 1; n <= proc.steps(); ++n) {
    std::vector<double> next(count, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      if (dist[i] == 0.0) continue;
      const auto row = transition(n, i);
      for (std::size_t j = 0; j < count; ++j) next[j] += dist[i] * row[j];
    }
    dist = std::move(next);
  }
  return dist;
}

}  // namespace dsb::oracle
