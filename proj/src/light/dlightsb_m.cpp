#include <cmath>

#include "dsb/core/error.hpp"
#include "dsb/light/light.hpp"

namespace dsb {

namespace {

// Rows log Qbar_{m_b}[x_b^d, :] stacked into a [B, S] constant.
Tensor gathered_power_rows(const ReferenceProcess& proc, const SampleBatch& x, std::size_t d,
                           const std::vector<std::size_t>& m) {
  const std::size_t S = proc.states();
  Tensor out(Shape{x.rows(), S});
  for (std::size_t b = 0; b < x.rows(); ++b) {
    const auto row = proc.log_power(m[b]).row(x.row(b)[d]);
    std::copy(row.begin(), row.end(), out.row(b).begin());
  }
  return out;
}

// Per-row log u_{k}^d[x_b^d] with u = Qbar_{m_b} r, for every dimension: [B, K] each.
std::vector<ad::Var> log_u_at(ad::Tape& tape, const LightVars& vars, const ReferenceProcess& proc,
                              const SampleBatch& x, const std::vector<std::size_t>& m) {
  std::vector<ad::Var> out;
  for (std::size_t d = 0; d < vars.log_cores.size(); ++d) {
    const ad::Var rows = tape.constant(gathered_power_rows(proc, x, d, m));
    out.push_back(ad::log_matmul(rows, vars.log_cores[d], true));
  }
  return out;
}

ad::Var sum_all(const std::vector<ad::Var>& terms) {
  ad::Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
  return acc;
}

}  // namespace

ad::Var dlightsb_m_loss(ad::Tape& tape, const LightVars& vars, const LightMatchingContext& ctx,
                        const BridgeBatch& batch, LossKind loss) {
  const ReferenceProcess& proc = ctx.process();
  const std::size_t B = batch.n.size();
  const std::size_t D = vars.log_cores.size();
  const std::size_t S = proc.states();
  const std::size_t steps = proc.steps();
  if (B == 0) throw ValidationError("dlightsb-m loss: empty batch");
  // Remaining steps after the transition (m) and before it (m + 1).
  std::vector<std::size_t> m_after(B), m_before(B);
  for (std::size_t b = 0; b < B; ++b) {
    m_after[b] = steps - batch.n[b];
    m_before[b] = m_after[b] + 1;
  }
  const std::vector<ad::Var> u_prev = log_u_at(tape, vars, proc, batch.x_prev, m_before);
  const ad::Var w_prev = ad::add(sum_all(u_prev), vars.log_beta);  // [B, K]

  if (loss == LossKind::kl) {
    const std::vector<ad::Var> u_next = log_u_at(tape, vars, proc, batch.x_next, m_after);
    const ad::Var log_phi_next = ad::logsumexp(ad::add(sum_all(u_next), vars.log_beta), 1);
    const ad::Var log_phi_prev = ad::logsumexp(w_prev, 1);
    // Constant part: log t(x_next) - sum_d log Q[x_prev^d, x_next^d].
    const Tensor& lq = proc.log_transition();
    double offset = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      double ref = 0.0;
      for (std::size_t d = 0; d < D; ++d) ref += lq(batch.x_prev.row(b)[d], batch.x_next.row(b)[d]);
      offset += batch.log_target_at_next[b] - ref;
    }
    offset /= static_cast<double>(B);
    const ad::Var value = ad::sub(ad::mean(log_phi_prev), ad::mean(log_phi_next));
    return ad::add(value, tape.constant(Tensor::scalar(offset)));
  }

  // MSE on per-dimension marginal transition probabilities.
  ad::Var total;
  for (std::size_t d = 0; d < D; ++d) {
    const ad::Var z = ad::sub(w_prev, u_prev[d]);                        // [B, K]
    const ad::Var y = ad::log_matmul(z, vars.log_cores[d], false);       // [B, S]
    const ad::Var l = ad::log_matvec_rows(ctx.power_stack(), y, m_after);  // [B, S]
    Tensor q_rows(Shape{B, S});
    Tensor target(Shape{B, S});
    for (std::size_t b = 0; b < B; ++b) {
      const auto row = proc.log_transition().row(batch.x_prev.row(b)[d]);
      std::copy(row.begin(), row.end(), q_rows.row(b).begin());
      for (std::size_t s = 0; s < S; ++s) target(b, s) = batch.target[(b * D + d) * S + s];
    }
    const ad::Var logits = ad::add(l, tape.constant(std::move(q_rows)));
    const ad::Var prob = ad::exp(ad::log_softmax(logits));
    const ad::Var diff = ad::sub(prob, tape.constant(std::move(target)));
    const ad::Var sq = ad::sum(ad::mul(diff, diff));
    total = d == 0 ? sq : ad::add(total, sq);
  }
  return ad::scale(total, 1.0 / static_cast<double>(B));
}

LightResult train_dlightsb_m(const BenchmarkPair& pair, const LightConfig& config,
                             const ProgressFn& progress) {
  if (config.batch == 0 || config.K == 0) throw ValidationError("dlightsb-m: batch and K must be positive");
  const ReferenceProcess proc = pair.process().coarsened(config.solver_steps);
  const LightMatchingContext ctx(proc);
  PairDataSource data(pair, config.seed);
  RngStream bridge_rng(config.seed, stream_tag::train_bridge);
  const SampleBatch init = data.x1_batch(config.K);
  std::vector<Tensor> params = field_to_params(init_from_samples(init, config.K, config.init_sigma));
  AdamW opt(params, AdamWConfig{.lr = config.lr});
  LightResult result;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    // Independent coupling: x0 and x1 batches are drawn separately.
    const SampleBatch x0 = data.x0_batch(config.batch);
    const SampleBatch x1 = data.x1_batch(config.batch);
    const BridgeBatch bridge = make_bridge_batch(bridge_rng, proc, x0, x1);
    ad::Tape tape;
    const LightVars vars = bind_params(tape, params);
    double value = 0.0;
    try {
      const ad::Var loss = dlightsb_m_loss(tape, vars, ctx, bridge, config.loss);
      value = loss.value().item();
      tape.backward(loss);
      std::vector<Tensor> grads;
      grads.push_back(tape.grad(vars.log_beta));
      for (const auto& c : vars.log_cores) grads.push_back(tape.grad(c));
      opt.step(params, grads);
    } catch (const NumericalError& e) {
      throw DivergenceError("dlightsb-m diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (step % config.log_every == 0 || step == config.steps) {
      result.log.push_back({step, value});
      if (progress) progress(step, value);
    }
  }
  result.field = params_to_field(params);
  result.updates = config.steps;
  return result;
}

}  // namespace dsb
