#include <cmath>

#include "dsb/core/error.hpp"
#include "dsb/light/light.hpp"

namespace dsb {

namespace {

std::vector<std::size_t> column(const SampleBatch& batch, std::size_t d) {
  std::vector<std::size_t> out(batch.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = batch.row(i)[d];
  return out;
}

}  // namespace

ad::Var dlightsb_loss(ad::Tape& tape, const LightVars& vars, const ReferenceProcess& proc,
                      const SampleBatch& x0, const SampleBatch& x1) {
  if (x0.rows() == 0 || x1.rows() == 0) throw ValidationError("dlightsb loss: empty batch");
  const std::size_t D = vars.log_cores.size();
  if (x0.D != D || x1.D != D) throw ValidationError("dlightsb loss: batch dimension mismatch");
  const ad::Var log_q = tape.constant(proc.log_power(proc.steps()));

  // log c(x0) = lse_k(log beta_k + sum_d log <r_k^d, Qbar[x0^d, .]>)
  ad::Var acc_c;
  ad::Var acc_v;
  for (std::size_t d = 0; d < D; ++d) {
    const ad::Var inner = ad::log_matmul(log_q, vars.log_cores[d], true);  // [S, K]
    const ad::Var gc = ad::gather_rows(inner, column(x0, d));
    const ad::Var gv = ad::gather_cols(vars.log_cores[d], column(x1, d));
    acc_c = d == 0 ? gc : ad::add(acc_c, gc);
    acc_v = d == 0 ? gv : ad::add(acc_v, gv);
  }
  const ad::Var log_c = ad::logsumexp(ad::add(acc_c, vars.log_beta), 1);
  const ad::Var log_v = ad::logsumexp(ad::add(acc_v, vars.log_beta), 1);
  return ad::sub(ad::mean(log_c), ad::mean(log_v));
}

LightResult train_dlightsb(const BenchmarkPair& pair, const LightConfig& config,
                           const ProgressFn& progress) {
  if (config.batch == 0 || config.K == 0) throw ValidationError("dlightsb: batch and K must be positive");
  PairDataSource data(pair, config.seed);
  const SampleBatch init = data.x1_batch(config.K);
  std::vector<Tensor> params = field_to_params(init_from_samples(init, config.K, config.init_sigma));
  AdamW opt(params, AdamWConfig{.lr = config.lr});
  LightResult result;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const SampleBatch x0 = data.x0_batch(config.batch);
    const SampleBatch x1 = data.x1_batch(config.batch);
    ad::Tape tape;
    const LightVars vars = bind_params(tape, params);
    double value = 0.0;
    std::vector<Tensor> grads;
    try {
      const ad::Var loss = dlightsb_loss(tape, vars, pair.process(), x0, x1);
      value = loss.value().item();
      tape.backward(loss);
      grads.push_back(tape.grad(vars.log_beta));
      for (const auto& c : vars.log_cores) grads.push_back(tape.grad(c));
      opt.step(params, grads);
    } catch (const NumericalError& e) {
      throw DivergenceError("dlightsb diverged at step " + std::to_string(step) + ": " + e.what());
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
