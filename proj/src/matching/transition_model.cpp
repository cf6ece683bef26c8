#include <cmath>

#include "dsb/core/error.hpp"
#include "dsb/core/logmath.hpp"
#include "dsb/matching/matching.hpp"
#include "dsb/oracle/oracle.hpp"

namespace dsb {

std::string to_string(Direction dir) { return dir == Direction::forward ? "forward" : "backward"; }

Direction parse_direction(const std::string& name) {
  if (name == "forward") return Direction::forward;
  if (name == "backward") return Direction::backward;
  throw ValidationError("unknown direction '" + name + "'");
}

std::string to_string(Architecture arch) { return arch == Architecture::mlp ? "mlp" : "tabular"; }

namespace {

Tensor uniform_init(Shape shape, double bound, RngStream& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

TransitionModel::TransitionModel(ModelShape shape, Direction direction, std::uint64_t seed,
                                 double ema_decay)
    : shape_(shape), direction_(direction), ema_({}, ema_decay) {
  if (shape.D == 0 || shape.S < 2 || shape.steps == 0) throw ValidationError("model: bad shape");
  RngStream rng = RngStream(seed, stream_tag::model_init).split(direction == Direction::forward ? 1 : 2);
  const std::size_t D = shape.D;
  const std::size_t S = shape.S;
  if (shape.arch == Architecture::tabular) {
    const std::size_t states = oracle::state_count(S, D);
    if (states > 100000) throw ValidationError("tabular model: state space too large");
    params_.push_back(Tensor(Shape{(shape.steps + 1) * states, D * S}, 0.0));
    names_.push_back("table");
  } else {
    if (shape.hidden == 0 || shape.layers == 0) throw ValidationError("mlp: need hidden units and layers");
    const std::size_t H = shape.hidden;
    // PyTorch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    const double b_in = 1.0 / std::sqrt(static_cast<double>(D * S + D));
    const double b_h = 1.0 / std::sqrt(static_cast<double>(H));
    params_.push_back(uniform_init(Shape{D * S, H}, b_in, rng));
    names_.push_back("w_in");
    Tensor embed(Shape{shape.steps + 1, D});
    for (double& v : embed.data()) v = rng.normal();
    params_.push_back(std::move(embed));
    names_.push_back("time_embed");
    params_.push_back(uniform_init(Shape{D, H}, b_in, rng));
    names_.push_back("w_time");
    params_.push_back(uniform_init(Shape{H}, b_in, rng));
    names_.push_back("b_in");
    for (std::size_t l = 1; l < shape.layers; ++l) {
      params_.push_back(uniform_init(Shape{H, H}, b_h, rng));
      names_.push_back("w_hidden" + std::to_string(l));
      params_.push_back(uniform_init(Shape{H}, b_h, rng));
      names_.push_back("b_hidden" + std::to_string(l));
    }
    params_.push_back(uniform_init(Shape{H, D * S}, b_h, rng));
    names_.push_back("w_out");
    params_.push_back(uniform_init(Shape{D * S}, b_h, rng));
    names_.push_back("b_out");
  }
  ema_ = Ema(params_, ema_decay);
}

ReferenceProcess TransitionModel::local_process(const ReferenceProcess& forward_proc) const {
  return direction_ == Direction::forward ? forward_proc : forward_proc.transposed();
}

std::vector<ad::Var> bind_model(ad::Tape& tape, const std::vector<Tensor>& params, bool trainable) {
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(trainable ? tape.parameter(p) : tape.constant(p));
  return vars;
}

ad::Var predict_endpoint(ad::Tape& tape, const ModelShape& shape, const std::vector<ad::Var>& vars,
                         const SampleBatch& x, const std::vector<std::size_t>& time) {
  (void)tape;
  const std::size_t B = x.rows();
  const std::size_t D = shape.D;
  const std::size_t S = shape.S;
  if (x.D != D || time.size() != B) throw ValidationError("predict: batch shape mismatch");
  for (auto t : time) {
    if (t > shape.steps) throw ValidationError("predict: time index out of range");
  }
  if (shape.arch == Architecture::tabular) {
    const std::size_t states = oracle::state_count(S, D);
    std::vector<std::size_t> rows(B);
    for (std::size_t b = 0; b < B; ++b) rows[b] = time[b] * states + oracle::encode_state(x.row(b), S);
    const ad::Var logits = ad::reshape(ad::gather_rows(vars[0], rows), Shape{B * D, S});
    return ad::log_softmax(logits);
  }
  std::size_t at = 0;
  const ad::Var& w_in = vars[at++];
  const ad::Var& embed = vars[at++];
  const ad::Var& w_time = vars[at++];
  const ad::Var& b_in = vars[at++];
  ad::Var h;
  std::vector<std::size_t> idx(B);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t b = 0; b < B; ++b) idx[b] = d * S + x.row(b)[d];
    const ad::Var part = ad::gather_rows(w_in, idx);
    h = d == 0 ? part : ad::add(h, part);
  }
  h = ad::add(h, ad::matmul(ad::gather_rows(embed, time), w_time));
  h = ad::relu(ad::add(h, b_in));
  for (std::size_t l = 1; l < shape.layers; ++l) {
    const ad::Var& w = vars[at++];
    const ad::Var& bias = vars[at++];
    h = ad::relu(ad::add(ad::matmul(h, w), bias));
  }
  const ad::Var& w_out = vars[at++];
  const ad::Var& b_out = vars[at++];
  const ad::Var out = ad::add(ad::matmul(h, w_out), b_out);  // [B, D*S]
  return ad::log_softmax(ad::reshape(out, Shape{B * D, S}));
}

ad::Var transition_log_probs(ad::Tape& tape, const LightMatchingContext& local,
                             const ad::Var& endpoint_logp, const SampleBatch& prev,
                             const std::vector<std::size_t>& j) {
  const ReferenceProcess& proc = local.process();
  const std::size_t B = prev.rows();
  const std::size_t D = prev.D;
  const std::size_t S = proc.states();
  const std::size_t steps = proc.steps();
  if (j.size() != B || endpoint_logp.shape() != Shape{B * D, S}) {
    throw ValidationError("transition: batch shape mismatch");
  }
  Tensor inv(Shape{B * D, S});
  Tensor step_rows(Shape{B * D, S});
  std::vector<std::size_t> select(B * D);
  const Tensor& lq = proc.log_transition();
  for (std::size_t b = 0; b < B; ++b) {
    if (j[b] < 1 || j[b] > steps) throw ValidationError("transition: step out of range");
    const std::size_t rem = steps - j[b];
    const Tensor& lbar = proc.log_power(rem + 1);
    for (std::size_t d = 0; d < D; ++d) {
      const std::size_t r = b * D + d;
      const std::size_t a = prev.row(b)[d];
      select[r] = rem;
      for (std::size_t e = 0; e < S; ++e) {
        const double l = lbar(a, e);
        inv(r, e) = l == kNegInf ? kNegInf : -l;
        step_rows(r, e) = lq(a, e);
      }
    }
  }
  const ad::Var z = ad::add(endpoint_logp, tape.constant(std::move(inv)));
  const ad::Var spread = ad::log_matvec_rows(local.power_stack(), z, std::move(select));
  return ad::log_softmax(ad::add(spread, tape.constant(std::move(step_rows))));
}

ad::Var markov_projection_loss(ad::Tape& tape, const ModelShape& shape,
                               const std::vector<ad::Var>& vars, const LightMatchingContext& local,
                               const BridgeBatch& batch, LossKind loss) {
  const std::size_t B = batch.n.size();
  if (B == 0) throw ValidationError("projection loss: empty batch");
  const std::size_t D = shape.D;
  const std::size_t S = shape.S;
  std::vector<std::size_t> time(B);
  for (std::size_t b = 0; b < B; ++b) time[b] = batch.n[b] - 1;
  const ad::Var endpoint = predict_endpoint(tape, shape, vars, batch.x_prev, time);
  const ad::Var log_m = transition_log_probs(tape, local, endpoint, batch.x_prev, batch.n);
  Tensor target(Shape{B * D, S}, batch.target);
  const double inv_b = 1.0 / static_cast<double>(B);
  if (loss == LossKind::kl) {
    double neg_entropy = 0.0;
    for (double t : batch.target) {
      if (t > 0.0) neg_entropy += t * std::log(t);
    }
    const ad::Var cross = ad::sum(ad::mul(tape.constant(std::move(target)), log_m));
    return ad::add(ad::scale(cross, -inv_b), tape.constant(Tensor::scalar(neg_entropy * inv_b)));
  }
  const ad::Var diff = ad::sub(ad::exp(log_m), tape.constant(std::move(target)));
  return ad::scale(ad::sum(ad::mul(diff, diff)), inv_b);
}

SampleBatch chain_sample(RngStream& rng, const ModelShape& shape, const std::vector<Tensor>& params,
                         const LightMatchingContext& local, const SampleBatch& start) {
  const std::size_t D = shape.D;
  const std::size_t S = shape.S;
  const std::size_t steps = local.process().steps();
  if (steps != shape.steps) throw ValidationError("chain_sample: model and process step counts differ");
  constexpr std::size_t kBlock = 4096;
  SampleBatch out = start;
  std::vector<double> probs(S);
  for (std::size_t lo = 0; lo < start.rows(); lo += kBlock) {
    const std::size_t hi = std::min(start.rows(), lo + kBlock);
    SampleBatch cur(D, S, hi - lo);
    std::copy(start.data.begin() + static_cast<long>(lo * D), start.data.begin() + static_cast<long>(hi * D),
              cur.data.begin());
    for (std::size_t j = 1; j <= steps; ++j) {
      ad::Tape tape;
      const auto vars = bind_model(tape, params, false);
      const std::vector<std::size_t> time(cur.rows(), j - 1);
      const ad::Var endpoint = predict_endpoint(tape, shape, vars, cur, time);
      const std::vector<std::size_t> js(cur.rows(), j);
      const ad::Var log_m = transition_log_probs(tape, local, endpoint, cur, js);
      const Tensor& lm = log_m.value();
      for (std::size_t r = 0; r < cur.rows() * D; ++r) {
        const auto row = lm.row(r);
        for (std::size_t s = 0; s < S; ++s) probs[s] = std::exp(row[s]);
        cur.data[r] = static_cast<std::uint16_t>(rng.categorical(probs));
      }
    }
    std::copy(cur.data.begin(), cur.data.end(), out.data.begin() + static_cast<long>(lo * D));
  }
  return out;
}

}  // namespace dsb
