#include <cmath>

#include "dsb/core/error.hpp"
#include "dsb/matching/matching.hpp"

namespace dsb {

namespace {

constexpr std::uint64_t kSampleStream = 0x2005;

// Forward training pairs are (x0, x1); backward ones are (x1, x0) in local time.
struct Pool {
  SampleBatch start;
  SampleBatch end;
};

SampleBatch gather(const SampleBatch& src, const std::vector<std::size_t>& idx) {
  SampleBatch out(src.D, src.S);
  out.data.reserve(idx.size() * src.D);
  for (auto i : idx) out.append(src.row(i));
  return out;
}

class Learner {
 public:
  Learner(TransitionModel& model, const ReferenceProcess& forward_proc, double lr)
      : model_(model),
        local_(model.local_process(forward_proc)),
        ctx_(local_),
        opt_(model.params(), AdamWConfig{.lr = lr}) {}

  const LightMatchingContext& context() const { return ctx_; }
  const ReferenceProcess& local() const { return local_; }

  double update(RngStream& bridge_rng, const SampleBatch& start, const SampleBatch& end, LossKind loss,
                std::size_t step) {
    const BridgeBatch bridge = make_bridge_batch(bridge_rng, local_, start, end);
    ad::Tape tape;
    const auto vars = bind_model(tape, model_.params(), true);
    try {
      const ad::Var value = markov_projection_loss(tape, model_.shape(), vars, ctx_, bridge, loss);
      tape.backward(value);
      std::vector<Tensor> grads;
      grads.reserve(vars.size());
      for (const auto& v : vars) grads.push_back(tape.grad(v));
      opt_.step(model_.params(), grads);
      model_.ema().update(model_.params());
      return value.value().item();
    } catch (const NumericalError& e) {
      throw DivergenceError(to_string(model_.direction()) + " model diverged at step " +
                            std::to_string(step) + ": " + e.what());
    }
  }

  // Runs the EMA model from `start` to the far endpoint.
  SampleBatch generate(RngStream& rng, const SampleBatch& start) const {
    return chain_sample(rng, model_.shape(), model_.ema().shadow(), ctx_, start);
  }

 private:
  TransitionModel& model_;
  ReferenceProcess local_;
  LightMatchingContext ctx_;
  AdamW opt_;
};

std::vector<std::size_t> draw_indices(RngStream& rng, std::size_t n, std::size_t pool) {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.below(pool);
  return idx;
}

void check_common(std::size_t solver_steps, std::size_t batch, std::size_t pool, double lr) {
  if (solver_steps == 0) throw ValidationError("solver_steps must be positive");
  if (batch == 0 || pool == 0) throw ValidationError("batch and pool sizes must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("learning rate must be positive");
}

}  // namespace

MatchingResult train_csbm(const BenchmarkPair& pair, const CsbmConfig& config,
                          const MatchingProgressFn& progress) {
  check_common(config.solver_steps, config.batch, config.pool, config.lr);
  if (config.iterations == 0) throw ValidationError("csbm: need at least one iteration");
  const ReferenceProcess proc = pair.process().coarsened(config.solver_steps);
  const ModelShape shape{.D = pair.D(), .S = pair.S(), .steps = config.solver_steps, .hidden = config.hidden};
  MatchingResult result{TransitionModel(shape, Direction::forward, config.seed, config.ema_decay),
                        TransitionModel(shape, Direction::backward, config.seed, config.ema_decay),
                        {},
                        0};
  Learner fwd(result.forward, proc, config.lr);
  Learner bwd(result.backward, proc, config.lr);
  PairDataSource data(pair, config.seed);
  RngStream bridge_rng(config.seed, stream_tag::train_bridge);
  RngStream pool_rng(config.seed, kSampleStream);
  RngStream index_rng = pool_rng.split(1);

  std::size_t step = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const bool forward = it % 2 == 0;
    Learner& learner = forward ? fwd : bwd;
    const std::size_t budget = it == 0 ? config.first_updates : config.later_updates;
    Pool pool;
    if (it > 0) {
      // Endpoint pairs from the model trained in the previous iteration.
      if (forward) {
        pool.end = data.x1_batch(config.pool);
        pool.start = bwd.generate(pool_rng, pool.end);
      } else {
        pool.end = data.x0_batch(config.pool);
        pool.start = fwd.generate(pool_rng, pool.end);
      }
    }
    for (std::size_t u = 1; u <= budget; ++u) {
      ++step;
      SampleBatch start, end;
      if (it == 0) {
        start = data.x0_batch(config.batch);
        end = data.x1_batch(config.batch);
      } else {
        const auto idx = draw_indices(index_rng, config.batch, config.pool);
        start = gather(pool.start, idx);
        end = gather(pool.end, idx);
      }
      const double loss = learner.update(bridge_rng, start, end, config.loss, step);
      if (u % config.log_every == 0 || u == budget) {
        TrainLogRow row{step, it, forward ? "forward" : "backward", loss};
        result.log.push_back(row);
        if (progress) progress(row);
      }
    }
  }
  result.updates = step;
  return result;
}

MatchingResult train_alpha_csbm(const BenchmarkPair& pair, const AlphaCsbmConfig& config,
                                const MatchingProgressFn& progress) {
  check_common(config.solver_steps, config.batch, config.cache, config.lr);
  if (!(config.alpha > 0.0 && config.alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
  const ReferenceProcess proc = pair.process().coarsened(config.solver_steps);
  const ModelShape shape{.D = pair.D(), .S = pair.S(), .steps = config.solver_steps, .hidden = config.hidden};
  MatchingResult result{TransitionModel(shape, Direction::forward, config.seed, config.ema_decay),
                        TransitionModel(shape, Direction::backward, config.seed, config.ema_decay),
                        {},
                        0};
  Learner fwd(result.forward, proc, config.lr);
  Learner bwd(result.backward, proc, config.lr);
  PairDataSource data(pair, config.seed);
  RngStream bridge_rng(config.seed, stream_tag::train_bridge);
  RngStream sample_rng(config.seed, kSampleStream);
  RngStream index_rng = sample_rng.split(1);

  auto record = [&](std::size_t step, std::size_t phase, const char* dir, double loss) {
    TrainLogRow row{step, phase, dir, loss};
    result.log.push_back(row);
    if (progress) progress(row);
  };

  std::size_t step = 0;
  // Warmup: both directions on the independent coupling.
  for (std::size_t u = 1; u <= config.warmup_updates; ++u) {
    ++step;
    const SampleBatch x0 = data.x0_batch(config.batch);
    const SampleBatch x1 = data.x1_batch(config.batch);
    const double lf = fwd.update(bridge_rng, x0, x1, config.loss, step);
    const double lb = bwd.update(bridge_rng, x1, x0, config.loss, step);
    if (u % config.log_every == 0 || u == config.warmup_updates) {
      record(step, 0, "forward", lf);
      record(step, 0, "backward", lb);
    }
  }

  // Caches hold the current coupling estimate for each direction, seeded with
  // the independent coupling. Every refresh replaces alpha * batch * period
  // random slots with pairs generated by the opposite model, so on average an
  // alpha fraction of each batch worth of data is renewed per update.
  Pool fwd_cache{data.x0_batch(config.cache), data.x1_batch(config.cache)};
  Pool bwd_cache{fwd_cache.end, fwd_cache.start};
  constexpr std::size_t kRefreshPeriod = 16;
  const std::size_t fresh = std::min(
      config.cache, std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(
                                                 config.alpha * config.batch * kRefreshPeriod))));
  auto refresh = [&](Pool& cache, const SampleBatch& start, const SampleBatch& end) {
    const auto slots = draw_indices(index_rng, fresh, config.cache);
    for (std::size_t i = 0; i < fresh; ++i) {
      std::copy(start.row(i).begin(), start.row(i).end(), cache.start.row(slots[i]).begin());
      std::copy(end.row(i).begin(), end.row(i).end(), cache.end.row(slots[i]).begin());
    }
  };

  for (std::size_t u = 1; u <= config.online_updates; ++u) {
    ++step;
    if ((u - 1) % kRefreshPeriod == 0) {
      // Forward model trains on (x0 ~ backward(x1), x1 ~ p1) and vice versa.
      const SampleBatch x1 = data.x1_batch(fresh);
      const SampleBatch x0_gen = bwd.generate(sample_rng, x1);
      const SampleBatch x0 = data.x0_batch(fresh);
      const SampleBatch x1_gen = fwd.generate(sample_rng, x0);
      refresh(fwd_cache, x0_gen, x1);
      refresh(bwd_cache, x1_gen, x0);
    }
    const auto fi = draw_indices(index_rng, config.batch, config.cache);
    const double lf = fwd.update(bridge_rng, gather(fwd_cache.start, fi), gather(fwd_cache.end, fi),
                                 config.loss, step);
    const auto bi = draw_indices(index_rng, config.batch, config.cache);
    const double lb = bwd.update(bridge_rng, gather(bwd_cache.start, bi), gather(bwd_cache.end, bi),
                                 config.loss, step);
    if (u % config.log_every == 0 || u == config.online_updates) {
      record(step, 1, "forward", lf);
      record(step, 1, "backward", lb);
    }
  }
  result.updates = step;
  return result;
}

}  // namespace dsb
