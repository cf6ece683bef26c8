#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsb/benchmark/pair.hpp"
#include "dsb/core/autodiff.hpp"
#include "dsb/core/optim.hpp"
#include "dsb/light/light.hpp"

namespace dsb {

enum class Direction { forward, backward };
std::string to_string(Direction dir);
Direction parse_direction(const std::string& name);

enum class Architecture { mlp, tabular };
std::string to_string(Architecture arch);

/// Shape of a per-dimension transition predictor.
///
/// Both architectures output, for every dimension, a distribution over the far
/// endpoint of the chain (x1 for forward models, x0 for backward ones). The
/// transition is the reference bridge posterior averaged under that prediction,
/// so it never leaves the support of the reference kernel.
struct ModelShape {
  std::size_t D = 2;
  std::size_t S = 50;
  std::size_t steps = 64;  // N + 1
  std::size_t hidden = 128;
  std::size_t layers = 3;
  Architecture arch = Architecture::mlp;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

class TransitionModel {
 public:
  TransitionModel(ModelShape shape, Direction direction, std::uint64_t seed, double ema_decay = 0.999);

  const ModelShape& shape() const { return shape_; }
  Direction direction() const { return direction_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  Ema& ema() { return ema_; }
  const Ema& ema() const { return ema_; }
  const std::vector<std::string>& names() const { return names_; }

  // Chain in the model's own time direction (transposed kernels for backward).
  ReferenceProcess local_process(const ReferenceProcess& forward_proc) const;

 private:
  ModelShape shape_;
  Direction direction_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  Ema ema_;
};

std::vector<ad::Var> bind_model(ad::Tape& tape, const std::vector<Tensor>& params, bool trainable);

// Endpoint log-probabilities, one row per (b, d): [B * D, S]. `time` is the
// local time index of the state x (0..steps).
ad::Var predict_endpoint(ad::Tape& tape, const ModelShape& shape, const std::vector<ad::Var>& vars,
                         const SampleBatch& x, const std::vector<std::size_t>& time);

// Transition log-probabilities of y_j given y_{j-1} = prev in the local chain:
// [B * D, S]. `j` holds the step index (1..steps) per row of prev.
ad::Var transition_log_probs(ad::Tape& tape, const LightMatchingContext& local,
                             const ad::Var& endpoint_logp, const SampleBatch& prev,
                             const std::vector<std::size_t>& j);

// Markov projection loss on a bridge batch expressed in the local
// chain. KL: mean_b sum_d KL(posterior || model); MSE: squared probability gap.
ad::Var markov_projection_loss(ad::Tape& tape, const ModelShape& shape,
                               const std::vector<ad::Var>& vars, const LightMatchingContext& local,
                               const BridgeBatch& batch, LossKind loss);

// Ancestral sampling through all steps of the local chain with the given
// parameters (pass ema().shadow() for evaluation). Rows of `start` are chained
// in blocks; the result has the same row count.
SampleBatch chain_sample(RngStream& rng, const ModelShape& shape, const std::vector<Tensor>& params,
                         const LightMatchingContext& local, const SampleBatch& start);

// --- training -----------------------------------------------------------------

struct CsbmConfig {
  std::size_t solver_steps = 64;  // N + 1
  std::size_t iterations = 5;
  std::size_t first_updates = 120000;
  std::size_t later_updates = 40000;
  std::size_t batch = 128;
  double lr = 1e-4;
  double ema_decay = 0.999;
  LossKind loss = LossKind::kl;
  std::size_t pool = 16384;  // endpoint pairs drawn from the previous model per iteration
  std::size_t hidden = 128;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
};

struct AlphaCsbmConfig {
  std::size_t solver_steps = 64;
  double alpha = 0.25;
  std::size_t warmup_updates = 120000;  // both models on the independent coupling
  std::size_t online_updates = 160000;  // joint online phase
  std::size_t batch = 64;
  double lr = 1e-3;
  double ema_decay = 0.999;
  LossKind loss = LossKind::kl;
  std::size_t cache = 16384;
  std::size_t hidden = 128;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
};

struct TrainLogRow {
  std::size_t step;       // global update counter
  std::size_t iteration;  // outer iteration (0 = warmup for alpha-CSBM)
  std::string direction;
  double loss;
};

struct MatchingResult {
  TransitionModel forward;
  TransitionModel backward;
  std::vector<TrainLogRow> log;
  std::size_t updates = 0;
};

using MatchingProgressFn = std::function<void(const TrainLogRow&)>;

MatchingResult train_csbm(const BenchmarkPair& pair, const CsbmConfig& config,
                          const MatchingProgressFn& progress = {});
MatchingResult train_alpha_csbm(const BenchmarkPair& pair, const AlphaCsbmConfig& config,
                                const MatchingProgressFn& progress = {});

// --- exact tabular projections ---------------------------------------------------

/// Dense Markov chain over the joint space S^D in local time: transitions[j-1] is
/// the |X| x |X| matrix of step j.
struct TabularChain {
  std::vector<Tensor> transitions;
};

// Markov projection of the reciprocal process with endpoint coupling
// `coupling` [|X|, |X|] (rows: start, cols: end) under the local chain.
TabularChain exact_markov_projection(const Tensor& coupling, const ReferenceProcess& local, std::size_t D);
// Joint law of (start, end) when the chain runs from `start_law`.
Tensor chain_coupling(const TabularChain& chain, std::span<const double> start_law);
Tensor transpose(const Tensor& t);

// One D-IMF double projection of a coupling in the forward direction.
Tensor dimf_step(const Tensor& coupling, const ReferenceProcess& proc, std::size_t D);
// alpha-IMF: (1 - alpha) coupling + alpha * dimf_step(coupling).
Tensor alpha_imf_step(const Tensor& coupling, double alpha, const ReferenceProcess& proc, std::size_t D);
// One alpha-CSBM joint update at tabular scale with exact inner minimization:
// the forward chain is refit to the reciprocal projection of the backward
// chain's coupling mixed with the cached coupling. Returns the new forward chain.
TabularChain alpha_csbm_tabular_update(const TabularChain& backward, const Tensor& cached,
                                       std::span<const double> p1, double alpha,
                                       const ReferenceProcess& proc, std::size_t D);

}  // namespace dsb
