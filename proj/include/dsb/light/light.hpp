#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsb/benchmark/pair.hpp"
#include "dsb/core/autodiff.hpp"
#include "dsb/core/optim.hpp"

namespace dsb {

enum class LossKind { kl, mse };
std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

// --- parameters ------------------------------------------------------------

// Trainable layout of a CP field: [log_beta (K), log_cores d=0 (K x S), ..., d=D-1].
std::vector<Tensor> field_to_params(const CPScalarField& field);
CPScalarField params_to_field(const std::vector<Tensor>& params);

struct LightVars {
  ad::Var log_beta;
  std::vector<ad::Var> log_cores;  // one [K, S] node per dimension
};

LightVars bind_params(ad::Tape& tape, const std::vector<Tensor>& params, bool trainable = true);

// Each component is a discretized Gaussian (sigma = sigma_frac * (S - 1)) centred
// at a randomly drawn training x1; weights uniform.
CPScalarField init_from_samples(const SampleBatch& x1, std::size_t K, double sigma_frac);

// --- DLightSB ----------------------------------------------------------------

// mean_b log c(x0_b) - mean_b log v(x1_b), with c taken over the full horizon of `proc`.
ad::Var dlightsb_loss(ad::Tape& tape, const LightVars& vars, const ReferenceProcess& proc,
                      const SampleBatch& x0, const SampleBatch& x1);

// --- u-tables and SB transitions ----------------------------------------------

/// log u_{k,n}^d[s] = log sum_{s'} Qbar_{N+1-n}[s, s'] r_k^d[s'] for n = 0..N+1.
///
/// Stored [n][k][d][s]; memory is (N+2) K D S doubles.
class UTable {
 public:
  UTable(const CPScalarField& field, const ReferenceProcess& proc);

  std::size_t steps() const { return steps_; }
  double log_u(std::size_t n, std::size_t k, std::size_t d, std::size_t s) const {
    return data_[((n * K_ + k) * D_ + d) * S_ + s];
  }
  std::span<const double> log_u_row(std::size_t n, std::size_t k, std::size_t d) const {
    return {data_.data() + ((n * K_ + k) * D_ + d) * S_, S_};
  }

 private:
  std::size_t steps_, K_, D_, S_;
  std::vector<double> data_;
};

// Mixture posterior over components given the state at step n-1, as logs.
std::vector<double> sb_component_log_weights(const CPScalarField& field, const UTable& u,
                                             std::size_t n, std::span<const std::uint16_t> x_prev);
// Per-dimension marginal SB transition log-probabilities at step n.
std::vector<double> sb_transition_log_marginal(const CPScalarField& field, const UTable& u,
                                               const ReferenceProcess& proc, std::size_t n,
                                               std::span<const std::uint16_t> x_prev, std::size_t d);
// Joint transition log-probability log q(x_next | x_prev) at step n.
double sb_transition_log_prob(const CPScalarField& field, const UTable& u, const ReferenceProcess& proc,
                              std::size_t n, std::span<const std::uint16_t> x_prev,
                              std::span<const std::uint16_t> x_next);
// Ancestral draw: component first, then every dimension independently.
void sb_transition_sample(RngStream& rng, const CPScalarField& field, const UTable& u,
                          const ReferenceProcess& proc, std::size_t n,
                          std::span<const std::uint16_t> x_prev, std::span<std::uint16_t> x_next);
// Runs all N+1 transitions from x0.
void sb_chain_sample(RngStream& rng, const CPScalarField& field, const UTable& u,
                     const ReferenceProcess& proc, std::span<const std::uint16_t> x0,
                     std::span<std::uint16_t> x1);

// --- DLightSB-M ----------------------------------------------------------------

/// Bridge samples for the matching loss. For row b, `n[b]` in 1..N+1 is the
/// transition index, `x_prev` the state at step n-1 and `x_next` a draw of the
/// state at step n from the reference bridge (x1 itself when n = N+1).
struct BridgeBatch {
  std::vector<std::size_t> n;
  SampleBatch x0;
  SampleBatch x1;
  SampleBatch x_prev;
  SampleBatch x_next;
  // Bridge posterior probabilities [B][D][S] of the state at step n.
  std::vector<double> target;
  // Sum over d of log target[b][d][x_next^d].
  std::vector<double> log_target_at_next;
};

BridgeBatch make_bridge_batch(RngStream& rng, const ReferenceProcess& proc, const SampleBatch& x0,
                              const SampleBatch& x1);
// Same, with a caller-chosen transition index per row.
BridgeBatch make_bridge_batch_at(RngStream& rng, const ReferenceProcess& proc, const SampleBatch& x0,
                                 const SampleBatch& x1, const std::vector<std::size_t>& n);

/// Precomputed constants for the matching loss on a (possibly coarsened) grid.
class LightMatchingContext {
 public:
  explicit LightMatchingContext(const ReferenceProcess& proc);
  const ReferenceProcess& process() const { return proc_; }
  // Stack of log Qbar_m for m = 0..N+1.
  const ad::MatrixStack& power_stack() const { return stack_; }

 private:
  const ReferenceProcess& proc_;
  ad::MatrixStack stack_;
};

// KL: mean_b [log t(x_next) - log q_theta(x_next | x_prev)], joint over dimensions.
// MSE: mean_b sum_d ||q_theta^d(. | x_prev) - t^d||^2 with per-dimension marginals.
ad::Var dlightsb_m_loss(ad::Tape& tape, const LightVars& vars, const LightMatchingContext& ctx,
                        const BridgeBatch& batch, LossKind loss);

// --- training -------------------------------------------------------------------

struct LightConfig {
  std::size_t K = 128;
  std::size_t steps = 20000;
  std::size_t batch = 512;
  double lr = 1e-2;
  std::uint64_t seed = 0;
  double init_sigma = 1.0 / 12.0;
  // DLightSB-M only.
  std::size_t solver_steps = 16;
  LossKind loss = LossKind::kl;
  std::size_t log_every = 100;
};

struct LossRecord {
  std::size_t step;
  double loss;
};

struct LightResult {
  CPScalarField field;
  std::vector<LossRecord> log;
  std::size_t updates = 0;
};

using ProgressFn = std::function<void(std::size_t step, double loss)>;

LightResult train_dlightsb(const BenchmarkPair& pair, const LightConfig& config,
                           const ProgressFn& progress = {});
LightResult train_dlightsb_m(const BenchmarkPair& pair, const LightConfig& config,
                             const ProgressFn& progress = {});

}  // namespace dsb
