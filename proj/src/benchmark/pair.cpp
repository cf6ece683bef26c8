#include "dsb/benchmark/pair.hpp"

#include <algorithm>
#include <cmath>

#include "dsb/core/error.hpp"
#include "dsb/core/logmath.hpp"
#include "dsb/core/parallel.hpp"

namespace dsb {

std::string to_string(SourceKind kind) {
  return kind == SourceKind::uniform ? "uniform" : "gaussian";
}

SourceKind parse_source_kind(const std::string& name) {
  if (name == "uniform") return SourceKind::uniform;
  if (name == "gaussian") return SourceKind::gaussian;
  throw ValidationError("unknown source kind '" + name + "' (expected uniform or gaussian)");
}

std::vector<double> discretized_gaussian_log(std::size_t S, double mean, double stddev) {
  if (!(stddev > 0.0) || !std::isfinite(mean)) {
    throw ValidationError("discretized gaussian: need finite mean and positive stddev");
  }
  std::vector<double> out(S);
  for (std::size_t s = 0; s < S; ++s) {
    const double z = (static_cast<double>(s) - mean) / stddev;
    out[s] = -0.5 * z * z;
  }
  log_normalize(out);
  return out;
}

SourceSpec SourceSpec::gaussian(std::size_t D, double mean, double stddev) {
  SourceSpec spec;
  spec.kind = SourceKind::gaussian;
  spec.mean.assign(D, mean);
  spec.stddev.assign(D, stddev);
  return spec;
}

void SourceSpec::validate(std::size_t D) const {
  if (kind == SourceKind::uniform) {
    if (!mean.empty() || !stddev.empty()) {
      throw ValidationError("uniform source takes no mean/stddev");
    }
    return;
  }
  if (mean.size() != D || stddev.size() != D) {
    throw ValidationError("gaussian source needs one mean and stddev per dimension");
  }
  for (std::size_t d = 0; d < D; ++d) {
    if (!std::isfinite(mean[d]) || !(stddev[d] > 0.0)) {
      throw ValidationError("gaussian source: bad mean/stddev in dimension " + std::to_string(d));
    }
  }
}

std::vector<double> SourceSpec::log_marginal(std::size_t d, std::size_t S) const {
  if (kind == SourceKind::uniform) {
    return std::vector<double>(S, -std::log(static_cast<double>(S)));
  }
  return discretized_gaussian_log(S, mean.at(d), stddev.at(d));
}

void SourceSpec::sample(RngStream& rng, std::size_t S, std::span<std::uint16_t> x) const {
  if (kind == SourceKind::uniform) {
    for (auto& v : x) v = static_cast<std::uint16_t>(rng.below(S));
    return;
  }
  for (std::size_t d = 0; d < x.size(); ++d) {
    x[d] = static_cast<std::uint16_t>(rng.categorical_log(log_marginal(d, S)));
  }
}

void PairConfig::validate() const {
  if (D == 0) throw ValidationError("pair: D must be positive");
  if (S < 2 || S > 65535) throw ValidationError("pair: S must lie in [2, 65535]");
  if (K == 0) throw ValidationError("pair: K must be positive");
  if (steps == 0) throw ValidationError("pair: steps (N+1) must be positive");
  if (!(mean_lo >= 0.0 && mean_lo <= mean_hi && mean_hi <= 1.0)) {
    throw ValidationError("pair: need 0 <= mean_lo <= mean_hi <= 1");
  }
  if (!(core_sigma > 0.0)) throw ValidationError("pair: core_sigma must be positive");
  if (kind == ReferenceKind::uniform && !(gamma >= 0.0 && gamma <= 1.0)) {
    throw ValidationError("pair: uniform gamma must lie in [0, 1]");
  }
  if (kind == ReferenceKind::gaussian && !(gamma > 0.0)) {
    throw ValidationError("pair: gaussian gamma must be positive");
  }
  source.validate(D);
}

BenchmarkPair::BenchmarkPair(PairConfig config, CPScalarField field)
    : config_(std::move(config)),
      field_(std::move(field)),
      proc_(config_.kind, config_.gamma, config_.S, config_.steps) {
  config_.validate();
  if (field_.D != config_.D || field_.S != config_.S) {
    throw ValidationError("pair: field shape does not match the config");
  }
  sampler_ = std::make_unique<ConditionalSampler>(field_, proc_);
}

BenchmarkPair::BenchmarkPair(const BenchmarkPair& other)
    : config_(other.config_), field_(other.field_), proc_(other.proc_) {
  sampler_ = std::make_unique<ConditionalSampler>(field_, proc_);
}

BenchmarkPair generate_pair(const PairConfig& config) {
  config.validate();
  RngStream rng(config.seed, stream_tag::pair_construction);
  CPScalarField field(config.K, config.D, config.S);
  const double span = static_cast<double>(config.S - 1);
  const double sigma = config.core_sigma * span;
  std::fill(field.log_beta.begin(), field.log_beta.end(), -std::log(static_cast<double>(config.K)));
  for (std::size_t k = 0; k < config.K; ++k) {
    for (std::size_t d = 0; d < config.D; ++d) {
      const double mean = rng.uniform(config.mean_lo, config.mean_hi) * span;
      const auto core = discretized_gaussian_log(config.S, mean, sigma);
      std::copy(core.begin(), core.end(), field.log_cores.begin() + (k * config.D + d) * config.S);
    }
  }
  return BenchmarkPair(config, std::move(field));
}

TestSet generate_test_set(const BenchmarkPair& pair, std::size_t count, std::uint64_t seed,
                          std::size_t jobs) {
  TestSet set;
  set.seed = seed;
  set.x0 = SampleBatch(pair.D(), pair.S(), count);
  set.x1 = SampleBatch(pair.D(), pair.S(), count);
  const RngStream base(seed, stream_tag::test_set);
  parallel_for(count, jobs, [&](std::size_t i) {
    RngStream rng = base.split(i);
    pair.sample_x0(rng, set.x0.row(i));
    pair.sample_x1_given_x0(rng, set.x0.row(i), set.x1.row(i));
  });
  return set;
}

PairDataSource::PairDataSource(const BenchmarkPair& pair, std::uint64_t seed)
    : pair_(pair), rng0_(seed, stream_tag::train_x0), rng1_(seed, stream_tag::train_x1) {}

SampleBatch PairDataSource::x0_batch(std::size_t n) {
  SampleBatch out(pair_.D(), pair_.S(), n);
  for (std::size_t i = 0; i < n; ++i) pair_.sample_x0(rng0_, out.row(i));
  return out;
}

SampleBatch PairDataSource::x1_batch(std::size_t n) {
  // x1 ~ p1 is drawn through a hidden x0 that is then discarded.
  SampleBatch out(pair_.D(), pair_.S(), n);
  std::vector<std::uint16_t> hidden(pair_.D());
  for (std::size_t i = 0; i < n; ++i) {
    pair_.sample_x0(rng1_, hidden);
    pair_.sample_x1_given_x0(rng1_, hidden, out.row(i));
  }
  return out;
}

std::vector<double> marginal_histogram(const SampleBatch& batch, std::size_t d) {
  if (d >= batch.D) throw ValidationError("histogram: dimension out of range");
  std::vector<double> hist(batch.S, 0.0);
  const std::size_t n = batch.rows();
  if (n == 0) return hist;
  for (std::size_t i = 0; i < n; ++i) hist[batch.row(i)[d]] += 1.0;
  for (double& h : hist) h /= static_cast<double>(n);
  return hist;
}

std::size_t count_modes_1d(std::span<const double> hist, double min_fraction) {
  const std::size_t S = hist.size();
  std::vector<double> smooth(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    double acc = 0.0;
    double w = 0.0;
    for (long o = -2; o <= 2; ++o) {
      const long j = static_cast<long>(s) + o;
      if (j < 0 || j >= static_cast<long>(S)) continue;
      acc += hist[static_cast<std::size_t>(j)];
      w += 1.0;
    }
    smooth[s] = acc / w;
  }
  const double top = *std::max_element(smooth.begin(), smooth.end());
  if (!(top > 0.0)) return 0;
  std::size_t modes = 0;
  for (std::size_t s = 0; s < S; ++s) {
    const bool left_ok = s == 0 || smooth[s] > smooth[s - 1];
    const bool right_ok = s + 1 == S || smooth[s] >= smooth[s + 1];
    if (left_ok && right_ok && smooth[s] >= min_fraction * top) ++modes;
  }
  return modes;
}

std::size_t count_modes_2d(const SampleBatch& batch, std::size_t i, std::size_t j,
                           double min_fraction) {
  const std::size_t S = batch.S;
  std::vector<double> hist(S * S, 0.0);
  for (std::size_t r = 0; r < batch.rows(); ++r) hist[batch.row(r)[i] * S + batch.row(r)[j]] += 1.0;
  const long radius = 2;
  std::vector<double> smooth(S * S, 0.0);
  for (std::size_t a = 0; a < S; ++a) {
    for (std::size_t b = 0; b < S; ++b) {
      double acc = 0.0;
      for (long da = -radius; da <= radius; ++da) {
        for (long db = -radius; db <= radius; ++db) {
          const long aa = static_cast<long>(a) + da;
          const long bb = static_cast<long>(b) + db;
          if (aa < 0 || bb < 0 || aa >= static_cast<long>(S) || bb >= static_cast<long>(S)) continue;
          acc += hist[static_cast<std::size_t>(aa) * S + static_cast<std::size_t>(bb)];
        }
      }
      smooth[a * S + b] = acc;
    }
  }
  const double top = *std::max_element(smooth.begin(), smooth.end());
  if (!(top > 0.0)) return 0;
  std::size_t modes = 0;
  for (std::size_t a = 0; a < S; ++a) {
    for (std::size_t b = 0; b < S; ++b) {
      const double v = smooth[a * S + b];
      if (v < min_fraction * top) continue;
      bool peak = true;
      for (long da = -1; da <= 1 && peak; ++da) {
        for (long db = -1; db <= 1; ++db) {
          if (da == 0 && db == 0) continue;
          const long aa = static_cast<long>(a) + da;
          const long bb = static_cast<long>(b) + db;
          if (aa < 0 || bb < 0 || aa >= static_cast<long>(S) || bb >= static_cast<long>(S)) continue;
          const double u = smooth[static_cast<std::size_t>(aa) * S + static_cast<std::size_t>(bb)];
          // Ties go to the earliest cell in scan order.
          const bool earlier = da < 0 || (da == 0 && db < 0);
          if (earlier ? u >= v : u > v) {
            peak = false;
            break;
          }
        }
      }
      if (peak) ++modes;
    }
  }
  return modes;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace dsb
