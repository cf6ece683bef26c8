#include "dsb/metrics/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "dsb/core/error.hpp"
#include "dsb/core/parallel.hpp"

namespace dsb {

namespace {

void check_compatible(const SampleBatch& real, const SampleBatch& pred) {
  if (real.D != pred.D || real.S != pred.S) throw ValidationError("scores: batches differ in (S, D)");
  if (real.rows() == 0 || pred.rows() == 0) throw ValidationError("scores: empty batch");
}

// 1 - 0.5 * sum |a/na - b/nb| over count vectors.
double overlap(std::span<const double> a, double na, std::span<const double> b, double nb) {
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] / na - b[i] / nb);
  return 1.0 - 0.5 * tv;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

SampleBatch slice(const SampleBatch& src, std::size_t lo, std::size_t n) {
  SampleBatch out(src.D, src.S);
  out.data.assign(src.data.begin() + static_cast<long>(lo * src.D),
                  src.data.begin() + static_cast<long>((lo + n) * src.D));
  return out;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> dimension_pairs(std::size_t D) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = i + 1; j < D; ++j) out.emplace_back(i, j);
  }
  return out;
}

ScoreSet shape_score(const SampleBatch& real, const SampleBatch& pred) {
  check_compatible(real, pred);
  const std::size_t D = real.D;
  const std::size_t S = real.S;
  std::vector<double> cr(D * S, 0.0), cp(D * S, 0.0);
  for (std::size_t i = 0; i < real.rows(); ++i) {
    for (std::size_t d = 0; d < D; ++d) cr[d * S + real.row(i)[d]] += 1.0;
  }
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    for (std::size_t d = 0; d < D; ++d) cp[d * S + pred.row(i)[d]] += 1.0;
  }
  ScoreSet out;
  const double nr = static_cast<double>(real.rows());
  const double np = static_cast<double>(pred.rows());
  for (std::size_t d = 0; d < D; ++d) {
    out.items.push_back(overlap(std::span(cr).subspan(d * S, S), nr, std::span(cp).subspan(d * S, S), np));
  }
  out.mean = mean_of(out.items);
  return out;
}

ScoreSet trend_score(const SampleBatch& real, const SampleBatch& pred) {
  check_compatible(real, pred);
  if (real.D < 2) throw ValidationError("trend score needs at least two dimensions");
  const std::size_t S = real.S;
  const double nr = static_cast<double>(real.rows());
  const double np = static_cast<double>(pred.rows());
  std::vector<double> cr(S * S), cp(S * S);
  ScoreSet out;
  for (const auto& [i, j] : dimension_pairs(real.D)) {
    std::fill(cr.begin(), cr.end(), 0.0);
    std::fill(cp.begin(), cp.end(), 0.0);
    for (std::size_t r = 0; r < real.rows(); ++r) cr[real.row(r)[i] * S + real.row(r)[j]] += 1.0;
    for (std::size_t r = 0; r < pred.rows(); ++r) cp[pred.row(r)[i] * S + pred.row(r)[j]] += 1.0;
    out.items.push_back(overlap(cr, nr, cp, np));
  }
  out.mean = mean_of(out.items);
  return out;
}

X1Sampler ground_truth_sampler(const BenchmarkPair& pair) {
  return [&pair](RngStream& rng, std::span<const std::uint16_t> x0, std::size_t count) {
    SampleBatch out(pair.D(), pair.S(), count);
    for (std::size_t i = 0; i < count; ++i) pair.sample_x1_given_x0(rng, x0, out.row(i));
    return out;
  };
}

ConditionalScores conditional_scores(const BenchmarkPair& pair, const X1Sampler& sampler,
                                     const ConditionalConfig& config) {
  if (config.n_x0 == 0 || config.n_per == 0) throw ValidationError("conditional scores: need samples");
  const std::size_t D = pair.D();
  const std::size_t n = config.n_per;
  SampleBatch real(D, pair.S(), config.n_x0 * n);
  SampleBatch pred(D, pair.S(), config.n_x0 * n);
  const RngStream base(config.seed, stream_tag::eval);
  parallel_for(config.n_x0, config.jobs, [&](std::size_t i) {
    RngStream rng = base.split(2 * i);
    RngStream solver_rng = base.split(2 * i + 1);
    std::vector<std::uint16_t> x0(D);
    pair.sample_x0(rng, x0);
    for (std::size_t r = 0; r < n; ++r) pair.sample_x1_given_x0(rng, x0, real.row(i * n + r));
    SampleBatch draws;
    try {
      draws = sampler(solver_rng, x0, n);
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "sampler failed at x0 = (";
      for (std::size_t d = 0; d < D; ++d) msg << (d ? "," : "") << x0[d];
      msg << "): " << e.what();
      throw Error(msg.str());
    }
    if (draws.rows() != n || draws.D != D) throw ValidationError("sampler returned a batch of the wrong shape");
    std::copy(draws.data.begin(), draws.data.end(), pred.data.begin() + static_cast<long>(i * n * D));
  });

  ConditionalScores out;
  out.n_x0 = config.n_x0;
  out.n_per = n;
  out.shape = shape_score(real, pred);
  if (D >= 2) {
    out.trend = trend_score(real, pred);
  } else {
    out.trend.mean = std::numeric_limits<double>::quiet_NaN();
  }
  out.shape_by_x0.resize(config.n_x0);
  out.trend_by_x0.resize(D >= 2 ? config.n_x0 : 0);
  parallel_for(config.n_x0, config.jobs, [&](std::size_t i) {
    const SampleBatch a = slice(real, i * n, n);
    const SampleBatch b = slice(pred, i * n, n);
    out.shape_by_x0[i] = shape_score(a, b).mean;
    if (D >= 2) out.trend_by_x0[i] = trend_score(a, b).mean;
  });
  out.shape_per_x0 = mean_of(out.shape_by_x0);
  out.trend_per_x0 = mean_of(out.trend_by_x0);
  return out;
}

}  // namespace dsb
