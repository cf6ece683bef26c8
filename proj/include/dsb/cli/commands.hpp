#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dsb/cli/config.hpp"
#include "dsb/metrics/report.hpp"

namespace dsb::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitDivergence = 3;

// Maps an exception thrown by a command to its exit code.
int exit_code_for(const std::exception& e);

// --- checkpoints -----------------------------------------------------------------

/// A trained solver. Light solvers store a CP field; matching solvers store
/// both direction models with their EMA weights.
struct Checkpoint {
  Method method = Method::dlightsb;
  std::string loss;  // "-" for DLightSB
  std::size_t solver_steps = 0;
  std::string pair_hash;
  io::Json config;
  std::size_t updates = 0;
  std::optional<CPScalarField> field;
  std::optional<TransitionModel> forward;
  std::optional<TransitionModel> backward;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Maps a batch of x0 rows to one x1 draw per row.
using BatchSampler = std::function<SampleBatch(RngStream& rng, const SampleBatch& x0)>;

// Samplers for a trained checkpoint and for the benchmark itself. The
// checkpoint and the pair must outlive them.
BatchSampler checkpoint_sampler(const Checkpoint& ckpt, const BenchmarkPair& pair);
BatchSampler ground_truth_batch_sampler(const BenchmarkPair& pair);
// Repeats x0 `count` times and runs the batch sampler once.
X1Sampler repeat_sampler(BatchSampler sampler, std::size_t S);

// --- commands --------------------------------------------------------------------

struct GenerateOutput {
  std::string pair_path;
  std::string test_path;
  std::string pair_hash;
  std::size_t test_rows = 0;
  std::size_t modes = 0;  // peak count of the x1 test sample (dims 0, 1 when D >= 2)
  std::vector<double> entropies;  // per-dimension entropy of the x1 marginal histogram
};

// Writes the pair and its fixed test set. Empty paths default to
// <output dir>/pair.dsbpair and <output dir>/test.dsbset.
GenerateOutput generate(const RunConfig& config, std::string pair_path, std::string test_path,
                        std::ostream& log);

struct TrainOutput {
  std::string checkpoint_path;
  std::string log_path;
  std::size_t updates = 0;
  double seconds = 0.0;
};

// Trains the configured solver on fresh batches from the pair. Refuses test-set files.
TrainOutput train(const RunConfig& config, const std::string& pair_path, std::string checkpoint_path,
                  std::string log_path, std::ostream& log);

struct EvalOptions {
  std::string checkpoint_path;  // empty with ground_truth = true
  bool ground_truth = false;    // score the benchmark's own sampler
  std::string pair_path;
  std::string test_path;
  std::string out_prefix;  // writes <prefix>.json, <prefix>.csv and <prefix>.hist.csv
  bool conditional = true;
};

MetricsReport evaluate(const RunConfig& config, const EvalOptions& options, std::ostream& log);

struct CheckResult {
  std::string name;
  bool passed = false;
  double residual = 0.0;
  double tolerance = 0.0;
  std::string note;
};

// Oracle suites on an enumerable pair: the configured one, or the file at pair_path.
std::vector<CheckResult> verify(const RunConfig& config, const std::string& pair_path, std::ostream& log);

struct ReportOutput {
  std::string table;
  std::vector<std::string> written;
};

// Aggregates result CSVs (paths or glob patterns) into <out_dir>/table.csv and
// writes one 2-D histogram plot-data file per test set given.
ReportOutput report(const std::vector<std::string>& csv_patterns, const std::vector<std::string>& test_paths,
                    const std::string& out_dir, std::ostream& log);

// Joint histogram of dims 0 and 1 (j = 0 when D = 1) for two batches, as CSV
// with header "i,j,<name_a>,<name_b>".
std::string histogram_csv(const SampleBatch& a, const SampleBatch& b, const std::string& name_a,
                          const std::string& name_b);

// Expands '*' and '?' in the file-name part of a path.
std::vector<std::string> expand_glob(const std::string& pattern);

}  // namespace dsb::cli
