// dsb: generate benchmark pairs, train solvers, evaluate and report.
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsb/cli/commands.hpp"
#include "dsb/core/error.hpp"

using namespace dsb;
using namespace dsb::cli;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::size_t jobs = 0;
  bool jobs_set = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "INI run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set solver.lr=0.01");
  cmd->add_option("-j,--jobs", c.jobs, "Cap on worker threads (0 = all cores)")
      ->each([&c](const std::string&) { c.jobs_set = true; });
}

RunConfig resolve(const Common& c) {
  std::vector<std::string> overrides = c.overrides;
  if (c.jobs_set) overrides.push_back("run.jobs=" + std::to_string(c.jobs));
  return c.config_path.empty() ? default_config(overrides) : load_config(c.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete Schrodinger bridge benchmark toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dsb 0.1.0");

  Common common;

  auto* gen = app.add_subcommand("generate", "Build a benchmark pair and its fixed test set");
  add_common(gen, common);
  std::string pair_out, test_out;
  std::size_t count = 0;
  gen->add_option("--pair", pair_out, "Output pair file (default <out>/pair.dsbpair)");
  gen->add_option("--test-set", test_out, "Output test-set file (default <out>/test.dsbset)");
  auto* count_opt = gen->add_option("--count", count, "Test-set rows (overrides benchmark.test_count)");

  auto* tr = app.add_subcommand("train", "Train a solver on a pair");
  add_common(tr, common);
  std::string train_pair, ckpt_out, log_out, solver;
  tr->add_option("--pair", train_pair, "Pair file")->required()->check(CLI::ExistingFile);
  tr->add_option("--solver", solver, "dlightsb | dlightsb-m | csbm | alpha-csbm (overrides solver.method)")
      ->check(CLI::IsMember({"dlightsb", "dlightsb-m", "csbm", "alpha-csbm"}));
  tr->add_option("-o,--checkpoint", ckpt_out, "Checkpoint path");
  tr->add_option("--log", log_out, "Training log CSV path");

  auto* ev = app.add_subcommand("eval", "Score a checkpoint (or the ground truth) on a pair");
  add_common(ev, common);
  EvalOptions eval_opts;
  auto* ckpt_opt = ev->add_option("--checkpoint", eval_opts.checkpoint_path, "Checkpoint file")->check(CLI::ExistingFile);
  auto* gt_opt = ev->add_flag("--ground-truth", eval_opts.ground_truth, "Use the benchmark sampler as the solver");
  ckpt_opt->excludes(gt_opt);
  ev->add_option("--pair", eval_opts.pair_path, "Pair file")->required()->check(CLI::ExistingFile);
  ev->add_option("--test-set", eval_opts.test_path, "Test-set file")->required()->check(CLI::ExistingFile);
  ev->add_option("-o,--out", eval_opts.out_prefix, "Output prefix for .json/.csv/.hist.csv");
  bool no_conditional = false;
  ev->add_flag("--no-conditional", no_conditional, "Skip the conditional scores");

  auto* ver = app.add_subcommand("verify", "Run the oracle suites on an enumerable pair");
  add_common(ver, common);
  std::string verify_pair;
  ver->add_option("--pair", verify_pair, "Pair file (default: build from the config)");

  auto* rep = app.add_subcommand("report", "Aggregate result CSVs into a table");
  std::vector<std::string> csvs, sets;
  std::string report_dir;
  rep->add_option("results", csvs, "Result CSV files or glob patterns")->required();
  rep->add_option("--test-set", sets, "Test sets to emit plot data for");
  rep->add_option("-o,--out", report_dir, "Output directory (default $DSB_OUTPUT_DIR or .)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      RunConfig config = resolve(common);
      if (*count_opt) config.test_count = count;
      generate(config, pair_out, test_out, std::cout);
    } else if (*tr) {
      if (!solver.empty()) common.overrides.insert(common.overrides.begin(), "solver.method=" + solver);
      const RunConfig config = resolve(common);
      train(config, train_pair, ckpt_out, log_out, std::cout);
    } else if (*ev) {
      if (eval_opts.checkpoint_path.empty() && !eval_opts.ground_truth) {
        std::cerr << "eval: pass --checkpoint or --ground-truth\n";
        return kExitUsage;
      }
      eval_opts.conditional = !no_conditional;
      const RunConfig config = resolve(common);
      evaluate(config, eval_opts, std::cout);
    } else if (*ver) {
      const RunConfig config = resolve(common);
      const auto checks = verify(config, verify_pair, std::cout);
      for (const auto& c : checks) {
        if (!c.passed) {
          std::cerr << "verification failed: " << c.name << "\n";
          return kExitValidation;
        }
      }
      std::cout << "all " << checks.size() << " checks passed\n";
    } else if (*rep) {
      if (report_dir.empty()) report_dir = default_config().resolved_output_dir();
      report(csvs, sets, report_dir, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}
