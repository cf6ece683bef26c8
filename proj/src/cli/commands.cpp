#include "dsb/cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>

#include "dsb/benchmark/field.hpp"
#include "dsb/core/error.hpp"
#include "dsb/core/logmath.hpp"
#include "dsb/core/parallel.hpp"
#include "dsb/io/pair_io.hpp"
#include "dsb/oracle/oracle.hpp"

namespace dsb::cli {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e) != nullptr) return kExitDivergence;
  return kExitValidation;
}

namespace {

std::size_t jobs_of(const RunConfig& c) { return c.jobs == 0 ? default_jobs() : c.jobs; }

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::string in_output_dir(const RunConfig& c, const std::string& name) {
  return (fs::path(c.resolved_output_dir()) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ValidationError("write to '" + path + "' failed");
}

// Training must never read the fixed evaluation rows.
void refuse_test_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  char magic[8] = {};
  in.read(magic, 8);
  if (in.gcount() == 8 && std::string(magic, 8) == io::kSetMagic) {
    throw ValidationError("'" + path + "' is a fixed test set; training only reads pair files");
  }
}

std::vector<io::NamedTensor> model_tensors(const TransitionModel& m, const std::string& prefix) {
  std::vector<io::NamedTensor> out;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    out.push_back({prefix + "." + m.names()[i], m.params()[i]});
    out.push_back({prefix + "_ema." + m.names()[i], m.ema().shadow()[i]});
  }
  return out;
}

TransitionModel restore_model(const io::Json& shape_json, Direction dir, double ema_decay,
                              const std::vector<io::NamedTensor>& tensors, const std::string& prefix) {
  ModelShape shape;
  shape.D = shape_json.at("D").get<std::size_t>();
  shape.S = shape_json.at("S").get<std::size_t>();
  shape.steps = shape_json.at("steps").get<std::size_t>();
  shape.hidden = shape_json.at("hidden").get<std::size_t>();
  shape.layers = shape_json.at("layers").get<std::size_t>();
  shape.arch = shape_json.at("arch").get<std::string>() == "tabular" ? Architecture::tabular : Architecture::mlp;
  TransitionModel m(shape, dir, 0, ema_decay);
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    const Tensor& p = io::find_tensor(tensors, prefix + "." + m.names()[i]);
    const Tensor& e = io::find_tensor(tensors, prefix + "_ema." + m.names()[i]);
    if (p.shape() != m.params()[i].shape() || e.shape() != p.shape()) {
      throw CorruptFileError("checkpoint: tensor '" + prefix + "." + m.names()[i] + "' has the wrong shape");
    }
    m.params()[i] = p;
    m.ema().shadow()[i] = e;
  }
  return m;
}

// Holds a coarsened forward process together with the matching context that refers to it.
struct LocalChain {
  explicit LocalChain(ReferenceProcess p) : proc(std::move(p)), ctx(proc) {}
  ReferenceProcess proc;
  LightMatchingContext ctx;
};

}  // namespace

// --- checkpoints -----------------------------------------------------------------

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  io::Json header;
  header["role"] = "model";
  header["method"] = to_string(ckpt.method);
  header["loss"] = ckpt.loss;
  header["solver_steps"] = ckpt.solver_steps;
  header["pair_hash"] = ckpt.pair_hash;
  header["config"] = ckpt.config;
  header["updates"] = ckpt.updates;
  std::vector<io::NamedTensor> tensors;
  if (ckpt.field) {
    const auto params = field_to_params(*ckpt.field);
    tensors.push_back({"log_beta", params[0]});
    for (std::size_t d = 1; d < params.size(); ++d) tensors.push_back({"log_core" + std::to_string(d - 1), params[d]});
    header["field"] = {{"K", ckpt.field->K}, {"D", ckpt.field->D}, {"S", ckpt.field->S}};
  } else {
    if (!ckpt.forward || !ckpt.backward) throw ValidationError("checkpoint: matching solver without models");
    const ModelShape& s = ckpt.forward->shape();
    header["model"] = {{"D", s.D},           {"S", s.S},
                       {"steps", s.steps},   {"hidden", s.hidden},
                       {"layers", s.layers}, {"arch", to_string(s.arch)},
                       {"ema_decay", ckpt.forward->ema().decay()}};
    for (auto& t : model_tensors(*ckpt.forward, "forward")) tensors.push_back(std::move(t));
    for (auto& t : model_tensors(*ckpt.backward, "backward")) tensors.push_back(std::move(t));
  }
  io::Bytes payload;
  header["tensors"] = io::pack_tensors(tensors, payload);
  ensure_parent(path);
  io::write_container(path, io::kModelMagic, header, payload);
}

Checkpoint load_checkpoint(const std::string& path) {
  const io::Container c = io::read_container(path, io::kModelMagic, "model");
  const io::Json& h = c.header;
  Checkpoint ckpt;
  try {
    ckpt.method = parse_method(h.at("method").get<std::string>());
    ckpt.loss = h.at("loss").get<std::string>();
    ckpt.solver_steps = h.at("solver_steps").get<std::size_t>();
    ckpt.pair_hash = h.at("pair_hash").get<std::string>();
    ckpt.config = h.at("config");
    ckpt.updates = h.at("updates").get<std::size_t>();
    const auto tensors = io::unpack_tensors(h.at("tensors"), c.payload);
    if (h.contains("field")) {
      const std::size_t D = h["field"].at("D").get<std::size_t>();
      std::vector<Tensor> params{io::find_tensor(tensors, "log_beta")};
      for (std::size_t d = 0; d < D; ++d) params.push_back(io::find_tensor(tensors, "log_core" + std::to_string(d)));
      ckpt.field = params_to_field(params);
    } else {
      const io::Json& m = h.at("model");
      const double decay = m.at("ema_decay").get<double>();
      ckpt.forward.emplace(restore_model(m, Direction::forward, decay, tensors, "forward"));
      ckpt.backward.emplace(restore_model(m, Direction::backward, decay, tensors, "backward"));
    }
  } catch (const io::Json::exception& e) {
    throw CorruptFileError("checkpoint '" + path + "': malformed header (" + e.what() + ")");
  }
  return ckpt;
}

BatchSampler checkpoint_sampler(const Checkpoint& ckpt, const BenchmarkPair& pair) {
  if (ckpt.field) {
    if (ckpt.field->D != pair.D() || ckpt.field->S != pair.S()) {
      throw ValidationError("checkpoint field does not match the pair's (D, S)");
    }
    // Both light solvers learn an SB-form field, so x1 | x0 is drawn in closed form.
    auto sampler = std::make_shared<ConditionalSampler>(*ckpt.field, pair.process());
    return [sampler](RngStream& rng, const SampleBatch& x0) {
      SampleBatch out(x0.D, x0.S, x0.rows());
      for (std::size_t i = 0; i < x0.rows(); ++i) sampler->sample(rng, x0.row(i), out.row(i));
      return out;
    };
  }
  const TransitionModel& fwd = *ckpt.forward;
  if (fwd.shape().D != pair.D() || fwd.shape().S != pair.S()) {
    throw ValidationError("checkpoint model does not match the pair's (D, S)");
  }
  auto local = std::make_shared<LocalChain>(pair.process().coarsened(fwd.shape().steps));
  return [local, &fwd](RngStream& rng, const SampleBatch& x0) {
    return chain_sample(rng, fwd.shape(), fwd.ema().shadow(), local->ctx, x0);
  };
}

BatchSampler ground_truth_batch_sampler(const BenchmarkPair& pair) {
  return [&pair](RngStream& rng, const SampleBatch& x0) {
    SampleBatch out(x0.D, x0.S, x0.rows());
    for (std::size_t i = 0; i < x0.rows(); ++i) pair.sample_x1_given_x0(rng, x0.row(i), out.row(i));
    return out;
  };
}

X1Sampler repeat_sampler(BatchSampler sampler, std::size_t S) {
  return [sampler = std::move(sampler), S](RngStream& rng, std::span<const std::uint16_t> x0, std::size_t count) {
    SampleBatch start(x0.size(), S);
    start.data.reserve(count * x0.size());
    for (std::size_t i = 0; i < count; ++i) start.append(x0);
    return sampler(rng, start);
  };
}

// --- generate --------------------------------------------------------------------

GenerateOutput generate(const RunConfig& config, std::string pair_path, std::string test_path, std::ostream& log) {
  if (pair_path.empty()) pair_path = in_output_dir(config, "pair.dsbpair");
  if (test_path.empty()) test_path = in_output_dir(config, "test.dsbset");
  // Only the sections that define the pair, so its content hash does not
  // depend on where it was written or which solver runs next.
  const io::Json full = to_json(config);
  io::Json echo;
  for (const char* section : {"space", "reference", "benchmark"}) echo[section] = full.at(section);
  const BenchmarkPair pair = generate_pair(config.pair);
  ensure_parent(pair_path);
  io::save_pair(pair, pair_path, io::Json{{"config", echo}});
  GenerateOutput out;
  out.pair_path = pair_path;
  out.test_path = test_path;
  out.pair_hash = io::file_content_hash(pair_path);
  const TestSet set = generate_test_set(pair, config.test_count, config.test_seed, jobs_of(config));
  ensure_parent(test_path);
  io::save_test_set(set, test_path, out.pair_hash, io::Json{{"config", echo}});
  out.test_rows = set.rows();

  log << "pair      " << pair_path << " (" << out.pair_hash << ")\n";
  log << "test set  " << test_path << " (" << out.test_rows << " rows)\n";
  if (set.rows() > 0) {
    out.modes = pair.D() >= 2 ? count_modes_2d(set.x1, 0, 1) : count_modes_1d(marginal_histogram(set.x1, 0));
    for (std::size_t d = 0; d < pair.D(); ++d) out.entropies.push_back(entropy(marginal_histogram(set.x1, d)));
    double mean_h = 0.0;
    for (double h : out.entropies) mean_h += h;
    mean_h /= static_cast<double>(out.entropies.size());
    log << "x1 modes  " << out.modes << (pair.D() >= 2 ? " (dims 0,1)" : "") << "\n";
    log << "x1 marginal entropy: mean " << mean_h << " nats (uniform " << std::log(static_cast<double>(pair.S()))
        << ")\n";
  }
  return out;
}

// --- train -----------------------------------------------------------------------

TrainOutput train(const RunConfig& config, const std::string& pair_path, std::string checkpoint_path,
                  std::string log_path, std::ostream& log) {
  refuse_test_set(pair_path);
  const BenchmarkPair pair = io::load_pair(pair_path);
  const std::string pair_hash = io::file_content_hash(pair_path);
  const std::string method = to_string(config.method);
  const std::size_t steps = config.method == Method::dlightsb ? pair.config().steps : config.solver_steps();
  const std::string tag = method + "_" + (config.method == Method::dlightsb ? std::string("-") : to_string(config.loss)) +
                          "_n" + std::to_string(steps);
  if (checkpoint_path.empty()) checkpoint_path = in_output_dir(config, tag + ".dsbmodel");
  if (log_path.empty()) log_path = in_output_dir(config, tag + ".log.csv");
  if (pair.config().steps % steps != 0) {
    throw ValidationError("solver_steps = " + std::to_string(steps) + " does not divide the pair's " +
                          std::to_string(pair.config().steps) + " steps");
  }

  Checkpoint ckpt;
  ckpt.method = config.method;
  ckpt.loss = config.method == Method::dlightsb ? "-" : to_string(config.loss);
  ckpt.solver_steps = steps;
  ckpt.pair_hash = pair_hash;
  ckpt.config = to_json(config);
  ckpt.config["pair"] = io::to_json(pair.config());

  std::ostringstream csv;
  csv << "step,iteration,direction,loss\n";
  csv.precision(10);
  const auto start = std::chrono::steady_clock::now();
  log << method << " (" << ckpt.loss << ", N+1 = " << steps << ") on " << pair_path << "\n";
  auto light_progress = [&](std::size_t step, double loss) {
    csv << step << ",0,-," << loss << "\n";
    if (step % (config.light.log_every * 10) == 0) log << "  step " << step << "  loss " << loss << "\n";
  };
  auto matching_progress = [&](const TrainLogRow& r) {
    csv << r.step << ',' << r.iteration << ',' << r.direction << ',' << r.loss << "\n";
    if (r.step % (config.csbm.log_every * 10) == 0) {
      log << "  step " << r.step << "  iter " << r.iteration << "  " << r.direction << "  loss " << r.loss << "\n";
    }
  };
  switch (config.method) {
    case Method::dlightsb: {
      LightResult r = train_dlightsb(pair, config.light, light_progress);
      ckpt.field = std::move(r.field);
      ckpt.updates = r.updates;
      break;
    }
    case Method::dlightsb_m: {
      LightResult r = train_dlightsb_m(pair, config.light, light_progress);
      ckpt.field = std::move(r.field);
      ckpt.updates = r.updates;
      break;
    }
    case Method::csbm: {
      MatchingResult r = train_csbm(pair, config.csbm, matching_progress);
      ckpt.forward.emplace(std::move(r.forward));
      ckpt.backward.emplace(std::move(r.backward));
      ckpt.updates = r.updates;
      break;
    }
    case Method::alpha_csbm: {
      MatchingResult r = train_alpha_csbm(pair, config.alpha, matching_progress);
      ckpt.forward.emplace(std::move(r.forward));
      ckpt.backward.emplace(std::move(r.backward));
      ckpt.updates = r.updates;
      break;
    }
  }
  TrainOutput out;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.updates = ckpt.updates;
  out.checkpoint_path = checkpoint_path;
  out.log_path = log_path;
  save_checkpoint(ckpt, checkpoint_path);
  write_text(log_path, csv.str());
  log << "done: " << out.updates << " updates in " << out.seconds << " s\n";
  log << "checkpoint " << checkpoint_path << "\nlog        " << log_path << "\n";
  return out;
}

// --- eval ------------------------------------------------------------------------

MetricsReport evaluate(const RunConfig& config, const EvalOptions& options, std::ostream& log) {
  const BenchmarkPair pair = io::load_pair(options.pair_path);
  const std::string pair_hash = io::file_content_hash(options.pair_path);
  const io::LoadedTestSet test = io::load_test_set(options.test_path);
  if (test.pair_hash != pair_hash) {
    throw ValidationError("test set '" + options.test_path + "' belongs to pair " + test.pair_hash + ", not " +
                          pair_hash);
  }
  if (test.set.rows() == 0) throw ValidationError("test set '" + options.test_path + "' is empty");

  MetricsReport report;
  report.D = pair.D();
  report.S = pair.S();
  report.kind = to_string(pair.config().kind);
  report.gamma = pair.config().gamma;
  report.pair_hash = pair_hash;
  report.test_rows = test.set.rows();
  report.config = to_json(config);
  report.config["pair"] = io::to_json(pair.config());

  std::optional<Checkpoint> ckpt;
  BatchSampler sampler;
  if (options.ground_truth) {
    report.method = "ground-truth";
    report.loss = "-";
    report.steps = pair.config().steps;
    sampler = ground_truth_batch_sampler(pair);
  } else {
    ckpt = load_checkpoint(options.checkpoint_path);
    if (ckpt->pair_hash != pair_hash) {
      throw ValidationError("checkpoint '" + options.checkpoint_path + "' was trained on pair " + ckpt->pair_hash +
                            ", not " + pair_hash);
    }
    report.method = to_string(ckpt->method);
    report.loss = ckpt->loss;
    report.steps = ckpt->solver_steps;
    report.config["training"] = ckpt->config;
    sampler = checkpoint_sampler(*ckpt, pair);
  }

  // Unconditional scores: one solver draw per test x0, in fixed-size blocks.
  const std::size_t rows = test.set.rows();
  constexpr std::size_t kBlock = 1024;
  const std::size_t blocks = (rows + kBlock - 1) / kBlock;
  std::vector<SampleBatch> parts(blocks, SampleBatch(pair.D(), pair.S()));
  const RngStream base(config.metrics.seed, stream_tag::eval_test_set);
  parallel_for(blocks, jobs_of(config), [&](std::size_t b) {
    const std::size_t lo = b * kBlock, hi = std::min(rows, lo + kBlock);
    SampleBatch x0(pair.D(), pair.S());
    for (std::size_t i = lo; i < hi; ++i) x0.append(test.set.x0.row(i));
    RngStream rng = base.split(b);
    parts[b] = sampler(rng, x0);
  });
  SampleBatch pred(pair.D(), pair.S());
  for (const auto& p : parts) pred.data.insert(pred.data.end(), p.data.begin(), p.data.end());
  report.shape = shape_score(test.set.x1, pred);
  if (pair.D() >= 2) report.trend = trend_score(test.set.x1, pred);
  log << report.method << " on " << options.test_path << ": SSM " << report.shape.mean;
  if (report.trend) log << "  TSM " << report.trend->mean;
  log << "\n";

  if (options.conditional) {
    ConditionalConfig cc = config.metrics;
    cc.jobs = jobs_of(config);
    report.conditional = conditional_scores(pair, repeat_sampler(sampler, pair.S()), cc);
    log << "conditional (" << cc.n_x0 << " x " << cc.n_per << "): SSM " << report.conditional->shape.mean;
    if (pair.D() >= 2) log << "  TSM " << report.conditional->trend.mean;
    log << "  (per-x0 SSM " << report.conditional->shape_per_x0 << ")\n";
  }

  if (!options.out_prefix.empty()) {
    write_text(options.out_prefix + ".json", to_json(report).dump(2) + "\n");
    write_text(options.out_prefix + ".csv", csv_header() + "\n" + csv_row(report) + "\n");
    write_text(options.out_prefix + ".hist.csv", histogram_csv(test.set.x1, pred, "real", "pred"));
    log << "wrote " << options.out_prefix << ".{json,csv,hist.csv}\n";
  }
  return report;
}

// --- verify ----------------------------------------------------------------------

std::vector<CheckResult> verify(const RunConfig& config, const std::string& pair_path, std::ostream& log) {
  const BenchmarkPair pair = pair_path.empty() ? generate_pair(config.pair) : io::load_pair(pair_path);
  const std::size_t S = pair.S(), D = pair.D();
  const double states = std::pow(static_cast<double>(S), static_cast<double>(D));
  if (states > 1e6) {
    throw ValidationError("verify needs an enumerable space (S^D <= 1e6), got " + std::to_string(S) + "^" +
                          std::to_string(D));
  }
  const std::size_t X = oracle::state_count(S, D);
  const ReferenceProcess& proc = pair.process();
  std::vector<CheckResult> checks;
  auto add = [&](CheckResult r) {
    log << (r.passed ? "PASS  " : "FAIL  ") << r.name << "  residual " << r.residual << "  tol " << r.tolerance;
    if (!r.note.empty()) log << "  (" << r.note << ")";
    log << "\n";
    checks.push_back(std::move(r));
  };

  {  // Kernel powers: closed form for uniform, row sums for both kinds.
    double worst = 0.0;
    for (std::size_t n = 0; n <= proc.steps(); ++n) {
      const Tensor& p = proc.power(n);
      for (std::size_t r = 0; r < S; ++r) {
        double sum = 0.0;
        for (double v : p.row(r)) sum += v;
        worst = std::max(worst, std::abs(sum - 1.0));
      }
      if (pair.config().kind == ReferenceKind::uniform) {
        const Tensor closed = uniform_power_closed_form(S, pair.config().gamma, n);
        const Tensor squared = matrix_power(proc.transition(), n);
        for (std::size_t i = 0; i < closed.size(); ++i) {
          worst = std::max(worst, std::abs(closed.data()[i] - squared.data()[i]));
        }
      }
    }
    add({"kernel powers", worst <= 1e-12, worst, 1e-12,
         pair.config().kind == ReferenceKind::uniform ? "closed form vs squaring, row sums" : "row sums"});
  }

  // Sample of source points for the per-x0 suites.
  std::vector<std::size_t> x0s;
  RngStream pick(pair.config().seed, 0x4001);
  if (X <= 32) {
    for (std::size_t i = 0; i < X; ++i) x0s.push_back(i);
  } else {
    for (int i = 0; i < 32; ++i) x0s.push_back(pick.below(X));
  }

  {  // Closed-form conditional vs enumeration.
    double worst = 0.0;
    for (auto i : x0s) {
      const auto x0 = oracle::decode_state(i, S, D);
      const auto e = oracle::enumerate_conditional(pair.field(), proc, x0);
      worst = std::max(worst, std::abs(e.log_normalizer - pair.sampler().log_normalizer(x0)));
      for (std::size_t j = 0; j < X; ++j) {
        const auto x1 = oracle::decode_state(j, S, D);
        worst = std::max(worst, std::abs(std::exp(pair.sampler().log_prob(x0, x1)) - e.probs[j]));
      }
    }
    add({"factorized conditional vs enumeration", worst <= 1e-10, worst, 1e-10,
         std::to_string(x0s.size()) + " source points"});
  }

  if (X <= 4096) {  // Construction vs entropic OT.
    const Tensor built = oracle::construction_coupling(pair);
    const auto p0 = oracle::dense_source(pair.config().source, S, D);
    const auto p1 = oracle::target_marginal(built);
    try {
      const auto ot = oracle::sinkhorn(p0, p1, oracle::reference_cost(proc, D), {.tol = 1e-10});
      const double tv = oracle::total_variation(built.data(), ot.coupling.data());
      add({"construction vs Sinkhorn", tv <= 1e-6, tv, 1e-6,
           std::to_string(ot.iterations) + " iterations, marginal residual " +
               std::to_string(std::max(ot.row_residual, ot.col_residual))});
    } catch (const NotConvergedError& e) {
      add({"construction vs Sinkhorn", false, std::max(e.row_residual(), e.col_residual()), 1e-10,
           "Sinkhorn did not converge"});
    }
  } else {
    log << "SKIP  construction vs Sinkhorn  (|X| = " << X << " exceeds the dense limit 4096)\n";
  }

  if (static_cast<double>(X) * static_cast<double>(X) * static_cast<double>(proc.steps()) <= 2e8) {
    // Chaining the SB transitions over every path reproduces the conditional.
    const auto transition = oracle::enumerated_sb_transition(pair.field(), proc);
    double worst = 0.0;
    const std::size_t n = std::min<std::size_t>(x0s.size(), 8);
    for (std::size_t k = 0; k < n; ++k) {
      const auto x0 = oracle::decode_state(x0s[k], S, D);
      const auto law = oracle::enumerate_path_marginal(proc, D, transition, x0);
      const auto e = oracle::enumerate_conditional(pair.field(), proc, x0);
      for (std::size_t j = 0; j < X; ++j) worst = std::max(worst, std::abs(law[j] - e.probs[j]));
    }
    add({"transition chaining vs conditional", worst <= 1e-8, worst, 1e-8, std::to_string(n) + " source points"});
  } else {
    log << "SKIP  transition chaining  (|X|^2 * steps too large)\n";
  }
  return checks;
}

// --- report ----------------------------------------------------------------------

std::vector<std::string> expand_glob(const std::string& pattern) {
  const fs::path p(pattern);
  const std::string name = p.filename().string();
  if (name.find_first_of("*?") == std::string::npos) return {pattern};
  std::string rx;
  for (char ch : name) {
    if (ch == '*') {
      rx += ".*";
    } else if (ch == '?') {
      rx += '.';
    } else if (std::string("\\^$.|+()[]{}").find(ch) != std::string::npos) {
      rx += '\\';
      rx += ch;
    } else {
      rx += ch;
    }
  }
  const std::regex re(rx);
  const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
  std::set<std::string> found;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && std::regex_match(entry.path().filename().string(), re)) {
        found.insert((p.has_parent_path() ? entry.path() : entry.path().filename()).string());
      }
    }
  }
  return {found.begin(), found.end()};
}

std::string histogram_csv(const SampleBatch& a, const SampleBatch& b, const std::string& name_a,
                          const std::string& name_b) {
  if (a.D != b.D || a.S != b.S) throw ValidationError("histogram: batches differ in (S, D)");
  const std::size_t S = a.S;
  const std::size_t cols = a.D >= 2 ? S : 1;
  std::vector<double> ha(S * cols, 0.0), hb(S * cols, 0.0);
  auto fill = [&](const SampleBatch& x, std::vector<double>& h) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const auto row = x.row(r);
      h[row[0] * cols + (x.D >= 2 ? row[1] : 0)] += 1.0;
    }
  };
  fill(a, ha);
  fill(b, hb);
  std::ostringstream out;
  out << "i,j," << name_a << ',' << name_b << "\n";
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < cols; ++j) out << i << ',' << j << ',' << ha[i * cols + j] << ',' << hb[i * cols + j] << "\n";
  return out.str();
}

ReportOutput report(const std::vector<std::string>& csv_patterns, const std::vector<std::string>& test_paths,
                    const std::string& out_dir, std::ostream& log) {
  std::vector<ResultRow> rows;
  std::size_t files = 0;
  for (const auto& pattern : csv_patterns) {
    const bool globbed = pattern.find_first_of("*?") != std::string::npos;
    for (const auto& path : expand_glob(pattern)) {
      std::ifstream in(path);
      if (!in) throw ValidationError("cannot read '" + path + "'");
      std::stringstream buf;
      buf << in.rdbuf();
      // Patterns also match logs and plot data; only explicit paths must be result files.
      if (globbed && !buf.str().starts_with("schema_version,")) continue;
      for (auto& r : parse_result_csv(buf.str(), path)) rows.push_back(std::move(r));
      ++files;
    }
  }
  if (rows.empty()) throw ValidationError("report: no result rows found");
  ReportOutput out;
  out.table = aggregate_table(rows);
  const std::string table_path = (fs::path(out_dir) / "table.csv").string();
  write_text(table_path, out.table);
  out.written.push_back(table_path);
  for (const auto& path : test_paths) {
    const io::LoadedTestSet t = io::load_test_set(path);
    const std::string plot = (fs::path(out_dir) / ("plot_" + t.pair_hash.substr(0, 12) + ".csv")).string();
    write_text(plot, histogram_csv(t.set.x0, t.set.x1, "x0", "x1"));
    out.written.push_back(plot);
  }
  log << rows.size() << " rows from " << files << " file(s)\n" << out.table;
  for (const auto& w : out.written) log << "wrote " << w << "\n";
  return out;
}

}  // namespace dsb::cli
