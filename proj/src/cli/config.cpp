#include "dsb/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dsb/core/error.hpp"

namespace dsb::cli {

std::string to_string(Method m) {
  switch (m) {
    case Method::dlightsb: return "dlightsb";
    case Method::dlightsb_m: return "dlightsb-m";
    case Method::csbm: return "csbm";
    case Method::alpha_csbm: return "alpha-csbm";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "dlightsb") return Method::dlightsb;
  if (name == "dlightsb-m") return Method::dlightsb_m;
  if (name == "csbm") return Method::csbm;
  if (name == "alpha-csbm") return Method::alpha_csbm;
  throw ValidationError("unknown solver '" + name + "' (expected dlightsb, dlightsb-m, csbm or alpha-csbm)");
}

std::size_t RunConfig::solver_steps() const {
  switch (method) {
    case Method::dlightsb: return pair.steps;
    case Method::dlightsb_m: return light.solver_steps;
    case Method::csbm: return csbm.solver_steps;
    case Method::alpha_csbm: return alpha.solver_steps;
  }
  return 0;
}

std::string RunConfig::resolved_output_dir() const {
  if (!output_dir.empty()) return output_dir;
  if (const char* env = std::getenv("DSB_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return ".";
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string text = trim(raw);
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ValidationError("config: " + key + " = '" + raw + "' is not a valid number");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ValidationError("config: " + key + " must be finite");
  }
  return value;
}

std::size_t to_size(const std::string& key, const std::string& raw) {
  if (trim(raw).starts_with("-")) throw ValidationError("config: " + key + " must be non-negative");
  return parse_number<std::size_t>(key, raw);
}

std::uint64_t to_u64(const std::string& key, const std::string& raw) {
  if (trim(raw).starts_with("-")) throw ValidationError("config: " + key + " must be non-negative");
  return parse_number<std::uint64_t>(key, raw);
}

double to_double(const std::string& key, const std::string& raw) { return parse_number<double>(key, raw); }

struct Key {
  std::string section;
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<io::Json(const RunConfig&)> get;
};

double& active_lr(RunConfig& c) {
  switch (c.method) {
    case Method::csbm: return c.csbm.lr;
    case Method::alpha_csbm: return c.alpha.lr;
    default: return c.light.lr;
  }
}

std::size_t& active_batch(RunConfig& c) {
  switch (c.method) {
    case Method::csbm: return c.csbm.batch;
    case Method::alpha_csbm: return c.alpha.batch;
    default: return c.light.batch;
  }
}

// Gaussian source settings are kept here until the space size is known.
struct SourceDraft {
  std::string kind = "uniform";
  double mean = std::nan("");
  double stddev = std::nan("");
};

const std::vector<Key>& keys() {
  // Every key writes to the config; matching-solver keys write both the CSBM
  // and alpha-CSBM copies where the two share a meaning.
  static const std::vector<Key> table = {
      {"run", "output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = trim(v); },
       [](const RunConfig& c) { return io::Json(c.output_dir); }},
      {"run", "jobs", [](RunConfig& c, const std::string& v) { c.jobs = to_size("run.jobs", v); },
       [](const RunConfig& c) { return io::Json(c.jobs); }},

      {"space", "D", [](RunConfig& c, const std::string& v) { c.pair.D = to_size("space.D", v); },
       [](const RunConfig& c) { return io::Json(c.pair.D); }},
      {"space", "S", [](RunConfig& c, const std::string& v) { c.pair.S = to_size("space.S", v); },
       [](const RunConfig& c) { return io::Json(c.pair.S); }},

      {"reference", "kind", [](RunConfig& c, const std::string& v) { c.pair.kind = parse_reference_kind(trim(v)); },
       [](const RunConfig& c) { return io::Json(to_string(c.pair.kind)); }},
      {"reference", "gamma", [](RunConfig& c, const std::string& v) { c.pair.gamma = to_double("reference.gamma", v); },
       [](const RunConfig& c) { return io::Json(c.pair.gamma); }},
      {"reference", "steps", [](RunConfig& c, const std::string& v) { c.pair.steps = to_size("reference.steps", v); },
       [](const RunConfig& c) { return io::Json(c.pair.steps); }},

      {"benchmark", "K", [](RunConfig& c, const std::string& v) { c.pair.K = to_size("benchmark.K", v); },
       [](const RunConfig& c) { return io::Json(c.pair.K); }},
      {"benchmark", "seed", [](RunConfig& c, const std::string& v) { c.pair.seed = to_u64("benchmark.seed", v); },
       [](const RunConfig& c) { return io::Json(c.pair.seed); }},
      {"benchmark", "mean_lo", [](RunConfig& c, const std::string& v) { c.pair.mean_lo = to_double("benchmark.mean_lo", v); },
       [](const RunConfig& c) { return io::Json(c.pair.mean_lo); }},
      {"benchmark", "mean_hi", [](RunConfig& c, const std::string& v) { c.pair.mean_hi = to_double("benchmark.mean_hi", v); },
       [](const RunConfig& c) { return io::Json(c.pair.mean_hi); }},
      {"benchmark", "core_sigma",
       [](RunConfig& c, const std::string& v) { c.pair.core_sigma = to_double("benchmark.core_sigma", v); },
       [](const RunConfig& c) { return io::Json(c.pair.core_sigma); }},
      {"benchmark", "test_count", [](RunConfig& c, const std::string& v) { c.test_count = to_size("benchmark.test_count", v); },
       [](const RunConfig& c) { return io::Json(c.test_count); }},
      {"benchmark", "test_seed", [](RunConfig& c, const std::string& v) { c.test_seed = to_u64("benchmark.test_seed", v); },
       [](const RunConfig& c) { return io::Json(c.test_seed); }},

      {"solver", "method", [](RunConfig& c, const std::string& v) { c.method = parse_method(trim(v)); },
       [](const RunConfig& c) { return io::Json(to_string(c.method)); }},
      {"solver", "loss",
       [](RunConfig& c, const std::string& v) {
         c.loss = parse_loss_kind(trim(v));
         c.light.loss = c.csbm.loss = c.alpha.loss = c.loss;
       },
       [](const RunConfig& c) { return io::Json(to_string(c.loss)); }},
      {"solver", "solver_steps",
       [](RunConfig& c, const std::string& v) {
         c.light.solver_steps = c.csbm.solver_steps = c.alpha.solver_steps = to_size("solver.solver_steps", v);
       },
       [](const RunConfig& c) { return io::Json(c.solver_steps()); }},
      {"solver", "lr", [](RunConfig& c, const std::string& v) { active_lr(c) = to_double("solver.lr", v); },
       [](const RunConfig& c) { return io::Json(active_lr(const_cast<RunConfig&>(c))); }},
      {"solver", "batch", [](RunConfig& c, const std::string& v) { active_batch(c) = to_size("solver.batch", v); },
       [](const RunConfig& c) { return io::Json(active_batch(const_cast<RunConfig&>(c))); }},
      {"solver", "seed",
       [](RunConfig& c, const std::string& v) { c.light.seed = c.csbm.seed = c.alpha.seed = to_u64("solver.seed", v); },
       [](const RunConfig& c) { return io::Json(c.light.seed); }},
      {"solver", "log_every",
       [](RunConfig& c, const std::string& v) {
         c.light.log_every = c.csbm.log_every = c.alpha.log_every = to_size("solver.log_every", v);
       },
       [](const RunConfig& c) { return io::Json(c.light.log_every); }},
      {"solver", "components", [](RunConfig& c, const std::string& v) { c.light.K = to_size("solver.components", v); },
       [](const RunConfig& c) { return io::Json(c.light.K); }},
      {"solver", "updates", [](RunConfig& c, const std::string& v) { c.light.steps = to_size("solver.updates", v); },
       [](const RunConfig& c) { return io::Json(c.light.steps); }},
      {"solver", "init_sigma",
       [](RunConfig& c, const std::string& v) { c.light.init_sigma = to_double("solver.init_sigma", v); },
       [](const RunConfig& c) { return io::Json(c.light.init_sigma); }},
      {"solver", "iterations", [](RunConfig& c, const std::string& v) { c.csbm.iterations = to_size("solver.iterations", v); },
       [](const RunConfig& c) { return io::Json(c.csbm.iterations); }},
      {"solver", "first_updates",
       [](RunConfig& c, const std::string& v) { c.csbm.first_updates = to_size("solver.first_updates", v); },
       [](const RunConfig& c) { return io::Json(c.csbm.first_updates); }},
      {"solver", "later_updates",
       [](RunConfig& c, const std::string& v) { c.csbm.later_updates = to_size("solver.later_updates", v); },
       [](const RunConfig& c) { return io::Json(c.csbm.later_updates); }},
      {"solver", "pool", [](RunConfig& c, const std::string& v) { c.csbm.pool = to_size("solver.pool", v); },
       [](const RunConfig& c) { return io::Json(c.csbm.pool); }},
      {"solver", "hidden",
       [](RunConfig& c, const std::string& v) { c.csbm.hidden = c.alpha.hidden = to_size("solver.hidden", v); },
       [](const RunConfig& c) { return io::Json(c.csbm.hidden); }},
      {"solver", "ema_decay",
       [](RunConfig& c, const std::string& v) { c.csbm.ema_decay = c.alpha.ema_decay = to_double("solver.ema_decay", v); },
       [](const RunConfig& c) { return io::Json(c.csbm.ema_decay); }},
      {"solver", "alpha", [](RunConfig& c, const std::string& v) { c.alpha.alpha = to_double("solver.alpha", v); },
       [](const RunConfig& c) { return io::Json(c.alpha.alpha); }},
      {"solver", "warmup_updates",
       [](RunConfig& c, const std::string& v) { c.alpha.warmup_updates = to_size("solver.warmup_updates", v); },
       [](const RunConfig& c) { return io::Json(c.alpha.warmup_updates); }},
      {"solver", "online_updates",
       [](RunConfig& c, const std::string& v) { c.alpha.online_updates = to_size("solver.online_updates", v); },
       [](const RunConfig& c) { return io::Json(c.alpha.online_updates); }},
      {"solver", "cache", [](RunConfig& c, const std::string& v) { c.alpha.cache = to_size("solver.cache", v); },
       [](const RunConfig& c) { return io::Json(c.alpha.cache); }},

      {"metrics", "n_x0", [](RunConfig& c, const std::string& v) { c.metrics.n_x0 = to_size("metrics.n_x0", v); },
       [](const RunConfig& c) { return io::Json(c.metrics.n_x0); }},
      {"metrics", "n_per", [](RunConfig& c, const std::string& v) { c.metrics.n_per = to_size("metrics.n_per", v); },
       [](const RunConfig& c) { return io::Json(c.metrics.n_per); }},
      {"metrics", "seed", [](RunConfig& c, const std::string& v) { c.metrics.seed = to_u64("metrics.seed", v); },
       [](const RunConfig& c) { return io::Json(c.metrics.seed); }},
  };
  return table;
}

const std::vector<std::string> kSourceKeys = {"source", "source_mean", "source_std"};

void validate(const RunConfig& c) {
  c.pair.validate();
  const std::size_t steps = c.solver_steps();
  if (steps == 0) throw ValidationError("config: solver.solver_steps must be positive");
  if (c.pair.steps % steps != 0) {
    throw ValidationError("config: solver.solver_steps = " + std::to_string(steps) +
                          " must divide reference.steps = " + std::to_string(c.pair.steps));
  }
  if (c.light.K == 0) throw ValidationError("config: solver.components must be positive");
  if (c.light.log_every == 0) throw ValidationError("config: solver.log_every must be positive");
  if (!(c.light.init_sigma > 0.0)) throw ValidationError("config: solver.init_sigma must be positive");
  for (double lr : {c.light.lr, c.csbm.lr, c.alpha.lr}) {
    if (!(lr > 0.0)) throw ValidationError("config: solver.lr must be positive");
  }
  for (std::size_t b : {c.light.batch, c.csbm.batch, c.alpha.batch}) {
    if (b == 0) throw ValidationError("config: solver.batch must be positive");
  }
  if (c.csbm.iterations == 0) throw ValidationError("config: solver.iterations must be positive");
  if (c.csbm.pool == 0 || c.alpha.cache == 0) throw ValidationError("config: solver.pool and solver.cache must be positive");
  if (c.csbm.hidden == 0) throw ValidationError("config: solver.hidden must be positive");
  if (!(c.csbm.ema_decay >= 0.0 && c.csbm.ema_decay < 1.0)) {
    throw ValidationError("config: solver.ema_decay must lie in [0, 1)");
  }
  if (!(c.alpha.alpha > 0.0 && c.alpha.alpha <= 1.0)) throw ValidationError("config: solver.alpha must lie in (0, 1]");
  if (c.method == Method::dlightsb || c.method == Method::dlightsb_m) {
    if (c.light.K > 100000) throw ValidationError("config: solver.components is unreasonably large");
  }
  if (c.metrics.n_x0 == 0 || c.metrics.n_per == 0) throw ValidationError("config: metrics.n_x0 and n_per must be positive");
}

RunConfig build(const boost::property_tree::ptree& tree, const std::vector<std::string>& overrides) {
  std::map<std::string, std::string> values;  // "section.key" -> raw value
  bool have_version = false;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      if (name != "schema_version") throw ValidationError("config: unknown top-level key '" + name + "'");
      const int version = parse_number<int>("schema_version", node.data());
      if (version != io::kSchemaVersion) {
        throw VersionMismatchError("config: schema_version " + std::to_string(version) + ", expected " +
                                   std::to_string(io::kSchemaVersion));
      }
      have_version = true;
      continue;
    }
    for (const auto& [key, leaf] : node) values[name + "." + key] = leaf.data();
  }
  if (!have_version) throw ValidationError("config: missing schema_version");
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || o.find('.') > eq) {
      throw ValidationError("override '" + o + "' is not of the form section.key=value");
    }
    values[trim(o.substr(0, eq))] = o.substr(eq + 1);
  }

  std::map<std::string, const Key*> index;
  for (const auto& k : keys()) index[k.section + "." + k.name] = &k;
  for (const auto& [full, raw] : values) {
    const bool source_key = full.starts_with("benchmark.") &&
                            std::find(kSourceKeys.begin(), kSourceKeys.end(), full.substr(10)) != kSourceKeys.end();
    if (!source_key && !index.contains(full)) throw ValidationError("config: unknown key '" + full + "'");
  }

  RunConfig c;
  // The method decides which lr/batch defaults the solver keys refer to.
  if (auto it = values.find("solver.method"); it != values.end()) index["solver.method"]->set(c, it->second);
  for (const auto& [full, raw] : values) {
    if (full == "solver.method") continue;
    if (auto it = index.find(full); it != index.end()) it->second->set(c, raw);
  }

  SourceDraft source;
  if (auto it = values.find("benchmark.source"); it != values.end()) source.kind = trim(it->second);
  if (auto it = values.find("benchmark.source_mean"); it != values.end()) {
    source.mean = to_double("benchmark.source_mean", it->second);
  }
  if (auto it = values.find("benchmark.source_std"); it != values.end()) {
    source.stddev = to_double("benchmark.source_std", it->second);
  }
  if (source.kind == "gaussian") {
    const double span = static_cast<double>(c.pair.S) - 1.0;
    c.pair.source = SourceSpec::gaussian(c.pair.D, std::isnan(source.mean) ? span / 2.0 : source.mean,
                                         std::isnan(source.stddev) ? span / 6.0 : source.stddev);
  } else if (source.kind != "uniform") {
    throw ValidationError("config: benchmark.source must be uniform or gaussian");
  } else if (!std::isnan(source.mean) || !std::isnan(source.stddev)) {
    throw ValidationError("config: source_mean/source_std apply to the gaussian source only");
  }
  c.metrics.jobs = c.jobs;
  validate(c);
  return c;
}

boost::property_tree::ptree parse_ini(const std::string& text, const std::string& origin) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  return tree;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  return build(parse_ini(text, "config"), overrides);
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return build(parse_ini(buf.str(), path), overrides);
}

RunConfig default_config(const std::vector<std::string>& overrides) {
  return parse_config("schema_version = " + std::to_string(io::kSchemaVersion) + "\n", overrides);
}

io::Json to_json(const RunConfig& config) {
  io::Json j;
  j["schema_version"] = io::kSchemaVersion;
  for (const auto& k : keys()) j[k.section][k.name] = k.get(config);
  const SourceSpec& s = config.pair.source;
  j["benchmark"]["source"] = s.kind == SourceKind::gaussian ? "gaussian" : "uniform";
  if (s.kind == SourceKind::gaussian) {
    j["benchmark"]["source_mean"] = s.mean.at(0);
    j["benchmark"]["source_std"] = s.stddev.at(0);
  }
  return j;
}

std::string to_ini(const RunConfig& config) {
  const io::Json j = to_json(config);
  std::ostringstream out;
  out << "schema_version = " << io::kSchemaVersion << "\n";
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object()) continue;
    out << "\n[" << section << "]\n";
    for (const auto& [key, value] : body.items()) {
      if (value.is_string()) {
        out << key << " = " << value.get<std::string>() << "\n";
      } else if (value.is_number_float()) {
        std::ostringstream num;
        num.precision(17);
        num << value.get<double>();
        out << key << " = " << num.str() << "\n";
      } else {
        out << key << " = " << value.dump() << "\n";
      }
    }
  }
  return out.str();
}

}  // namespace dsb::cli
