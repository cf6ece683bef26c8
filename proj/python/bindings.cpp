#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dsb/cli/commands.hpp"
#include "dsb/core/error.hpp"
#include "dsb/io/pair_io.hpp"
#include "dsb/metrics/metrics.hpp"
#include "dsb/refproc/reference.hpp"

namespace py = pybind11;
using namespace dsb;

namespace {

py::array_t<double> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

SampleBatch to_batch(const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& a,
                     std::size_t S) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-D array of shape (rows, D)");
  SampleBatch b(static_cast<std::size_t>(a.shape(1)), S, static_cast<std::size_t>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), b.data.begin());
  for (auto v : b.data) {
    if (v >= S) throw ValidationError("category out of range for S = " + std::to_string(S));
  }
  return b;
}

py::array_t<std::uint16_t> from_batch(const SampleBatch& b) {
  py::array_t<std::uint16_t> out({static_cast<py::ssize_t>(b.rows()), static_cast<py::ssize_t>(b.D)});
  std::copy(b.data.begin(), b.data.end(), out.mutable_data());
  return out;
}

py::dict scores(const ScoreSet& s) {
  py::dict d;
  d["mean"] = s.mean;
  d["items"] = s.items;
  return d;
}

cli::RunConfig config_from(const std::string& ini, const std::vector<std::string>& overrides) {
  return ini.empty() ? cli::default_config(overrides) : cli::parse_config(ini, overrides);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Discrete Schrodinger bridge benchmark toolkit";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<CorruptFileError>(m, "CorruptFileError", PyExc_IOError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("uniform_kernel", [](std::size_t S, double gamma) { return to_numpy(build_uniform(S, gamma)); },
        py::arg("S"), py::arg("gamma"));
  m.def("gaussian_kernel", [](std::size_t S, double gamma) { return to_numpy(build_gaussian(S, gamma)); },
        py::arg("S"), py::arg("gamma"));
  m.def("uniform_power",
        [](std::size_t S, double gamma, std::uint64_t n) { return to_numpy(uniform_power_closed_form(S, gamma, n)); },
        py::arg("S"), py::arg("gamma"), py::arg("n"), "Closed-form n-step power of the uniform kernel.");

  m.def("shape_score",
        [](py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast> real,
           py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast> pred, std::size_t S) {
          return scores(shape_score(to_batch(real, S), to_batch(pred, S)));
        },
        py::arg("real"), py::arg("pred"), py::arg("S"));
  m.def("trend_score",
        [](py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast> real,
           py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast> pred, std::size_t S) {
          return scores(trend_score(to_batch(real, S), to_batch(pred, S)));
        },
        py::arg("real"), py::arg("pred"), py::arg("S"));

  m.def("resolve_config",
        [](const std::string& ini, const std::vector<std::string>& overrides) {
          return cli::to_json(config_from(ini, overrides)).dump();
        },
        py::arg("ini") = "", py::arg("overrides") = std::vector<std::string>{},
        "Resolved configuration as a JSON string.");

  m.def("generate",
        [](const std::string& ini, const std::vector<std::string>& overrides, const std::string& pair_path,
           const std::string& test_path) {
          std::ostringstream log;
          const auto out = cli::generate(config_from(ini, overrides), pair_path, test_path, log);
          py::dict d;
          d["pair_path"] = out.pair_path;
          d["test_path"] = out.test_path;
          d["pair_hash"] = out.pair_hash;
          d["test_rows"] = out.test_rows;
          d["modes"] = out.modes;
          d["entropies"] = out.entropies;
          d["log"] = log.str();
          return d;
        },
        py::arg("ini") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("pair_path"),
        py::arg("test_path"));

  m.def("train",
        [](const std::string& ini, const std::vector<std::string>& overrides, const std::string& pair_path,
           const std::string& checkpoint_path, const std::string& log_path) {
          std::ostringstream log;
          const auto cfg = config_from(ini, overrides);
          cli::TrainOutput out;
          {
            py::gil_scoped_release release;
            out = cli::train(cfg, pair_path, checkpoint_path, log_path, log);
          }
          py::dict d;
          d["checkpoint_path"] = out.checkpoint_path;
          d["log_path"] = out.log_path;
          d["updates"] = out.updates;
          d["log"] = log.str();
          return d;
        },
        py::arg("ini") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("pair_path"),
        py::arg("checkpoint_path"), py::arg("log_path"));

  m.def("evaluate",
        [](const std::string& ini, const std::vector<std::string>& overrides, const std::string& pair_path,
           const std::string& test_path, const std::string& checkpoint_path, bool conditional) {
          cli::EvalOptions opt;
          opt.pair_path = pair_path;
          opt.test_path = test_path;
          opt.checkpoint_path = checkpoint_path;
          opt.ground_truth = checkpoint_path.empty();
          opt.conditional = conditional;
          std::ostringstream log;
          const auto cfg = config_from(ini, overrides);
          MetricsReport r;
          {
            py::gil_scoped_release release;
            r = cli::evaluate(cfg, opt, log);
          }
          return to_json(r).dump();
        },
        py::arg("ini") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("pair_path"),
        py::arg("test_path"), py::arg("checkpoint_path") = "", py::arg("conditional") = true,
        "Metrics report as a JSON string; an empty checkpoint scores the ground-truth sampler.");

  m.def("verify",
        [](const std::string& ini, const std::vector<std::string>& overrides, const std::string& pair_path) {
          std::ostringstream log;
          py::list out;
          for (const auto& c : cli::verify(config_from(ini, overrides), pair_path, log)) {
            py::dict d;
            d["name"] = c.name;
            d["passed"] = c.passed;
            d["residual"] = c.residual;
            d["tolerance"] = c.tolerance;
            out.append(d);
          }
          return out;
        },
        py::arg("ini") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("pair_path") = "");

  m.def("load_test_set",
        [](const std::string& path) {
          const auto t = io::load_test_set(path);
          py::dict d;
          d["x0"] = from_batch(t.set.x0);
          d["x1"] = from_batch(t.set.x1);
          d["pair_hash"] = t.pair_hash;
          d["S"] = t.set.x0.S;
          return d;
        },
        py::arg("path"));

  m.def("histogram_csv",
        [](py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast> a,
           py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast> b, std::size_t S) {
          return cli::histogram_csv(to_batch(a, S), to_batch(b, S), "a", "b");
        },
        py::arg("a"), py::arg("b"), py::arg("S"));
}
