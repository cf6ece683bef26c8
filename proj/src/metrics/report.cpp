#include "dsb/metrics/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

#include "dsb/core/error.hpp"

namespace dsb {

namespace {

io::Json score_json(const ScoreSet& s) { return io::Json{{"mean", s.mean}, {"items", s.items}}; }

io::Json number_or_null(double v) { return std::isfinite(v) ? io::Json(v) : io::Json(nullptr); }

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& cell) {
  if (cell.empty()) return std::nan("");
  try {
    return std::stod(cell);
  } catch (const std::exception&) {
    throw ValidationError("result csv: bad number '" + cell + "'");
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

io::Json to_json(const MetricsReport& r) {
  io::Json j;
  j["schema_version"] = io::kSchemaVersion;
  j["method"] = r.method;
  j["loss"] = r.loss;
  j["steps"] = r.steps;
  j["D"] = r.D;
  j["S"] = r.S;
  j["kind"] = r.kind;
  j["gamma"] = r.gamma;
  j["test_rows"] = r.test_rows;
  j["shape"] = score_json(r.shape);
  j["trend"] = r.trend ? score_json(*r.trend) : io::Json(nullptr);
  if (r.conditional) {
    const auto& c = *r.conditional;
    j["conditional"] = {
        {"n_x0", c.n_x0},
        {"n_per", c.n_per},
        {"shape", score_json(c.shape)},
        {"trend", c.trend.items.empty() ? io::Json(nullptr) : score_json(c.trend)},
        {"shape_per_x0", number_or_null(c.shape_per_x0)},
        {"trend_per_x0", number_or_null(c.trend_per_x0)},
    };
  } else {
    j["conditional"] = nullptr;
  }
  j["pair_hash"] = r.pair_hash;
  j["config"] = r.config;
  return j;
}

std::vector<std::string> csv_columns() {
  return {"schema_version", "method", "loss", "steps", "D", "kind", "gamma", "S",
          "ssm", "tsm", "cond_ssm", "cond_tsm", "cond_ssm_per_x0", "cond_tsm_per_x0",
          "test_rows", "n_x0", "n_per", "pair_hash"};
}

std::string csv_header() {
  std::string out;
  for (const auto& c : csv_columns()) out += (out.empty() ? "" : ",") + c;
  return out;
}

std::string csv_row(const MetricsReport& r) {
  const double nan = std::nan("");
  const auto* c = r.conditional ? &*r.conditional : nullptr;
  std::vector<std::string> cells = {
      std::to_string(io::kSchemaVersion),
      r.method,
      r.loss,
      std::to_string(r.steps),
      std::to_string(r.D),
      r.kind,
      fmt(r.gamma),
      std::to_string(r.S),
      fmt(r.shape.mean),
      fmt(r.trend ? r.trend->mean : nan),
      fmt(c ? c->shape.mean : nan),
      fmt(c ? c->trend.mean : nan),
      fmt(c ? c->shape_per_x0 : nan),
      fmt(c ? c->trend_per_x0 : nan),
      std::to_string(r.test_rows),
      c ? std::to_string(c->n_x0) : "0",
      c ? std::to_string(c->n_per) : "0",
      r.pair_hash,
  };
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
  return out;
}

std::vector<ResultRow> parse_result_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (header.empty()) {
      header = std::move(cells);
      if (header.empty() || header.front() != "schema_version") {
        throw ValidationError(origin + ": not a result csv");
      }
      continue;
    }
    if (cells.size() != header.size()) throw ValidationError(origin + ": ragged row");
    std::map<std::string, std::string> m;
    for (std::size_t i = 0; i < header.size(); ++i) m[header[i]] = cells[i];
    ResultRow row;
    row.schema_version = std::stoi(m["schema_version"]);
    if (row.schema_version != io::kSchemaVersion) {
      throw VersionMismatchError(origin + ": schema version " + m["schema_version"] + ", expected " +
                                 std::to_string(io::kSchemaVersion));
    }
    row.method = m["method"];
    row.loss = m["loss"];
    row.kind = m["kind"];
    row.pair_hash = m["pair_hash"];
    row.steps = static_cast<std::size_t>(std::stoul(m["steps"]));
    row.D = static_cast<std::size_t>(std::stoul(m["D"]));
    row.gamma = parse_number(m["gamma"]);
    row.ssm = parse_number(m["ssm"]);
    row.tsm = parse_number(m["tsm"]);
    row.cond_ssm = parse_number(m["cond_ssm"]);
    row.cond_tsm = parse_number(m["cond_tsm"]);
    rows.push_back(row);
  }
  return rows;
}

std::string aggregate_table(const std::vector<ResultRow>& input) {
  std::vector<ResultRow> rows = input;
  auto setup = [](const ResultRow& r) { return std::make_tuple(r.D, r.kind, r.gamma); };
  std::stable_sort(rows.begin(), rows.end(), [&](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.D, a.kind, a.gamma, a.method, a.loss, a.steps) <
           std::tie(b.D, b.kind, b.gamma, b.method, b.loss, b.steps);
  });
  using Getter = double ResultRow::*;
  const std::vector<std::pair<std::string, Getter>> families = {
      {"ssm", &ResultRow::ssm}, {"tsm", &ResultRow::tsm},
      {"cond_ssm", &ResultRow::cond_ssm}, {"cond_tsm", &ResultRow::cond_tsm}};
  std::ostringstream out;
  out << "D,kind,gamma,method,loss,steps,ssm,tsm,cond_ssm,cond_tsm,best\n";
  for (const auto& r : rows) {
    std::string best;
    for (const auto& [name, field] : families) {
      const double v = r.*field;
      if (!std::isfinite(v)) continue;
      bool top = true;
      for (const auto& o : rows) {
        if (setup(o) == setup(r) && std::isfinite(o.*field) && o.*field > v) top = false;
      }
      if (top) best += (best.empty() ? "" : ";") + name;
    }
    out << r.D << ',' << r.kind << ',' << fmt(r.gamma) << ',' << r.method << ',' << r.loss << ',' << r.steps
        << ',' << fmt(r.ssm) << ',' << fmt(r.tsm) << ',' << fmt(r.cond_ssm) << ',' << fmt(r.cond_tsm) << ','
        << best << '\n';
  }
  return out.str();
}

}  // namespace dsb
