#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsb/io/container.hpp"
#include "dsb/metrics/metrics.hpp"

namespace dsb {

/// One evaluated run, keyed by the table axes (method, loss, N+1, D, kind, gamma).
struct MetricsReport {
  std::string method;
  std::string loss;  // "-" for methods without a loss variant
  std::size_t steps = 0;
  std::size_t D = 0;
  std::size_t S = 0;
  std::string kind;
  double gamma = 0.0;

  ScoreSet shape;  // unconditional, on the fixed test set
  std::optional<ScoreSet> trend;
  std::optional<ConditionalScores> conditional;
  std::size_t test_rows = 0;

  std::string pair_hash;
  io::Json config;  // resolved run configuration
};

io::Json to_json(const MetricsReport& report);

std::vector<std::string> csv_columns();
std::string csv_header();
std::string csv_row(const MetricsReport& report);

/// A parsed result row for aggregation. Scores missing in the source are NaN.
struct ResultRow {
  int schema_version = 0;
  std::string method, loss, kind, pair_hash;
  std::size_t steps = 0, D = 0;
  double gamma = 0.0;
  double ssm = 0.0, tsm = 0.0, cond_ssm = 0.0, cond_tsm = 0.0;
};

// Parses a CSV produced by csv_header()/csv_row(). Throws VersionMismatchError
// on a schema version other than the current one.
std::vector<ResultRow> parse_result_csv(const std::string& text, const std::string& origin);

// Table over all rows, sorted by setup then method. The `best` column names the
// score families where the row is the maximum among rows of the same setup
// (D, kind, gamma).
std::string aggregate_table(const std::vector<ResultRow>& rows);

}  // namespace dsb
