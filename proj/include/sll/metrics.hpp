#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sll/errors.hpp"
#include "sll/tasks.hpp"

namespace sll {

// Lowercase, collapse whitespace, strip terminal punctuation.
std::string normalize_text(const std::string& s);

// 100 if the normalized strings match, else 0.
double score_em(const std::string& prediction, const std::string& gold);

// Token-bag F1 over normalized strings, as a percentage. Both empty -> 100;
// exactly one empty -> 0.
double score_nf1(const std::string& prediction, const std::string& gold);

double score(MetricKind kind, const std::string& prediction, const std::string& gold);

// Lower-triangular score matrix: entry (i, j), j <= i, is the test score of
// task j after task i (and its backward stage) finished.
struct ResultMatrix {
  std::vector<std::vector<double>> rows;

  int64_t n() const { return static_cast<int64_t>(rows.size()); }
  void add_row(std::vector<double> row);
  double at(int64_t i, int64_t j) const;
};

// Mean of the final row.
double avg_score(const ResultMatrix& r);

// (1/(N-1)) * sum_{j<N} (R[N-1][j] - R[j][j]); nullopt when N < 2.
std::optional<double> bwt(const ResultMatrix& r);

struct StepLog {
  int64_t step = 0;
  double ce = 0.0;
  double teach = 0.0;
  double self_study = 0.0;
  double lm = 0.0;
  bool gate_open = false;
  double gate_diff = -1.0;  // |loss_s - loss_t| when evaluated, else -1
  double filter_rate = 0.0;
};

struct TaskLog {
  int task = -1;
  std::string name;
  std::vector<StepLog> steps;
};

struct RunReport {
  nlohmann::json config;
  std::vector<std::string> task_names;
  ResultMatrix matrix;
  double avg = 0.0;
  std::optional<double> bwt_value;
  std::vector<TaskLog> logs;
  double wall_clock_seconds = 0.0;

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
  // Canonical serialization with the timing field removed; the determinism
  // contract compares these byte-for-byte.
  std::string canonical_without_timing() const;
  std::string to_table() const;
};

}  // namespace sll
