#include "sll/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace sll {

std::string normalize_text(const std::string& s) {
  std::string lowered;
  lowered.reserve(s.size());
  for (char c : s) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  // Collapse whitespace runs into single spaces.
  std::string collapsed;
  bool in_space = true;
  for (char c : lowered) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space && !collapsed.empty()) collapsed.push_back(' ');
      in_space = true;
    } else {
      collapsed.push_back(c);
      in_space = false;
    }
  }
  while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
  while (!collapsed.empty() &&
         (collapsed.back() == '.' || collapsed.back() == '!' || collapsed.back() == '?')) {
    collapsed.pop_back();
    while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
  }
  return collapsed;
}

double score_em(const std::string& prediction, const std::string& gold) {
  return normalize_text(prediction) == normalize_text(gold) ? 100.0 : 0.0;
}

namespace {
std::map<std::string, int> token_bag(const std::string& s) {
  std::map<std::string, int> bag;
  std::istringstream is(s);
  std::string w;
  while (is >> w) bag[w] += 1;
  return bag;
}
}  // namespace

double score_nf1(const std::string& prediction, const std::string& gold) {
  const auto p = token_bag(normalize_text(prediction));
  const auto g = token_bag(normalize_text(gold));
  if (p.empty() && g.empty()) return 100.0;
  if (p.empty() || g.empty()) return 0.0;
  int64_t overlap = 0, np = 0, ng = 0;
  for (const auto& [w, c] : p) np += c;
  for (const auto& [w, c] : g) ng += c;
  for (const auto& [w, c] : p) {
    auto it = g.find(w);
    if (it != g.end()) overlap += std::min(c, it->second);
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(np);
  const double recall = static_cast<double>(overlap) / static_cast<double>(ng);
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

double score(MetricKind kind, const std::string& prediction, const std::string& gold) {
  return kind == MetricKind::ExactMatch ? score_em(prediction, gold) : score_nf1(prediction, gold);
}

void ResultMatrix::add_row(std::vector<double> row) {
  if (static_cast<int64_t>(row.size()) != n() + 1) {
    throw ContractError("ResultMatrix: row " + std::to_string(n()) + " must have " +
                        std::to_string(n() + 1) + " entries, got " + std::to_string(row.size()));
  }
  for (double v : row) {
    if (v < 0.0 || v > 100.0) throw ContractError("ResultMatrix: score outside [0,100]");
  }
  rows.push_back(std::move(row));
}

double ResultMatrix::at(int64_t i, int64_t j) const {
  if (i < 0 || i >= n() || j < 0 || j > i) {
    throw IndexError("ResultMatrix: (" + std::to_string(i) + "," + std::to_string(j) +
                     ") outside the lower triangle");
  }
  return rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
}

double avg_score(const ResultMatrix& r) {
  if (r.n() == 0) throw ContractError("avg_score: empty matrix");
  const auto& last = r.rows.back();
  if (static_cast<int64_t>(last.size()) != r.n()) {
    throw ContractError("avg_score: final row incomplete");
  }
  double sum = 0.0;
  for (double v : last) sum += v;
  return sum / static_cast<double>(last.size());
}

std::optional<double> bwt(const ResultMatrix& r) {
  if (r.n() < 2) return std::nullopt;
  const auto& last = r.rows.back();
  double sum = 0.0;
  for (int64_t j = 0; j + 1 < r.n(); ++j) {
    sum += last[static_cast<size_t>(j)] - r.at(j, j);
  }
  return sum / static_cast<double>(r.n() - 1);
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["config"] = config;
  j["tasks"] = task_names;
  j["matrix"] = matrix.rows;
  j["avg_score"] = avg;
  if (bwt_value.has_value()) j["bwt"] = *bwt_value; else j["bwt"] = nullptr;
  nlohmann::json logs_j = nlohmann::json::array();
  for (const auto& tl : logs) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : tl.steps) {
      steps.push_back({{"step", s.step},
                       {"ce", s.ce},
                       {"teach", s.teach},
                       {"self_study", s.self_study},
                       {"lm", s.lm},
                       {"gate_open", s.gate_open},
                       {"gate_diff", s.gate_diff},
                       {"filter_rate", s.filter_rate}});
    }
    logs_j.push_back({{"task", tl.task}, {"name", tl.name}, {"steps", steps}});
  }
  j["logs"] = logs_j;
  j["wall_clock_seconds"] = wall_clock_seconds;
  return j;
}

RunReport RunReport::from_json(const nlohmann::json& j) {
  RunReport r;
  r.config = j.at("config");
  r.task_names = j.at("tasks").get<std::vector<std::string>>();
  for (const auto& row : j.at("matrix")) r.matrix.add_row(row.get<std::vector<double>>());
  r.avg = j.at("avg_score").get<double>();
  if (!j.at("bwt").is_null()) r.bwt_value = j.at("bwt").get<double>();
  for (const auto& tl : j.at("logs")) {
    TaskLog t;
    t.task = tl.at("task").get<int>();
    t.name = tl.at("name").get<std::string>();
    for (const auto& s : tl.at("steps")) {
      StepLog sl;
      sl.step = s.at("step").get<int64_t>();
      sl.ce = s.at("ce").get<double>();
      sl.teach = s.at("teach").get<double>();
      sl.self_study = s.at("self_study").get<double>();
      sl.lm = s.at("lm").get<double>();
      sl.gate_open = s.at("gate_open").get<bool>();
      sl.gate_diff = s.value("gate_diff", -1.0);
      sl.filter_rate = s.at("filter_rate").get<double>();
      t.steps.push_back(sl);
    }
    r.logs.push_back(std::move(t));
  }
  r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  return r;
}

std::string RunReport::canonical_without_timing() const {
  nlohmann::json j = to_json();
  j.erase("wall_clock_seconds");
  return j.dump();
}

std::string RunReport::to_table() const {
  std::ostringstream os;
  os << "task order:";
  for (const auto& n : task_names) os << "  " << n;
  os << "\n\n";
  char buf[64];
  for (int64_t i = 0; i < matrix.n(); ++i) {
    os << "after " << task_names[static_cast<size_t>(i)] << ":";
    for (int64_t j = 0; j <= i; ++j) {
      std::snprintf(buf, sizeof(buf), "  %6.2f", matrix.at(i, j));
      os << buf;
    }
    os << "\n";
  }
  os << "\n";
  std::snprintf(buf, sizeof(buf), "%.3f", avg);
  os << "Avg-Score  " << buf << "\n";
  if (bwt_value.has_value()) {
    std::snprintf(buf, sizeof(buf), "%.3f", *bwt_value);
    os << "BWT        " << buf << "\n";
  } else {
    os << "BWT        N/A\n";
  }
  return os.str();
}

}  // namespace sll
