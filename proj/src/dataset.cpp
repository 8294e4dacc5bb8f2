#include "cogdiag/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cogdiag/errors.hpp"
#include "cogdiag/rng.hpp"

namespace cogdiag {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

void validate_log(ResponseLog& log, std::size_t line_no) {
  log.student_id = trim(log.student_id);
  log.exercise_id = trim(log.exercise_id);
  if (log.student_id.empty() || log.exercise_id.empty())
    throw ValidationError("line " + std::to_string(line_no) + ": empty student or exercise id");
  std::vector<std::string> kept;
  for (auto& c : log.concepts) {
    std::string t = trim(c);
    if (t.empty()) continue;
    if (std::find(kept.begin(), kept.end(), t) == kept.end()) kept.push_back(std::move(t));
  }
  log.concepts = std::move(kept);
  if (log.concepts.empty())
    throw ValidationError("line " + std::to_string(line_no) + ": record has no concepts");
  if (log.correct != 0 && log.correct != 1)
    throw ValidationError("line " + std::to_string(line_no) + ": score must be 0 or 1, got " +
                          std::to_string(log.correct));
}

std::vector<std::string> to_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) {
    if (cur.back() == '\r') cur.pop_back();
    lines.push_back(cur);
  }
  return lines;
}

}  // namespace

std::size_t EntityIndex::intern(const std::string& id) {
  auto it = map_.find(id);
  if (it != map_.end()) return it->second;
  std::size_t dense = names_.size();
  map_.emplace(id, dense);
  names_.push_back(id);
  return dense;
}

std::size_t EntityIndex::at(const std::string& id) const {
  auto it = map_.find(id);
  if (it == map_.end()) throw ContractError("unknown entity id: " + id);
  return it->second;
}

QMatrix::QMatrix(std::size_t n_exercises, std::size_t n_concepts)
    : n_exercises_(n_exercises),
      n_concepts_(n_concepts),
      cells_(n_exercises * n_concepts, 0) {}

void QMatrix::set(std::size_t exercise, std::size_t concept_id) {
  cells_.at(exercise * n_concepts_ + concept_id) = 1;
}

bool QMatrix::has(std::size_t exercise, std::size_t concept_id) const {
  return cells_.at(exercise * n_concepts_ + concept_id) != 0;
}

std::vector<double> QMatrix::row(std::size_t exercise) const {
  if (exercise >= n_exercises_) throw ContractError("QMatrix row out of range");
  std::vector<double> out(n_concepts_);
  for (std::size_t k = 0; k < n_concepts_; ++k)
    out[k] = cells_[exercise * n_concepts_ + k] ? 1.0 : 0.0;
  return out;
}

std::vector<ResponseLog> parse_csv_logs(const std::string& text) {
  std::vector<ResponseLog> logs;
  auto lines = to_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (trim(line).empty()) continue;
    auto fields = split_on(line, ',');
    if (fields.size() != 5)
      throw ParseError("expected 5 comma-separated fields, got " + std::to_string(fields.size()),
                       i + 1);
    ResponseLog log;
    log.student_id = fields[0];
    log.exercise_id = fields[1];
    log.concepts = split_on(fields[2], ';');
    const std::string score = trim(fields[3]);
    if (score == "0") {
      log.correct = 0;
    } else if (score == "1") {
      log.correct = 1;
    } else {
      // distinguish a malformed token from an out-of-range numeric score
      try {
        std::size_t used = 0;
        double v = std::stod(score, &used);
        if (used != score.size()) throw std::invalid_argument(score);
        log.correct = static_cast<int>(v);
        if (v != 0.0 && v != 1.0)
          throw ValidationError("line " + std::to_string(i + 1) + ": score must be 0 or 1, got " +
                                score);
      } catch (const std::invalid_argument&) {
        throw ParseError("score is not a number: '" + score + "'", i + 1);
      } catch (const std::out_of_range&) {
        throw ParseError("score is not a number: '" + score + "'", i + 1);
      }
    }
    log.content = fields[4];
    validate_log(log, i + 1);
    logs.push_back(std::move(log));
  }
  return logs;
}

std::vector<ResponseLog> parse_jsonl_logs(const std::string& text) {
  std::vector<ResponseLog> logs;
  auto lines = to_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid JSON record: ") + e.what(), i + 1);
    }
    ResponseLog log;
    try {
      log.student_id = obj.at("student_id").get<std::string>();
      log.exercise_id = obj.at("exercise_id").get<std::string>();
      log.concepts = obj.at("concepts").get<std::vector<std::string>>();
      const auto& score = obj.at("score");
      if (score.is_number_integer()) {
        log.correct = score.get<int>();
      } else if (score.is_number()) {
        double v = score.get<double>();
        log.correct = static_cast<int>(v);
        if (v != 0.0 && v != 1.0)
          throw ValidationError("line " + std::to_string(i + 1) + ": score must be 0 or 1");
      } else {
        throw ParseError("score is not a number", i + 1);
      }
      if (obj.contains("content") && !obj["content"].is_null())
        log.content = obj["content"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("record missing required field: ") + e.what(), i + 1);
    }
    validate_log(log, i + 1);
    logs.push_back(std::move(log));
  }
  return logs;
}

std::vector<ResponseLog> parse_response_logs(const std::string& text) {
  for (const auto& line : to_lines(text)) {
    std::string t = trim(line);
    if (t.empty()) continue;
    return t.front() == '{' ? parse_jsonl_logs(text) : parse_csv_logs(text);
  }
  return {};
}

std::string format_csv_logs(const std::vector<ResponseLog>& logs) {
  std::ostringstream out;
  for (const auto& log : logs) {
    if (log.content.find(',') != std::string::npos)
      throw ValidationError("content of exercise " + log.exercise_id +
                            " contains a comma; use the JSON-lines format");
    out << log.student_id << ',' << log.exercise_id << ',';
    for (std::size_t i = 0; i < log.concepts.size(); ++i) {
      if (i) out << ';';
      out << log.concepts[i];
    }
    out << ',' << log.correct << ',' << log.content << '\n';
  }
  return out.str();
}

std::string format_jsonl_logs(const std::vector<ResponseLog>& logs) {
  std::ostringstream out;
  for (const auto& log : logs) {
    nlohmann::json obj;
    obj["student_id"] = log.student_id;
    obj["exercise_id"] = log.exercise_id;
    obj["concepts"] = log.concepts;
    obj["score"] = log.correct;
    obj["content"] = log.content;
    out << obj.dump() << '\n';
  }
  return out.str();
}

DatasetSplit split_dataset(const std::vector<ResponseLog>& logs, std::array<double, 3> ratios,
                           std::uint64_t seed) {
  for (double r : ratios)
    if (r < 0.0) throw ConfigError("split ratios must be non-negative");
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1, got " + std::to_string(sum));
  if (logs.size() < 3) throw ValidationError("need at least 3 logs to split");

  DatasetSplit split;
  for (const auto& log : logs) {
    split.students.intern(log.student_id);
    split.exercises.intern(log.exercise_id);
    for (const auto& c : log.concepts) split.concepts.intern(c);
  }

  std::vector<std::size_t> order(logs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n = logs.size();
  const auto n_valid = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios[2] * static_cast<double>(n)));
  const std::size_t n_train = n - n_valid - n_test;

  for (std::size_t i = 0; i < n; ++i) {
    const ResponseLog& log = logs[order[i]];
    if (i < n_train)
      split.train.push_back(log);
    else if (i < n_train + n_valid)
      split.valid.push_back(log);
    else
      split.test.push_back(log);
  }
  return split;
}

QMatrix build_q_matrix(const DatasetSplit& split) {
  QMatrix q(split.exercises.size(), split.concepts.size());
  auto mark = [&](const std::vector<ResponseLog>& logs) {
    for (const auto& log : logs) {
      const std::size_t e = split.exercises.at(log.exercise_id);
      for (const auto& c : log.concepts) q.set(e, split.concepts.at(c));
    }
  };
  mark(split.train);
  mark(split.valid);
  mark(split.test);
  return q;
}

FrequencyTable build_frequency_table(const DatasetSplit& split) {
  FrequencyTable freq;
  freq.by_student.assign(split.students.size(), 0);
  freq.by_exercise.assign(split.exercises.size(), 0);
  for (const auto& log : split.train) {
    ++freq.by_student[split.students.at(log.student_id)];
    ++freq.by_exercise[split.exercises.at(log.exercise_id)];
    ++freq.total;
  }
  return freq;
}

std::pair<std::vector<ResponseLog>, std::vector<ResponseLog>> partition_cold_warm(
    const std::vector<ResponseLog>& test, const FrequencyTable& freq,
    const EntityIndex& exercises, std::size_t cold_lt, std::size_t warm_gt) {
  // Counts in [cold_lt, warm_gt] land in neither subset; the bands may
  // touch (cold_lt == warm_gt + 1) but never overlap.
  if (cold_lt > warm_gt + 1)
    throw ConfigError("cold/warm thresholds overlap: cold_lt " + std::to_string(cold_lt) +
                      " exceeds warm_gt " + std::to_string(warm_gt) + " + 1");
  std::vector<ResponseLog> cold, warm;
  for (const auto& log : test) {
    const std::size_t count = freq.by_exercise.at(exercises.at(log.exercise_id));
    if (count < cold_lt)
      cold.push_back(log);
    else if (count > warm_gt)
      warm.push_back(log);
  }
  return {std::move(cold), std::move(warm)};
}

std::vector<ResponseLog> dropout_train(const std::vector<ResponseLog>& train, double ratio,
                                       std::uint64_t seed) {
  if (ratio < 0.0 || ratio >= 1.0)
    throw ConfigError("dropout ratio must lie in [0, 1), got " + std::to_string(ratio));
  const auto keep = static_cast<std::size_t>(
      std::llround(static_cast<double>(train.size()) * (1.0 - ratio)));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(keep);
  std::sort(order.begin(), order.end());
  std::vector<ResponseLog> survivors;
  survivors.reserve(keep);
  for (std::size_t i : order) survivors.push_back(train[i]);
  return survivors;
}

}  // namespace cogdiag
