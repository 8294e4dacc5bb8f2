#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cogdiag {

// One graded attempt: a student answered an exercise tagged with one or
// more knowledge concepts. Repeated (student, exercise) pairs are kept
// as distinct attempts.
struct ResponseLog {
  std::string student_id;
  std::string exercise_id;
  std::vector<std::string> concepts;  // deduplicated, first-appearance order
  int correct = 0;                    // {0, 1}
  std::string content;                // empty means absent

  bool operator==(const ResponseLog&) const = default;
};

// Bijection between opaque string ids and dense integers, assigned in
// first-appearance order.
class EntityIndex {
 public:
  std::size_t intern(const std::string& id);
  std::size_t at(const std::string& id) const;  // ContractError if unknown
  bool contains(const std::string& id) const { return map_.count(id) > 0; }
  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t dense) const { return names_.at(dense); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> map_;
};

// A shuffled partition of the logs plus dense indices covering every
// entity in the full input, so test-only entities still have ids.
struct DatasetSplit {
  std::vector<ResponseLog> train, valid, test;
  EntityIndex students, exercises, concepts;
};

// Exercise-by-concept binary incidence, unioned over every split:
// concept tags are exercise metadata, not interaction leakage.
class QMatrix {
 public:
  QMatrix(std::size_t n_exercises, std::size_t n_concepts);
  void set(std::size_t exercise, std::size_t concept_id);
  bool has(std::size_t exercise, std::size_t concept_id) const;
  std::size_t n_exercises() const { return n_exercises_; }
  std::size_t n_concepts() const { return n_concepts_; }
  // Dense 0/1 row for one exercise.
  std::vector<double> row(std::size_t exercise) const;

 private:
  std::size_t n_exercises_, n_concepts_;
  std::vector<std::uint8_t> cells_;
};

// Interaction counts in the training split, by dense id.
struct FrequencyTable {
  std::vector<std::size_t> by_student;
  std::vector<std::size_t> by_exercise;
  std::size_t total = 0;
};

// Parses either record format, chosen by the first non-empty line:
// lines starting with '{' are JSON objects, anything else is CSV.
std::vector<ResponseLog> parse_response_logs(const std::string& text);
std::vector<ResponseLog> parse_csv_logs(const std::string& text);
std::vector<ResponseLog> parse_jsonl_logs(const std::string& text);

std::string format_csv_logs(const std::vector<ResponseLog>& logs);
std::string format_jsonl_logs(const std::vector<ResponseLog>& logs);

// Seeded shuffle, then cumulative cut: valid and test take floor(ratio*N)
// each and train absorbs the remainder. Indices are built over the input
// order of ALL logs before shuffling.
DatasetSplit split_dataset(const std::vector<ResponseLog>& logs,
                           std::array<double, 3> ratios, std::uint64_t seed);

QMatrix build_q_matrix(const DatasetSplit& split);

FrequencyTable build_frequency_table(const DatasetSplit& split);

// Cold: exercise seen fewer than cold_lt times in training. Warm: more
// than warm_gt times. Counts in between belong to neither subset.
std::pair<std::vector<ResponseLog>, std::vector<ResponseLog>> partition_cold_warm(
    const std::vector<ResponseLog>& test, const FrequencyTable& freq,
    const EntityIndex& exercises, std::size_t cold_lt = 3, std::size_t warm_gt = 10);

// Keeps round(n*(1-ratio)) logs chosen by seeded shuffle, survivor order
// preserved.
std::vector<ResponseLog> dropout_train(const std::vector<ResponseLog>& train, double ratio,
                                       std::uint64_t seed);

}  // namespace cogdiag
