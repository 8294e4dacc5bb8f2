#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "cogdiag/dataset.hpp"
#include "cogdiag/errors.hpp"
#include "cogdiag/rng.hpp"

using namespace cogdiag;

namespace {

std::vector<ResponseLog> synth_logs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ResponseLog> logs;
  for (std::size_t i = 0; i < n; ++i) {
    ResponseLog log;
    log.student_id = "s" + std::to_string(rng.bounded(40));
    log.exercise_id = "e" + std::to_string(rng.bounded(60));
    log.concepts = {"k" + std::to_string(rng.bounded(8))};
    if (rng.uniform() < 0.4) log.concepts.push_back("k" + std::to_string(rng.bounded(8)));
    log.correct = rng.uniform() < 0.6 ? 1 : 0;
    logs.push_back(std::move(log));
  }
  return logs;
}

std::multiset<std::string> key_multiset(const std::vector<ResponseLog>& logs) {
  std::multiset<std::string> keys;
  for (const auto& log : logs) {
    std::string k = log.student_id + "|" + log.exercise_id + "|" + std::to_string(log.correct);
    for (const auto& c : log.concepts) k += "|" + c;
    keys.insert(std::move(k));
  }
  return keys;
}

}  // namespace

TEST_CASE("csv parsing handles the definitional cases") {
  auto logs = parse_csv_logs("s1,e1,k1;k2,1,\n");
  REQUIRE(logs.size() == 1);
  CHECK(logs[0].student_id == "s1");
  CHECK(logs[0].exercise_id == "e1");
  CHECK(logs[0].concepts == std::vector<std::string>{"k1", "k2"});
  CHECK(logs[0].correct == 1);
  CHECK(logs[0].content.empty());

  CHECK_THROWS_AS(parse_csv_logs("s1,e1,,1,\n"), ValidationError);
  CHECK_THROWS_AS(parse_csv_logs("s1,e1,k1,2,\n"), ValidationError);
  CHECK_THROWS_AS(parse_csv_logs("s1,e1,k1,1\n"), ParseError);        // 4 fields
  CHECK_THROWS_AS(parse_csv_logs("s1,e1,k1,1,a,b\n"), ParseError);    // 6 fields
  CHECK_THROWS_AS(parse_csv_logs("s1,e1,k1,yes,\n"), ParseError);     // non-numeric score
}

TEST_CASE("csv parse errors carry the offending line number") {
  try {
    parse_csv_logs("s1,e1,k1,1,\ns2,e2,k1,1\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("ids are trimmed and concepts deduplicated") {
  auto logs = parse_csv_logs(" s1 , e1 , k1; k1 ;k2 ,0,hello\n");
  REQUIRE(logs.size() == 1);
  CHECK(logs[0].student_id == "s1");
  CHECK(logs[0].exercise_id == "e1");
  CHECK(logs[0].concepts == std::vector<std::string>{"k1", "k2"});
  CHECK(logs[0].content == "hello");
}

TEST_CASE("jsonl parsing and validation") {
  auto logs = parse_jsonl_logs(
      R"({"student_id":"s1","exercise_id":"e1","concepts":["k1","k2"],"score":1,"content":"2 + 2, fast"})"
      "\n");
  REQUIRE(logs.size() == 1);
  CHECK(logs[0].concepts.size() == 2);
  CHECK(logs[0].content == "2 + 2, fast");

  CHECK_THROWS_AS(parse_jsonl_logs(R"({"student_id":"s1"})" "\n"), ParseError);
  CHECK_THROWS_AS(parse_jsonl_logs("{not json}\n"), ParseError);
  CHECK_THROWS_AS(
      parse_jsonl_logs(R"({"student_id":"s1","exercise_id":"e1","concepts":[],"score":1})" "\n"),
      ValidationError);
  CHECK_THROWS_AS(
      parse_jsonl_logs(R"({"student_id":"s1","exercise_id":"e1","concepts":["k1"],"score":3})" "\n"),
      ValidationError);
}

TEST_CASE("both formats round-trip") {
  std::vector<ResponseLog> logs;
  logs.push_back({"s1", "e1", {"k1", "k2"}, 1, "triangle area"});
  logs.push_back({"s2", "e2", {"k3"}, 0, ""});

  CHECK(parse_csv_logs(format_csv_logs(logs)) == logs);
  CHECK(parse_jsonl_logs(format_jsonl_logs(logs)) == logs);

  // auto-detection picks the right parser for each
  CHECK(parse_response_logs(format_csv_logs(logs)) == logs);
  CHECK(parse_response_logs(format_jsonl_logs(logs)) == logs);

  // commas inside content only survive the JSON format
  logs[0].content = "a, b";
  CHECK_THROWS_AS(format_csv_logs(logs), ValidationError);
  CHECK(parse_jsonl_logs(format_jsonl_logs(logs)) == logs);
}

TEST_CASE("split sizes follow the floor-remainder rule") {
  auto logs = synth_logs(1000, 1);
  auto split = split_dataset(logs, {0.8, 0.1, 0.1}, 7);
  CHECK(split.train.size() == 800);
  CHECK(split.valid.size() == 100);
  CHECK(split.test.size() == 100);

  auto logs10 = synth_logs(10, 2);
  auto split10 = split_dataset(logs10, {0.8, 0.1, 0.1}, 7);
  CHECK(split10.train.size() == 8);
  CHECK(split10.valid.size() == 1);
  CHECK(split10.test.size() == 1);

  // remainder goes to train
  auto logs9 = synth_logs(9, 3);
  auto split9 = split_dataset(logs9, {0.8, 0.1, 0.1}, 7);
  CHECK(split9.valid.size() == 0);  // floor(0.9)
  CHECK(split9.test.size() == 0);
  CHECK(split9.train.size() == 9);
}

TEST_CASE("split is a partition and is deterministic") {
  auto logs = synth_logs(500, 4);
  auto a = split_dataset(logs, {0.8, 0.1, 0.1}, 99);
  auto b = split_dataset(logs, {0.8, 0.1, 0.1}, 99);
  CHECK(a.train == b.train);
  CHECK(a.valid == b.valid);
  CHECK(a.test == b.test);

  std::vector<ResponseLog> merged = a.train;
  merged.insert(merged.end(), a.valid.begin(), a.valid.end());
  merged.insert(merged.end(), a.test.begin(), a.test.end());
  CHECK(key_multiset(merged) == key_multiset(logs));

  auto c = split_dataset(logs, {0.8, 0.1, 0.1}, 100);
  CHECK(c.train != a.train);  // seed matters
}

TEST_CASE("split rejects bad ratios and tiny inputs") {
  auto logs = synth_logs(10, 5);
  CHECK_THROWS_AS(split_dataset(logs, {0.8, 0.1, 0.2}, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(logs, {1.1, -0.05, -0.05}, 1), ConfigError);
  std::vector<ResponseLog> two = {logs[0], logs[1]};
  CHECK_THROWS_AS(split_dataset(two, {0.8, 0.1, 0.1}, 1), ValidationError);
}

TEST_CASE("dense indices cover all splits in first-appearance order") {
  std::vector<ResponseLog> logs;
  logs.push_back({"bob", "e9", {"k2"}, 1, ""});
  logs.push_back({"amy", "e1", {"k1", "k2"}, 0, ""});
  logs.push_back({"bob", "e1", {"k3"}, 1, ""});
  logs.push_back({"cal", "e2", {"k1"}, 0, ""});
  auto split = split_dataset(logs, {0.5, 0.25, 0.25}, 3);
  CHECK(split.students.at("bob") == 0);
  CHECK(split.students.at("amy") == 1);
  CHECK(split.students.at("cal") == 2);
  CHECK(split.exercises.at("e9") == 0);
  CHECK(split.exercises.at("e1") == 1);
  CHECK(split.concepts.at("k2") == 0);
  CHECK(split.concepts.at("k1") == 1);
  CHECK(split.concepts.at("k3") == 2);
  CHECK_THROWS_AS(split.students.at("nobody"), ContractError);
}

TEST_CASE("q-matrix is the union over every split") {
  std::vector<ResponseLog> logs;
  logs.push_back({"s1", "e1", {"k1", "k2"}, 1, ""});
  logs.push_back({"s2", "e1", {"k2", "k3"}, 0, ""});
  logs.push_back({"s3", "e2", {"k1"}, 1, ""});
  logs.push_back({"s4", "e2", {"k1"}, 1, ""});
  auto split = split_dataset(logs, {0.5, 0.25, 0.25}, 11);
  auto q = build_q_matrix(split);
  const std::size_t e1 = split.exercises.at("e1");
  CHECK(q.has(e1, split.concepts.at("k1")));
  CHECK(q.has(e1, split.concepts.at("k2")));
  CHECK(q.has(e1, split.concepts.at("k3")));
  CHECK_FALSE(q.has(split.exercises.at("e2"), split.concepts.at("k2")));

  // every row has at least one concept
  for (std::size_t e = 0; e < q.n_exercises(); ++e) {
    auto row = q.row(e);
    CHECK(std::count(row.begin(), row.end(), 1.0) >= 1);
  }
}

TEST_CASE("frequency table totals match the training split on both axes") {
  auto logs = synth_logs(400, 6);
  auto split = split_dataset(logs, {0.8, 0.1, 0.1}, 21);
  auto freq = build_frequency_table(split);
  std::size_t s_total = 0, e_total = 0;
  for (auto c : freq.by_student) s_total += c;
  for (auto c : freq.by_exercise) e_total += c;
  CHECK(s_total == split.train.size());
  CHECK(e_total == split.train.size());
  CHECK(freq.total == split.train.size());
}

TEST_CASE("cold and warm partitions follow the exercise train counts") {
  std::vector<ResponseLog> logs;
  // e_rare: 2 train rows; e_mid: 5; e_hot: 12
  auto add = [&](const std::string& e, int n) {
    for (int i = 0; i < n; ++i)
      logs.push_back({"s" + std::to_string(logs.size()), e, {"k1"}, 1, ""});
  };
  add("e_rare", 2);
  add("e_mid", 5);
  add("e_hot", 12);
  DatasetSplit split;
  split.train = logs;
  for (const auto& log : logs) {
    split.students.intern(log.student_id);
    split.exercises.intern(log.exercise_id);
    split.concepts.intern("k1");
  }
  split.test.push_back({"t1", "e_rare", {"k1"}, 0, ""});
  split.test.push_back({"t2", "e_mid", {"k1"}, 1, ""});
  split.test.push_back({"t3", "e_hot", {"k1"}, 1, ""});
  split.students.intern("t1");
  split.students.intern("t2");
  split.students.intern("t3");

  auto freq = build_frequency_table(split);
  auto [cold, warm] = partition_cold_warm(split.test, freq, split.exercises);
  REQUIRE(cold.size() == 1);
  CHECK(cold[0].exercise_id == "e_rare");  // 2 < 3
  REQUIRE(warm.size() == 1);
  CHECK(warm[0].exercise_id == "e_hot");  // 12 > 10

  // touching bands are allowed, overlapping bands are not
  CHECK_NOTHROW(partition_cold_warm(split.test, freq, split.exercises, 11, 10));
  CHECK_THROWS_AS(partition_cold_warm(split.test, freq, split.exercises, 12, 10), ConfigError);
}

TEST_CASE("cold and warm subsets never intersect") {
  auto logs = synth_logs(600, 8);
  auto split = split_dataset(logs, {0.8, 0.1, 0.1}, 5);
  auto freq = build_frequency_table(split);
  for (std::size_t cold_lt : {1u, 3u, 8u}) {
    auto [cold, warm] = partition_cold_warm(split.test, freq, split.exercises, cold_lt, 7);
    auto ck = key_multiset(cold);
    for (const auto& k : key_multiset(warm)) CHECK(ck.count(k) == 0);
  }
}

TEST_CASE("dropout keeps the rounded count and the survivor order") {
  auto logs = synth_logs(100, 9);
  auto half = dropout_train(logs, 0.5, 13);
  CHECK(half.size() == 50);

  auto same = dropout_train(logs, 0.0, 13);
  CHECK(same == logs);

  // survivors appear in their original relative order
  auto kept = dropout_train(logs, 0.3, 17);
  CHECK(kept.size() == 70);
  std::size_t cursor = 0;
  for (const auto& log : kept) {
    while (cursor < logs.size() && !(logs[cursor] == log)) ++cursor;
    REQUIRE(cursor < logs.size());
    ++cursor;
  }

  CHECK_THROWS_AS(dropout_train(logs, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(dropout_train(logs, -0.1, 1), ConfigError);

  // identity dropout composes
  auto then_zero = dropout_train(kept, 0.0, 23);
  CHECK(then_zero == kept);
}

TEST_CASE("dropout counts for the sweep ratios") {
  auto logs = synth_logs(200, 10);
  for (double r : {0.1, 0.2, 0.3, 0.4, 0.5}) {
    auto kept = dropout_train(logs, r, 31);
    CHECK(kept.size() == static_cast<std::size_t>(std::llround(200 * (1.0 - r))));
  }
}
