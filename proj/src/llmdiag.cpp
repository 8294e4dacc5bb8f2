#include "cogdiag/llmdiag.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <thread>
#include <utility>

#include "httplib.h"
#include "json.hpp"

#include "cogdiag/errors.hpp"
#include "cogdiag/hash.hpp"
#include "cogdiag/io.hpp"

namespace cogdiag {
namespace {

// Preserves field insertion order so rendered prompts are stable.
using ojson = nlohmann::ordered_json;

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> concept_union(const std::vector<ResponseLog>& logs) {
  std::vector<std::string> out;
  for (const auto& log : logs)
    for (const auto& c : log.concepts)
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  return out;
}

// Re-renders from successive offsets until the payload fits; at least the
// newest entry always survives.
std::string render_within_limit(const std::function<std::string(std::size_t)>& render,
                                std::size_t n_entries, std::size_t max_chars) {
  std::size_t offset = 0;
  std::string out = render(offset);
  while (max_chars > 0 && out.size() > max_chars && offset + 1 < n_entries) {
    ++offset;
    out = render(offset);
  }
  return out;
}

ojson history_array(const std::vector<ResponseLog>& logs, std::size_t offset) {
  ojson arr = ojson::array();
  for (std::size_t i = offset; i < logs.size(); ++i) {
    ojson entry;
    entry["content"] = logs[i].content;
    entry["concept"] = join(logs[i].concepts, ";");
    entry["answer"] = logs[i].correct;
    arr.push_back(std::move(entry));
  }
  return arr;
}

ojson participant_array(const std::vector<ResponseLog>& logs, std::size_t offset) {
  ojson arr = ojson::array();
  for (std::size_t i = offset; i < logs.size(); ++i) {
    ojson entry;
    entry["student"] = logs[i].student_id;
    entry["answer"] = logs[i].correct;
    arr.push_back(std::move(entry));
  }
  return arr;
}

constexpr const char* kStudentCollabSystem =
    "You are an experienced teacher. Review the student's study history below "
    "and summarize, concept by concept, what was practiced and how well it was "
    "answered. Reply with a short factual summary.";

constexpr const char* kExerciseCollabSystem =
    "You are an experienced teacher. Review how students answered this exercise "
    "and summarize what their responses say about it. Reply with a short "
    "factual summary.";

constexpr const char* kStudentDiagnosisSystem =
    "You are an experienced teacher. Using the profile and the study history "
    "below, diagnose how well the student has mastered each concept. Reply "
    "with a JSON object {\"diagnosis\": string, \"reason\": string} and "
    "nothing else.";

constexpr const char* kExerciseDiagnosisSystem =
    "You are an experienced teacher. Using the profile and the recorded "
    "responses below, diagnose the exercise's difficulty and the concepts it "
    "tests. Reply with a JSON object {\"diagnosis\": string, \"reason\": "
    "string} and nothing else.";

void require_logs(const char* who, const std::string& entity,
                  const std::vector<ResponseLog>& logs) {
  if (logs.empty()) throw ContractError(std::string(who) + ": empty history for '" + entity + "'");
}

std::string student_input(const std::string& student, const std::vector<ResponseLog>& logs,
                          std::size_t max_chars, const std::string& profile) {
  for (const auto& log : logs)
    if (log.student_id != student)
      throw ContractError("prompt for '" + student + "' given a log of '" + log.student_id + "'");
  return render_within_limit(
      [&](std::size_t offset) {
        ojson doc;
        if (!profile.empty()) doc["profile"] = profile;
        doc["STUDY HISTORY"] = history_array(logs, offset);
        return doc.dump();
      },
      logs.size(), max_chars);
}

std::string exercise_input(const std::string& exercise, const std::vector<ResponseLog>& logs,
                           std::size_t max_chars, const std::string& profile) {
  for (const auto& log : logs)
    if (log.exercise_id != exercise)
      throw ContractError("prompt for '" + exercise + "' given a log of '" + log.exercise_id + "'");
  return render_within_limit(
      [&](std::size_t offset) {
        ojson doc;
        if (!profile.empty()) doc["profile"] = profile;
        doc["content"] = logs.front().content;
        doc["concepts"] = concept_union(logs);
        doc["participants"] = participant_array(logs, offset);
        return doc.dump();
      },
      logs.size(), max_chars);
}

std::string format_accuracy(int correct, int total) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%d/%d, acc %.2f", correct, total,
                total > 0 ? static_cast<double>(correct) / total : 0.0);
  return buf;
}

struct ConceptStat {
  std::string name;
  int correct = 0;
  int total = 0;
};

std::vector<ConceptStat> per_concept_stats(const std::vector<ResponseLog>& logs) {
  std::vector<ConceptStat> stats;
  for (const auto& log : logs) {
    for (const auto& c : log.concepts) {
      auto it = std::find_if(stats.begin(), stats.end(),
                             [&](const ConceptStat& s) { return s.name == c; });
      if (it == stats.end()) it = stats.insert(stats.end(), ConceptStat{c, 0, 0});
      it->total += 1;
      it->correct += log.correct;
    }
  }
  return stats;
}

std::string stub_student_summary(const std::vector<ResponseLog>& logs) {
  std::vector<std::string> mastered;
  std::vector<std::string> weak;
  for (const auto& s : per_concept_stats(logs)) {
    const std::string entry = s.name + " (" + format_accuracy(s.correct, s.total) + ")";
    const bool is_mastered = s.total > 0 && static_cast<double>(s.correct) / s.total >= 0.5;
    (is_mastered ? mastered : weak).push_back(entry);
  }
  const auto group = [](const std::vector<std::string>& entries) {
    return entries.empty() ? std::string("none") : join(entries, ", ");
  };
  return "mastered: " + group(mastered) + "; weak: " + group(weak);
}

std::string stub_exercise_summary(const std::vector<ResponseLog>& logs) {
  int correct = 0;
  for (const auto& log : logs) correct += log.correct;
  return "correct rate: " + format_accuracy(correct, static_cast<int>(logs.size())) +
         "; concepts: " + join(concept_union(logs), ";");
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* value = std::getenv(name);
  return value != nullptr && *value != '\0' ? value : fallback;
}

DiagnosisRecord parse_record_line(const std::string& line, std::size_t line_no) {
  try {
    const auto doc = nlohmann::json::parse(line);
    DiagnosisRecord rec;
    rec.kind = entity_kind_from_string(doc.at("kind").get<std::string>());
    rec.id = doc.at("id").get<int>();
    rec.stage = diagnosis_stage_from_string(doc.at("stage").get<std::string>());
    rec.text = doc.at("text").get<std::string>();
    rec.reason = doc.at("reason").get<std::string>();
    rec.prompt_digest = doc.at("prompt_digest").get<std::string>();
    rec.source = record_source_from_string(doc.at("source").get<std::string>());
    if (rec.text.empty()) throw ValidationError("diagnosis cache: empty text");
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("diagnosis cache: ") + e.what(), line_no);
  }
}

std::string dump_record_line(const DiagnosisRecord& rec) {
  nlohmann::json doc;
  doc["kind"] = to_string(rec.kind);
  doc["id"] = rec.id;
  doc["stage"] = to_string(rec.stage);
  doc["text"] = rec.text;
  doc["reason"] = rec.reason;
  doc["prompt_digest"] = rec.prompt_digest;
  doc["source"] = to_string(rec.source);
  return doc.dump();
}

// POSTs a JSON body, retrying connect failures and 5xx with exponential
// backoff. 4xx responses fail immediately.
nlohmann::json post_json(const EndpointConfig& config, const std::string& route,
                         const nlohmann::json& body) {
  httplib::Client client(config.base_url);
  if (!client.is_valid())
    throw ConfigError("endpoint url not usable by the bundled http client: " + config.base_url);
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(120, 0);
  httplib::Headers headers;
  if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);
  const std::string payload = body.dump();
  int delay_ms = config.backoff_ms;
  for (int attempt = 0; attempt <= config.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      delay_ms *= 2;
    }
    auto res = client.Post(route, headers, payload, "application/json");
    if (!res || res->status >= 500) continue;
    if (res->status >= 400)
      throw TransportError("endpoint rejected " + route + " (" + std::to_string(res->status) +
                           "): " + res->body.substr(0, 200));
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError("endpoint returned malformed JSON for " + route + ": " + e.what());
    }
  }
  throw TransportError("retries exhausted for " + route + " against " + config.base_url);
}

DiagnosisRecord placeholder_record(EntityKind kind, int id, DiagnosisStage stage,
                                   const std::string& name) {
  ojson marker;
  marker["no_training_responses"] = name;
  marker["stage"] = to_string(stage);
  const PromptPair prompt{"", marker.dump()};
  DiagnosisRecord rec;
  rec.kind = kind;
  rec.id = id;
  rec.stage = stage;
  rec.text = stage == DiagnosisStage::kDiagnosis ? "diagnosis: no training responses recorded"
                                                 : "no training responses recorded";
  rec.prompt_digest = prompt.digest();
  rec.source = RecordSource::kStub;
  return rec;
}

}  // namespace

std::string to_string(DiagnosisStage stage) {
  return stage == DiagnosisStage::kCollab ? "collab" : "diagnosis";
}

std::string to_string(RecordSource source) {
  return source == RecordSource::kRemote ? "remote" : "stub";
}

DiagnosisStage diagnosis_stage_from_string(const std::string& s) {
  if (s == "collab") return DiagnosisStage::kCollab;
  if (s == "diagnosis") return DiagnosisStage::kDiagnosis;
  throw ConfigError("unknown diagnosis stage: '" + s + "'");
}

RecordSource record_source_from_string(const std::string& s) {
  if (s == "remote") return RecordSource::kRemote;
  if (s == "stub") return RecordSource::kStub;
  throw ConfigError("unknown record source: '" + s + "'");
}

std::string PromptPair::digest() const {
  return digest_of(system_prompt + '\x1e' + input_prompt);
}

PromptPair build_student_collab_prompt(const std::string& student,
                                       const std::vector<ResponseLog>& logs,
                                       std::size_t max_input_chars) {
  require_logs("build_student_collab_prompt", student, logs);
  return {kStudentCollabSystem, student_input(student, logs, max_input_chars, "")};
}

PromptPair build_exercise_collab_prompt(const std::string& exercise,
                                        const std::vector<ResponseLog>& logs,
                                        std::size_t max_input_chars) {
  require_logs("build_exercise_collab_prompt", exercise, logs);
  return {kExerciseCollabSystem, exercise_input(exercise, logs, max_input_chars, "")};
}

PromptPair build_diagnosis_prompt(const std::string& entity, const DiagnosisRecord& collab,
                                  const std::vector<ResponseLog>& logs,
                                  std::size_t max_input_chars) {
  require_logs("build_diagnosis_prompt", entity, logs);
  if (collab.stage != DiagnosisStage::kCollab)
    throw ContractError("build_diagnosis_prompt: record for '" + entity +
                        "' is not a collab-stage record");
  if (collab.text.empty())
    throw ContractError("build_diagnosis_prompt: empty collab text for '" + entity + "'");
  if (collab.kind == EntityKind::kStudent)
    return {kStudentDiagnosisSystem, student_input(entity, logs, max_input_chars, collab.text)};
  return {kExerciseDiagnosisSystem, exercise_input(entity, logs, max_input_chars, collab.text)};
}

EndpointConfig EndpointConfig::from_env() {
  EndpointConfig config;
  config.base_url = env_or("COGDIAG_API_BASE", "");
  config.api_key = env_or("COGDIAG_API_KEY", "");
  config.chat_model = env_or("COGDIAG_CHAT_MODEL", config.chat_model);
  config.embed_model = env_or("COGDIAG_EMBED_MODEL", config.embed_model);
  const std::string offline = env_or("COGDIAG_OFFLINE", "");
  if (offline == "1" || offline == "true" || offline == "yes" || offline == "on") {
    config.offline = true;
  } else if (offline == "0" || offline == "false" || offline == "no" || offline == "off") {
    config.offline = false;
  } else if (offline.empty()) {
    config.offline = config.base_url.empty();
  } else {
    throw ConfigError("COGDIAG_OFFLINE must be a boolean flag, got '" + offline + "'");
  }
  return config;
}

void EndpointConfig::validate() const {
  if (!offline && base_url.empty())
    throw ConfigError("remote mode needs a base url (set COGDIAG_API_BASE or enable offline mode)");
  if (retries < 0) throw ConfigError("retries must be >= 0");
  if (backoff_ms < 0) throw ConfigError("backoff_ms must be >= 0");
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (stub_dim < 1) throw ConfigError("stub_dim must be >= 1");
}

std::vector<DiagnosisRecord> read_diagnosis_records(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  std::vector<DiagnosisRecord> records;
  records.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    records.push_back(parse_record_line(lines[i], i + 1));
  }
  return records;
}

DiagnosisCache::DiagnosisCache(const std::filesystem::path& path) : path_(path) {
  std::error_code ec;
  if (!std::filesystem::exists(path_, ec)) return;
  const auto lines = read_lines(path_);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const DiagnosisRecord rec = parse_record_line(lines[i], i + 1);
    records_[rec.prompt_digest] = rec;
  }
}

std::optional<DiagnosisRecord> DiagnosisCache::find(const std::string& prompt_digest) const {
  std::lock_guard lock(mutex_);
  const auto it = records_.find(prompt_digest);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void DiagnosisCache::put(const DiagnosisRecord& record) {
  if (record.text.empty()) throw ValidationError("diagnosis cache: refusing record with empty text");
  if (record.prompt_digest.empty())
    throw ValidationError("diagnosis cache: refusing record without a prompt digest");
  std::lock_guard lock(mutex_);
  if (records_.count(record.prompt_digest) > 0) return;
  records_[record.prompt_digest] = record;
  if (!path_.empty()) append_line(path_, dump_record_line(record));
}

std::size_t DiagnosisCache::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

EmbeddingCache::EmbeddingCache(const std::filesystem::path& path) : path_(path) {
  std::error_code ec;
  if (!std::filesystem::exists(path_, ec)) return;
  const auto lines = read_lines(path_);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      const auto doc = nlohmann::json::parse(lines[i]);
      const auto digest = doc.at("digest").get<std::string>();
      auto vec = doc.at("vector").get<std::vector<double>>();
      if (vec.empty()) throw ValidationError("embedding cache: empty vector");
      for (double v : vec)
        if (!std::isfinite(v)) throw ValidationError("embedding cache: non-finite value");
      vectors_[digest] = std::move(vec);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("embedding cache: ") + e.what(), i + 1);
    }
  }
}

std::optional<std::vector<double>> EmbeddingCache::find(const std::string& text_digest) const {
  std::lock_guard lock(mutex_);
  const auto it = vectors_.find(text_digest);
  if (it == vectors_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& text_digest, const std::vector<double>& vector) {
  if (text_digest.empty()) throw ValidationError("embedding cache: empty digest key");
  if (vector.empty()) throw ValidationError("embedding cache: refusing empty vector");
  std::lock_guard lock(mutex_);
  if (vectors_.count(text_digest) > 0) return;
  vectors_[text_digest] = vector;
  if (!path_.empty()) {
    nlohmann::json doc;
    doc["digest"] = text_digest;
    doc["vector"] = vector;
    append_line(path_, doc.dump());
  }
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return vectors_.size();
}

DiagnosisRecord chat_complete(const EndpointConfig& config, const DiagnosisRequest& request,
                              DiagnosisCache& cache) {
  config.validate();
  const std::string digest = request.prompt.digest();
  if (auto hit = cache.find(digest)) return *hit;
  if (config.offline) {
    DiagnosisRecord rec = stub_diagnose(request.kind, request.id, request.stage, request.logs);
    rec.prompt_digest = digest;
    cache.put(rec);
    return rec;
  }
  nlohmann::json body;
  body["model"] = config.chat_model;
  body["temperature"] = 0;
  body["messages"] = nlohmann::json::array(
      {{{"role", "system"}, {"content", request.prompt.system_prompt}},
       {{"role", "user"}, {"content", request.prompt.input_prompt}}});
  const auto doc = post_json(config, "/v1/chat/completions", body);
  std::string content;
  try {
    content = doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("chat completion reply missing fields: ") + e.what());
  }
  if (content.empty()) throw TransportError("chat completion returned empty text");
  DiagnosisRecord rec;
  rec.kind = request.kind;
  rec.id = request.id;
  rec.stage = request.stage;
  rec.text = content;
  rec.prompt_digest = digest;
  rec.source = RecordSource::kRemote;
  if (request.stage == DiagnosisStage::kDiagnosis) {
    try {
      const auto reply = nlohmann::json::parse(content);
      rec.text = reply.at("diagnosis").get<std::string>();
      rec.reason = reply.value("reason", "");
    } catch (const nlohmann::json::exception&) {
      std::cerr << "warning: model reply was not the requested JSON object; keeping raw text\n";
      rec.text = content;
      rec.reason.clear();
    }
    if (rec.text.empty()) throw TransportError("chat completion returned an empty diagnosis");
  }
  cache.put(rec);
  return rec;
}

std::vector<double> embed_text(const EndpointConfig& config, const std::string& text,
                               EmbeddingCache& cache) {
  if (text.empty()) throw ContractError("embed_text: empty text");
  config.validate();
  const std::string digest = digest_of(text);
  if (auto hit = cache.find(digest)) return *hit;
  std::vector<double> vec;
  if (config.offline) {
    vec = stub_embed(text, config.stub_dim);
  } else {
    nlohmann::json body;
    body["model"] = config.embed_model;
    body["input"] = text;
    const auto doc = post_json(config, "/v1/embeddings", body);
    try {
      vec = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("embedding reply missing fields: ") + e.what());
    }
    if (vec.empty()) throw TransportError("embedding reply carried an empty vector");
    for (double v : vec)
      if (!std::isfinite(v)) throw TransportError("embedding reply carried a non-finite value");
  }
  cache.put(digest, vec);
  return vec;
}

std::vector<double> stub_embed(const std::string& text, std::size_t dim) {
  if (text.empty()) throw ContractError("stub_embed: empty text");
  if (dim < 1) throw ConfigError("stub_embed: dim must be >= 1");
  std::vector<double> counts(dim, 0.0);
  const std::string_view view(text);
  if (view.size() < 3) {
    counts[fnv1a64(view) % dim] += 1.0;
  } else {
    for (std::size_t i = 0; i + 3 <= view.size(); ++i) counts[fnv1a64(view.substr(i, 3)) % dim] += 1.0;
  }
  double norm = 0.0;
  for (double v : counts) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : counts) v /= norm;
  return counts;
}

DiagnosisRecord stub_diagnose(EntityKind kind, int id, DiagnosisStage stage,
                              const std::vector<ResponseLog>& logs) {
  if (logs.empty()) throw ContractError("stub_diagnose: at least one log is required");
  DiagnosisRecord rec;
  rec.kind = kind;
  rec.id = id;
  rec.stage = stage;
  rec.source = RecordSource::kStub;
  const std::string summary = kind == EntityKind::kStudent ? stub_student_summary(logs)
                                                           : stub_exercise_summary(logs);
  if (stage == DiagnosisStage::kDiagnosis) {
    rec.text = "diagnosis: " + summary;
    rec.reason = kind == EntityKind::kStudent
                     ? "per-concept accuracy over the given logs, mastery threshold 0.50"
                     : "correct rate over all participating students";
  } else {
    rec.text = summary;
  }
  return rec;
}

DiagnosisOutput run_llm_diagnosis(const EndpointConfig& config, const DatasetSplit& split,
                                  DiagnosisCache& cache, std::size_t max_input_chars) {
  config.validate();
  const std::size_t n_students = split.students.size();
  const std::size_t n_exercises = split.exercises.size();
  std::vector<std::vector<ResponseLog>> per_student(n_students);
  std::vector<std::vector<ResponseLog>> per_exercise(n_exercises);
  for (const auto& log : split.train) {
    per_student[split.students.at(log.student_id)].push_back(log);
    per_exercise[split.exercises.at(log.exercise_id)].push_back(log);
  }

  std::string used_ids;
  for (const auto& logs : per_student)
    for (const auto& log : logs) used_ids += log.student_id + ':' + log.exercise_id + '\x1f';
  for (const auto& logs : per_exercise)
    for (const auto& log : logs) used_ids += log.student_id + ':' + log.exercise_id + '\x1f';

  struct Task {
    EntityKind kind;
    int id;
  };
  std::vector<Task> tasks;
  tasks.reserve(n_students + n_exercises);
  for (std::size_t s = 0; s < n_students; ++s)
    tasks.push_back({EntityKind::kStudent, static_cast<int>(s)});
  for (std::size_t e = 0; e < n_exercises; ++e)
    tasks.push_back({EntityKind::kExercise, static_cast<int>(e)});

  const auto run_task = [&](const Task& task) {
    const bool is_student = task.kind == EntityKind::kStudent;
    const std::size_t dense = static_cast<std::size_t>(task.id);
    const std::string& name =
        is_student ? split.students.name(dense) : split.exercises.name(dense);
    const auto& logs = is_student ? per_student[dense] : per_exercise[dense];
    if (logs.empty()) {
      DiagnosisRecord collab = placeholder_record(task.kind, task.id, DiagnosisStage::kCollab, name);
      DiagnosisRecord diag =
          placeholder_record(task.kind, task.id, DiagnosisStage::kDiagnosis, name);
      cache.put(collab);
      cache.put(diag);
      return std::pair(std::move(collab), std::move(diag));
    }
    DiagnosisRequest collab_request{
        task.kind, task.id, DiagnosisStage::kCollab,
        is_student ? build_student_collab_prompt(name, logs, max_input_chars)
                   : build_exercise_collab_prompt(name, logs, max_input_chars),
        logs};
    DiagnosisRecord collab = chat_complete(config, collab_request, cache);
    DiagnosisRequest diag_request{task.kind, task.id, DiagnosisStage::kDiagnosis,
                                  build_diagnosis_prompt(name, collab, logs, max_input_chars),
                                  logs};
    DiagnosisRecord diag = chat_complete(config, diag_request, cache);
    return std::pair(std::move(collab), std::move(diag));
  };

  std::vector<std::pair<DiagnosisRecord, DiagnosisRecord>> results(tasks.size());
  const std::size_t n_workers =
      config.offline ? 1 : std::min<std::size_t>(config.max_in_flight, tasks.size());
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) results[i] = run_task(tasks[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= tasks.size()) return;
          try {
            results[i] = run_task(tasks[i]);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
            next.store(tasks.size());
            return;
          }
        }
      });
    }
    for (auto& worker : workers) worker.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  DiagnosisOutput output;
  output.collab.reserve(tasks.size());
  output.diagnosis.reserve(tasks.size());
  for (auto& [collab, diag] : results) {
    output.collab.push_back(std::move(collab));
    output.diagnosis.push_back(std::move(diag));
  }
  output.train_log_digest = digest_of(used_ids);
  return output;
}

EmbeddingTable embed_diagnoses(const EndpointConfig& config,
                               const std::vector<DiagnosisRecord>& records, EntityKind kind,
                               std::size_t n_entities, EmbeddingCache& cache) {
  if (n_entities == 0) throw ContractError("embed_diagnoses: no entities");
  std::vector<std::vector<double>> vectors(n_entities);
  std::vector<int> seen(n_entities, 0);
  for (const auto& rec : records) {
    if (rec.kind != kind || rec.stage != DiagnosisStage::kDiagnosis) continue;
    if (rec.id < 0 || static_cast<std::size_t>(rec.id) >= n_entities)
      throw ValidationError("embed_diagnoses: id " + std::to_string(rec.id) + " out of range");
    if (seen[static_cast<std::size_t>(rec.id)]++ > 0)
      throw ValidationError("embed_diagnoses: duplicate diagnosis for id " + std::to_string(rec.id));
    vectors[static_cast<std::size_t>(rec.id)] = embed_text(config, rec.text, cache);
  }
  for (std::size_t i = 0; i < n_entities; ++i)
    if (seen[i] == 0)
      throw ValidationError("embed_diagnoses: missing diagnosis for id " + std::to_string(i));
  const std::size_t dim = vectors[0].size();
  Tensor matrix = Tensor::zeros(n_entities, dim);
  for (std::size_t i = 0; i < n_entities; ++i) {
    if (vectors[i].size() != dim)
      throw ValidationError("embed_diagnoses: embedding width mismatch at id " + std::to_string(i));
    for (std::size_t j = 0; j < dim; ++j) matrix.at(i, j) = vectors[i][j];
  }
  return EmbeddingTable::from_rows(kind, std::move(matrix),
                                   config.offline ? "stub" : config.embed_model);
}

}  // namespace cogdiag
