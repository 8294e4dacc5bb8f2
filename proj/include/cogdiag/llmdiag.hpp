#pragma once

#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cogdiag/alignment.hpp"
#include "cogdiag/dataset.hpp"

namespace cogdiag {

// Two-stage text diagnosis of students and exercises: a collaborative
// summary pass over the training logs, then a per-entity diagnosis pass
// that feeds the summary back in. Runs against an OpenAI-compatible HTTP
// endpoint or a deterministic offline stub; every result is cached so
// repeated runs are idempotent and tests never need the network.

enum class DiagnosisStage { kCollab, kDiagnosis };
enum class RecordSource { kRemote, kStub };

std::string to_string(DiagnosisStage stage);
std::string to_string(RecordSource source);
DiagnosisStage diagnosis_stage_from_string(const std::string& s);  // ConfigError
RecordSource record_source_from_string(const std::string& s);      // ConfigError

// One chat exchange: a fixed system prompt plus a JSON-rendered input.
struct PromptPair {
  std::string system_prompt;
  std::string input_prompt;  // always a JSON document

  // Stable content hash; identical prompts digest identically across runs.
  std::string digest() const;
};

struct DiagnosisRecord {
  EntityKind kind = EntityKind::kStudent;
  int id = 0;
  DiagnosisStage stage = DiagnosisStage::kCollab;
  std::string text;    // never empty
  std::string reason;  // the model's stated rationale, may be empty
  std::string prompt_digest;
  RecordSource source = RecordSource::kStub;

  bool operator==(const DiagnosisRecord&) const = default;
};

// Prompt builders. Log entries are rendered oldest first; when the rendered
// input exceeds max_input_chars the oldest entries are dropped one at a time
// (the most recent entry always survives). 0 means no limit.

// Input payload: {"STUDY HISTORY": [{content, concept, answer}, ...]}.
// All logs must belong to `student`; an empty history is a contract error.
PromptPair build_student_collab_prompt(const std::string& student,
                                       const std::vector<ResponseLog>& logs,
                                       std::size_t max_input_chars = 0);

// Input payload: {content, concepts, participants: [{student, answer}, ...]}.
PromptPair build_exercise_collab_prompt(const std::string& exercise,
                                        const std::vector<ResponseLog>& logs,
                                        std::size_t max_input_chars = 0);

// Second stage: embeds the collaborative text as a "profile" field next to
// the same JSON logs; the system prompt demands a JSON reply of the form
// {"diagnosis": ..., "reason": ...}. Requires collab.stage == kCollab.
PromptPair build_diagnosis_prompt(const std::string& entity,
                                  const DiagnosisRecord& collab,
                                  const std::vector<ResponseLog>& logs,
                                  std::size_t max_input_chars = 0);

struct EndpointConfig {
  std::string base_url;  // "http://host:port"; required unless offline
  std::string api_key;   // sent as a bearer token when non-empty
  std::string chat_model = "gpt-3.5-turbo-16k";
  std::string embed_model = "text-embedding-3-small";
  bool offline = true;
  int retries = 3;        // extra attempts after the first, transient failures only
  int backoff_ms = 200;   // doubles per retry
  int max_in_flight = 4;  // remote-mode worker cap
  std::size_t stub_dim = 256;

  // Reads COGDIAG_API_BASE, COGDIAG_API_KEY, COGDIAG_CHAT_MODEL,
  // COGDIAG_EMBED_MODEL and COGDIAG_OFFLINE. With no explicit offline flag,
  // remote mode turns on exactly when a base URL is present.
  static EndpointConfig from_env();

  void validate() const;  // ConfigError on violation
};

// Append-only JSON-lines store keyed by prompt digest. Thread-safe: finds
// and puts are serialized, so concurrent workers share one writer and an
// interrupted run resumes from whatever was already written.
class DiagnosisCache {
 public:
  DiagnosisCache() = default;  // memory-only
  explicit DiagnosisCache(const std::filesystem::path& path);  // loads existing lines

  std::optional<DiagnosisRecord> find(const std::string& prompt_digest) const;
  void put(const DiagnosisRecord& record);  // idempotent per digest
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  std::map<std::string, DiagnosisRecord> records_;
  mutable std::mutex mutex_;
};

// Same store shape for embedding vectors, keyed by text digest.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(const std::filesystem::path& path);

  std::optional<std::vector<double>> find(const std::string& text_digest) const;
  void put(const std::string& text_digest, const std::vector<double>& vector);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  std::map<std::string, std::vector<double>> vectors_;
  mutable std::mutex mutex_;
};

// Everything chat_complete needs: the prompt to send plus the identity the
// resulting record carries and the logs the offline stub summarizes.
struct DiagnosisRequest {
  EntityKind kind = EntityKind::kStudent;
  int id = 0;
  DiagnosisStage stage = DiagnosisStage::kCollab;
  PromptPair prompt;
  std::vector<ResponseLog> logs;
};

// Cache-first chat completion. Offline mode delegates to stub_diagnose.
// Remote mode retries connect failures and 5xx responses with exponential
// backoff; a 4xx fails immediately; exhausted retries raise TransportError.
// A diagnosis-stage reply that is not the demanded JSON object is kept raw
// with a logged warning.
DiagnosisRecord chat_complete(const EndpointConfig& config,
                              const DiagnosisRequest& request,
                              DiagnosisCache& cache);

// Cache-first text embedding; offline mode uses stub_embed.
std::vector<double> embed_text(const EndpointConfig& config, const std::string& text,
                               EmbeddingCache& cache);

// Pure fallback embedder: character trigrams hashed into `dim` buckets,
// counts L2-normalized. Texts shorter than one trigram hash as a single
// unit. Empty text is a contract error.
std::vector<double> stub_embed(const std::string& text, std::size_t dim = 256);

// Deterministic stand-in for a remote reply: a per-concept accuracy summary
// for students, a correct-rate summary for exercises, with a "diagnosis: "
// prefix on second-stage records. Requires at least one log.
DiagnosisRecord stub_diagnose(EntityKind kind, int id, DiagnosisStage stage,
                              const std::vector<ResponseLog>& logs);

struct DiagnosisOutput {
  // Students in dense id order, then exercises in dense id order.
  std::vector<DiagnosisRecord> collab;
  std::vector<DiagnosisRecord> diagnosis;
  // Digest of the (student, exercise) id pairs the prompts were built from,
  // in consumption order; lets callers assert only training logs were read.
  std::string train_log_digest;
};

// Runs both stages for every student and exercise, reading the training
// split only. Entities with no training logs get a fixed placeholder record
// instead of a remote call. Remote mode fans work out to at most
// config.max_in_flight workers; output order stays deterministic.
DiagnosisOutput run_llm_diagnosis(const EndpointConfig& config, const DatasetSplit& split,
                                  DiagnosisCache& cache, std::size_t max_input_chars = 0);

// Reads every record in a diagnosis JSONL file, in file order.
std::vector<DiagnosisRecord> read_diagnosis_records(const std::filesystem::path& path);

// Embeds the diagnosis-stage records of one kind into a table with one row
// per dense id. Every id in [0, n_entities) must appear exactly once.
EmbeddingTable embed_diagnoses(const EndpointConfig& config,
                               const std::vector<DiagnosisRecord>& records,
                               EntityKind kind, std::size_t n_entities,
                               EmbeddingCache& cache);

}  // namespace cogdiag
