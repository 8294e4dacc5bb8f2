#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cogdiag/alignment.hpp"
#include "cogdiag/cdm.hpp"
#include "cogdiag/dataset.hpp"

namespace cogdiag {

// Training loop, evaluation metrics, the cold/warm and sparsity experiments,
// and a synthetic-data generator with known ground truth for desk-scale
// end-to-end checks.

enum class AlignMode { kNone, kBeh, kSem };

std::string to_string(AlignMode mode);
AlignMode align_mode_from_string(const std::string& s);  // ConfigError on unknown

struct TrainConfig {
  ModelKind model = ModelKind::kNcd;
  AlignMode align = AlignMode::kNone;
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double lr = 0.002;
  std::size_t patience = 5;  // epochs without a validation-AUC gain before stopping
  std::uint64_t seed = 0;
  std::size_t mirt_dim = 16;
  NcdConfig ncd;
  std::size_t proj_hidden = projection::kDefaultHidden;  // bridge-net width

  void validate() const;  // ConfigError on violation
};

struct Metrics {
  std::string subset = "all";  // all | cold | warm
  double auc = 0.0;
  double acc = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
};

// Mann-Whitney AUC over midranks: (concordant pairs + half credit for
// ties) / (positives * negatives). Labels must be 0 or 1 and both classes
// must be present (MetricError otherwise).
double auc(std::span<const double> scores, std::span<const double> labels);

// auc plus threshold accuracy (score >= threshold counts as a positive
// call) and root mean squared error. Empty input is a contract error.
Metrics compute_metrics(std::span<const double> scores, std::span<const double> labels,
                        double threshold = 0.5, std::string subset = "all");

// CSV with header subset,auc,acc,rmse,n and a JSON mirror of the same rows.
std::string format_metrics_csv(const std::vector<Metrics>& rows);
std::string format_metrics_json(const std::vector<Metrics>& rows);

struct EpochStat {
  std::size_t epoch = 0;     // 1-based
  double train_loss = 0.0;   // mean per-sample loss over the epoch
  double valid_auc = 0.0;    // NaN when the validation split cannot score
};

// One {epoch, train_loss, valid_auc} object per line.
std::string format_history_jsonl(const std::vector<EpochStat>& history);

struct TrainResult {
  CdmModel model;  // parameters restored from the best validation epoch
  std::vector<EpochStat> history;
  std::size_t best_epoch = 0;  // 1-based; 0 when validation never scored
  double best_valid_auc = 0.0;
};

// Semantic tables consumed by the alignment losses; both sides are
// required whenever the alignment mode is not none.
struct AlignmentInputs {
  const EmbeddingTable* students = nullptr;
  const EmbeddingTable* exercises = nullptr;
};

// Seeded end-to-end training: per epoch, shuffle the training logs,
// iterate batches, add the configured alignment terms to the response
// loss, step Adam, re-clamp the neural model's weights, then score the
// validation split. Keeps the best-AUC parameters and stops early once
// patience is exhausted. Derived rng streams: 0 init, 1 shuffle, 2 mask
// and negative sampling.
TrainResult train(const TrainConfig& cfg, const DatasetSplit& split, const QMatrix& q,
                  const AlignmentInputs& embeddings, const AlignmentConfig& align);

// Scores one set of logs with a trained model.
std::vector<double> predict_logs(const CdmModel& model, const DatasetSplit& split,
                                 const QMatrix& q, const std::vector<ResponseLog>& logs);

// Metrics on the full test split plus its cold and warm exercise subsets.
// Subsets that contain no logs are omitted rather than reported as zero;
// a subset whose labels are single-class keeps its accuracy and rmse but
// reports NaN for the undefined auc. The full-split row has no such
// fallback: a single-class test set is a metric error.
std::vector<Metrics> evaluate_cold_warm(const CdmModel& model, const DatasetSplit& split,
                                        const QMatrix& q, const FrequencyTable& freq,
                                        std::size_t cold_lt = 3, std::size_t warm_gt = 10);

inline constexpr double kDefaultDropoutRatios[] = {0.1, 0.2, 0.3, 0.4, 0.5};

struct SweepCell {
  double ratio = 0.0;
  std::uint64_t seed = 0;
  Metrics metrics;  // test-split scores of the retrained model
};

// Retrains from scratch per (ratio, seed) cell on a thinned training split;
// the semantic tables are fixed inputs and are never thinned.
std::vector<SweepCell> dropout_sweep(const TrainConfig& base, const DatasetSplit& split,
                                     const QMatrix& q, const AlignmentInputs& embeddings,
                                     const AlignmentConfig& align,
                                     std::span<const double> ratios,
                                     std::span<const std::uint64_t> seeds);

// CSV with header ratio,seed,auc,acc,rmse.
std::string format_sweep_csv(const std::vector<SweepCell>& cells);

struct SyntheticSpec {
  std::size_t n_students = 200;
  std::size_t n_exercises = 100;
  std::size_t n_concepts = 12;
  std::size_t logs_per_student = 10;
  double noise = 0.1;           // isotropic noise added to the semantic rows
  std::size_t semantic_dim = 32;
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError on violation
};

// Ground truth plus the logs sampled from it. Semantic rows are fixed
// random linear images of each entity's latent vector (students: trait
// row; exercises: discrimination, difficulty, then the concept indicator),
// noised and L2-normalized. Exercise popularity is two-tiered so rarely
// answered exercises exist at the default cold threshold.
struct SyntheticData {
  std::vector<ResponseLog> logs;  // student-major order, names s<i>/e<j>/k<c>
  Tensor student_traits;          // n_students x n_concepts
  Tensor exercise_a;              // n_exercises
  Tensor exercise_b;              // n_exercises
  std::vector<std::vector<std::size_t>> exercise_concepts;  // 1..3 concepts each
  Tensor student_semantic;        // n_students x semantic_dim, unit rows
  Tensor exercise_semantic;       // n_exercises x semantic_dim, unit rows
  Tensor student_map;             // n_concepts x semantic_dim
  Tensor exercise_map;            // (2 + n_concepts) x semantic_dim
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// The probability the generator used for one (student, exercise) pair.
double synthetic_probability(const SyntheticData& data, std::size_t student,
                             std::size_t exercise);

// Reorders the generator's semantic rows into dense index order, so they
// line up with a split built from the synthetic logs. Entities the index
// never saw are dropped; unknown names are a contract error.
EmbeddingTable synthetic_table(const SyntheticData& data, EntityKind kind,
                               const EntityIndex& index);

// Visualization export: per entity {kind, id, behavioral, semantic_projected}
// with the bridge net named proj_prefix applied to the semantic table (beh
// mode) or to the behavioral rows (sem mode). Mode none has no bridge net.
std::string format_visualization_jsonl(const CdmModel& model, AlignMode mode, EntityKind kind,
                                       const EntityIndex& index, const EmbeddingTable& table,
                                       const std::string& proj_prefix);

}  // namespace cogdiag
