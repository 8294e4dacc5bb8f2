#include "cogdiag/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <unordered_set>
#include <utility>

#include "json.hpp"

#include "cogdiag/errors.hpp"
#include "cogdiag/rng.hpp"

namespace cogdiag {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_scores_labels(std::span<const double> scores, std::span<const double> labels,
                         const char* who) {
  if (scores.size() != labels.size())
    throw ShapeError(std::string(who) + ": " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw ContractError(std::string(who) + ": empty input");
  for (double s : scores)
    if (!std::isfinite(s)) throw ValidationError(std::string(who) + ": non-finite score");
  for (double label : labels)
    if (label != 0.0 && label != 1.0)
      throw ValidationError(std::string(who) + ": labels must be 0 or 1");
}

std::string format_fraction(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

// First-appearance deduplication, preserving order.
std::vector<std::size_t> unique_ids(std::span<const std::size_t> ids) {
  std::vector<std::size_t> out;
  std::unordered_set<std::size_t> seen;
  for (std::size_t id : ids)
    if (seen.insert(id).second) out.push_back(id);
  return out;
}

struct DensePairs {
  std::vector<std::size_t> students;
  std::vector<std::size_t> exercises;
  std::vector<double> labels;
};

DensePairs to_dense_pairs(const DatasetSplit& split, const std::vector<ResponseLog>& logs) {
  DensePairs pairs;
  pairs.students.reserve(logs.size());
  pairs.exercises.reserve(logs.size());
  pairs.labels.reserve(logs.size());
  for (const auto& log : logs) {
    pairs.students.push_back(split.students.at(log.student_id));
    pairs.exercises.push_back(split.exercises.at(log.exercise_id));
    pairs.labels.push_back(static_cast<double>(log.correct));
  }
  return pairs;
}

}  // namespace

std::string to_string(AlignMode mode) {
  switch (mode) {
    case AlignMode::kNone: return "none";
    case AlignMode::kBeh: return "beh";
    case AlignMode::kSem: return "sem";
  }
  throw ContractError("unhandled alignment mode");
}

AlignMode align_mode_from_string(const std::string& s) {
  if (s == "none") return AlignMode::kNone;
  if (s == "beh") return AlignMode::kBeh;
  if (s == "sem") return AlignMode::kSem;
  throw ConfigError("unknown alignment mode: '" + s + "' (expected none, beh, or sem)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (proj_hidden < 1) throw ConfigError("proj_hidden must be >= 1");
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  check_scores_labels(scores, labels, "auc");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (double label : labels) n_pos += label == 1.0 ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw MetricError("auc: undefined with a single class (" + std::to_string(n_pos) +
                      " positives of " + std::to_string(n) + ")");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // midranks: tied scores share the average of their 1-based rank range
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = static_cast<double>(i + j + 2) / 2.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1.0) pos_rank_sum += midrank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

namespace {

void fill_threshold_metrics(Metrics& m, std::span<const double> scores,
                            std::span<const double> labels, double threshold) {
  std::size_t hits = 0;
  double sq = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double called = scores[i] >= threshold ? 1.0 : 0.0;
    hits += called == labels[i] ? 1 : 0;
    const double d = scores[i] - labels[i];
    sq += d * d;
  }
  m.n = scores.size();
  m.acc = static_cast<double>(hits) / static_cast<double>(m.n);
  m.rmse = std::sqrt(sq / static_cast<double>(m.n));
}

}  // namespace

Metrics compute_metrics(std::span<const double> scores, std::span<const double> labels,
                        double threshold, std::string subset) {
  check_scores_labels(scores, labels, "compute_metrics");
  Metrics m;
  m.subset = std::move(subset);
  m.auc = auc(scores, labels);
  fill_threshold_metrics(m, scores, labels, threshold);
  return m;
}

std::string format_metrics_csv(const std::vector<Metrics>& rows) {
  std::string out = "subset,auc,acc,rmse,n\n";
  for (const auto& m : rows)
    out += m.subset + ',' + format_fraction(m.auc) + ',' + format_fraction(m.acc) + ',' +
           format_fraction(m.rmse) + ',' + std::to_string(m.n) + '\n';
  return out;
}

std::string format_metrics_json(const std::vector<Metrics>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : rows) {
    nlohmann::json row;
    row["subset"] = m.subset;
    row["auc"] = m.auc;
    row["acc"] = m.acc;
    row["rmse"] = m.rmse;
    row["n"] = m.n;
    arr.push_back(std::move(row));
  }
  return arr.dump(2) + "\n";
}

std::string format_history_jsonl(const std::vector<EpochStat>& history) {
  std::string out;
  for (const auto& stat : history) {
    nlohmann::json row;
    row["epoch"] = stat.epoch;
    row["train_loss"] = stat.train_loss;
    if (std::isfinite(stat.valid_auc))
      row["valid_auc"] = stat.valid_auc;
    else
      row["valid_auc"] = nullptr;
    out += row.dump() + "\n";
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const DatasetSplit& split, const QMatrix& q,
                  const AlignmentInputs& embeddings, const AlignmentConfig& align) {
  cfg.validate();
  const bool aligned = cfg.align != AlignMode::kNone;
  if (aligned) {
    align.validate();
    if (embeddings.students == nullptr || embeddings.exercises == nullptr)
      throw ConfigError("alignment mode '" + to_string(cfg.align) +
                        "' needs semantic tables for both students and exercises");
  }
  if (split.train.empty()) throw ValidationError("train: empty training split");

  const std::size_t n_students = split.students.size();
  const std::size_t n_exercises = split.exercises.size();
  if (aligned) {
    if (embeddings.students->kind() != EntityKind::kStudent ||
        embeddings.exercises->kind() != EntityKind::kExercise)
      throw ContractError("train: semantic tables passed with swapped kinds");
    if (embeddings.students->count() != n_students)
      throw ValidationError("train: student table has " +
                            std::to_string(embeddings.students->count()) + " rows for " +
                            std::to_string(n_students) + " students");
    if (embeddings.exercises->count() != n_exercises)
      throw ValidationError("train: exercise table has " +
                            std::to_string(embeddings.exercises->count()) + " rows for " +
                            std::to_string(n_exercises) + " exercises");
  }

  const Rng root(cfg.seed);
  Rng init_rng = root.fork(0);
  Rng shuffle_rng = root.fork(1);
  Rng mask_rng = root.fork(2);

  CdmModel model = CdmModel::create(cfg.model, n_students, n_exercises, split.concepts.size(),
                                    init_rng, cfg.ncd, cfg.mirt_dim);

  NeighborIndex student_neighbors;
  NeighborIndex exercise_neighbors;
  if (cfg.align == AlignMode::kBeh) {
    projection::init(model.params(), "proj_student", embeddings.students->dim(),
                     model.student_behavioral_dim(), cfg.proj_hidden, init_rng);
    projection::init(model.params(), "proj_exercise", embeddings.exercises->dim(),
                     model.exercise_behavioral_dim(), cfg.proj_hidden, init_rng);
    student_neighbors = topk_neighbors(*embeddings.students, align.k);
    exercise_neighbors = topk_neighbors(*embeddings.exercises, align.k);
  } else if (cfg.align == AlignMode::kSem) {
    projection::init(model.params(), "proj_student", model.student_behavioral_dim(),
                     embeddings.students->dim(), cfg.proj_hidden, init_rng);
    projection::init(model.params(), "proj_exercise", model.exercise_behavioral_dim(),
                     embeddings.exercises->dim(), cfg.proj_hidden, init_rng);
  }

  FrequencyTable freq;
  std::size_t student_freq_max = 0;
  std::size_t exercise_freq_max = 0;
  if (cfg.align == AlignMode::kSem) {
    freq = build_frequency_table(split);
    for (std::size_t c : freq.by_student) student_freq_max = std::max(student_freq_max, c);
    for (std::size_t c : freq.by_exercise) exercise_freq_max = std::max(exercise_freq_max, c);
  }

  AdamOptimizer optimizer(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  const DensePairs train_pairs = to_dense_pairs(split, split.train);
  const DensePairs valid_pairs = to_dense_pairs(split, split.valid);
  const std::size_t n_train = split.train.size();

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochStat> history;
  Checkpoint best;
  double best_auc = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t stop = std::min(n_train, start + cfg.batch_size);
      std::vector<std::size_t> students;
      std::vector<std::size_t> exercises;
      std::vector<double> labels;
      students.reserve(stop - start);
      exercises.reserve(stop - start);
      labels.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        students.push_back(train_pairs.students[order[i]]);
        exercises.push_back(train_pairs.exercises[order[i]]);
        labels.push_back(train_pairs.labels[order[i]]);
      }

      Tape tape;
      const LeafMap leaves = register_leaves(tape, model.params());
      const Var predictions = model.predict_batch(tape, leaves, students, exercises, q);
      Var loss = CdmModel::bce_on_tape(tape, predictions, labels);

      if (cfg.align == AlignMode::kBeh) {
        const std::vector<std::size_t> us = unique_ids(students);
        const std::vector<std::size_t> ue = unique_ids(exercises);
        const Var cs = model.behavioral_students(tape, leaves, us);
        const ContrastPair ps = behavioral_alignment_loss(
            tape, leaves, cs, us, *embeddings.students, student_neighbors, "proj_student",
            align, mask_rng);
        const Var ce = model.behavioral_exercises(tape, leaves, ue);
        const ContrastPair pe = behavioral_alignment_loss(
            tape, leaves, ce, ue, *embeddings.exercises, exercise_neighbors, "proj_exercise",
            align, mask_rng);
        const Var global = tape.add(ps.global, pe.global);
        const Var local = tape.add(ps.local, pe.local);
        loss = tape.add(loss, tape.add(tape.scale(global, align.alpha),
                                       tape.scale(local, align.beta)));
      } else if (cfg.align == AlignMode::kSem) {
        const std::vector<std::size_t> us = unique_ids(students);
        const std::vector<std::size_t> ue = unique_ids(exercises);
        std::vector<std::size_t> us_freq(us.size());
        for (std::size_t i = 0; i < us.size(); ++i) us_freq[i] = freq.by_student[us[i]];
        std::vector<std::size_t> ue_freq(ue.size());
        for (std::size_t i = 0; i < ue.size(); ++i) ue_freq[i] = freq.by_exercise[ue[i]];
        const Var cs = model.behavioral_students(tape, leaves, us);
        const Var rs = semantic_alignment_loss(tape, leaves, cs, us, us_freq, student_freq_max,
                                               *embeddings.students, "proj_student", align,
                                               mask_rng);
        const Var ce = model.behavioral_exercises(tape, leaves, ue);
        const Var re = semantic_alignment_loss(tape, leaves, ce, ue, ue_freq, exercise_freq_max,
                                               *embeddings.exercises, "proj_exercise", align,
                                               mask_rng);
        loss = tape.add(loss, tape.scale(tape.add(rs, re), align.lambda));
      }

      epoch_loss += tape.value(loss)[0];
      tape.backward(loss);
      optimizer.step(model.params(), tape, leaves);
      model.project_nonneg();
    }

    double valid_auc = std::numeric_limits<double>::quiet_NaN();
    if (!split.valid.empty()) {
      std::vector<double> scores(valid_pairs.labels.size());
      for (std::size_t i = 0; i < scores.size(); ++i)
        scores[i] = model.predict_one(valid_pairs.students[i], valid_pairs.exercises[i], q);
      try {
        valid_auc = auc(scores, valid_pairs.labels);
      } catch (const MetricError&) {
        valid_auc = std::numeric_limits<double>::quiet_NaN();  // single-class split
      }
    }

    history.push_back({epoch, epoch_loss / static_cast<double>(n_train), valid_auc});

    if (std::isfinite(valid_auc)) {
      if (valid_auc > best_auc) {
        best_auc = valid_auc;
        best_epoch = epoch;
        best = model.to_checkpoint();
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }

  // validation never scored: keep the final state instead of a best epoch
  CdmModel kept = best_epoch > 0 ? CdmModel::from_checkpoint(std::move(best)) : std::move(model);
  return TrainResult{std::move(kept), std::move(history), best_epoch,
                     best_epoch > 0 ? best_auc : 0.0};
}

std::vector<double> predict_logs(const CdmModel& model, const DatasetSplit& split,
                                 const QMatrix& q, const std::vector<ResponseLog>& logs) {
  std::vector<double> scores;
  scores.reserve(logs.size());
  for (const auto& log : logs)
    scores.push_back(model.predict_one(split.students.at(log.student_id),
                                       split.exercises.at(log.exercise_id), q));
  return scores;
}

std::vector<Metrics> evaluate_cold_warm(const CdmModel& model, const DatasetSplit& split,
                                        const QMatrix& q, const FrequencyTable& freq,
                                        std::size_t cold_lt, std::size_t warm_gt) {
  if (split.test.empty()) throw ContractError("evaluate_cold_warm: empty test split");
  // allow_single_class keeps a subset row useful when every label agrees:
  // accuracy and rmse still mean something there, only the auc is undefined.
  const auto score_subset = [&](const std::vector<ResponseLog>& logs, const char* tag,
                                bool allow_single_class) {
    const std::vector<double> scores = predict_logs(model, split, q, logs);
    std::vector<double> labels;
    labels.reserve(logs.size());
    for (const auto& log : logs) labels.push_back(static_cast<double>(log.correct));
    try {
      return compute_metrics(scores, labels, 0.5, tag);
    } catch (const MetricError&) {
      if (!allow_single_class) throw;
      Metrics m;
      m.subset = tag;
      m.auc = std::numeric_limits<double>::quiet_NaN();
      fill_threshold_metrics(m, scores, labels, 0.5);
      return m;
    }
  };

  std::vector<Metrics> rows;
  rows.push_back(score_subset(split.test, "all", false));
  const auto [cold_logs, warm_logs] =
      partition_cold_warm(split.test, freq, split.exercises, cold_lt, warm_gt);
  if (!cold_logs.empty()) rows.push_back(score_subset(cold_logs, "cold", true));
  if (!warm_logs.empty()) rows.push_back(score_subset(warm_logs, "warm", true));
  return rows;
}

std::vector<SweepCell> dropout_sweep(const TrainConfig& base, const DatasetSplit& split,
                                     const QMatrix& q, const AlignmentInputs& embeddings,
                                     const AlignmentConfig& align,
                                     std::span<const double> ratios,
                                     std::span<const std::uint64_t> seeds) {
  if (ratios.empty()) throw ConfigError("dropout_sweep: no ratios given");
  if (seeds.empty()) throw ConfigError("dropout_sweep: no seeds given");
  std::vector<SweepCell> cells;
  cells.reserve(ratios.size() * seeds.size());
  for (double ratio : ratios) {
    for (std::uint64_t seed : seeds) {
      DatasetSplit thinned = split;
      thinned.train = dropout_train(split.train, ratio, seed);
      TrainConfig cfg = base;
      cfg.seed = seed;
      const TrainResult trained = train(cfg, thinned, q, embeddings, align);
      const std::vector<double> scores = predict_logs(trained.model, split, q, split.test);
      std::vector<double> labels;
      labels.reserve(split.test.size());
      for (const auto& log : split.test) labels.push_back(static_cast<double>(log.correct));
      cells.push_back({ratio, seed, compute_metrics(scores, labels)});
    }
  }
  return cells;
}

std::string format_sweep_csv(const std::vector<SweepCell>& cells) {
  std::string out = "ratio,seed,auc,acc,rmse\n";
  for (const auto& cell : cells) {
    char ratio_buf[16];
    std::snprintf(ratio_buf, sizeof ratio_buf, "%.2f", cell.ratio);
    out += std::string(ratio_buf) + ',' + std::to_string(cell.seed) + ',' +
           format_fraction(cell.metrics.auc) + ',' + format_fraction(cell.metrics.acc) + ',' +
           format_fraction(cell.metrics.rmse) + '\n';
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (n_students < 1) throw ConfigError("synthetic: n_students must be >= 1");
  if (n_exercises < 1) throw ConfigError("synthetic: n_exercises must be >= 1");
  if (n_concepts < 1) throw ConfigError("synthetic: n_concepts must be >= 1");
  if (logs_per_student < 1) throw ConfigError("synthetic: logs_per_student must be >= 1");
  if (semantic_dim < 1) throw ConfigError("synthetic: semantic_dim must be >= 1");
  if (!(noise >= 0.0) || !std::isfinite(noise))
    throw ConfigError("synthetic: noise must be >= 0");
  if (logs_per_student > n_exercises)
    throw ConfigError("synthetic: logs_per_student exceeds distinct exercises (" +
                      std::to_string(logs_per_student) + " > " + std::to_string(n_exercises) +
                      ")");
}

double synthetic_probability(const SyntheticData& data, std::size_t student,
                             std::size_t exercise) {
  if (student >= data.student_traits.rows())
    throw ContractError("synthetic_probability: student out of range");
  if (exercise >= data.exercise_concepts.size())
    throw ContractError("synthetic_probability: exercise out of range");
  const auto& required = data.exercise_concepts[exercise];
  double mean_trait = 0.0;
  for (std::size_t k : required) mean_trait += data.student_traits.at(student, k);
  mean_trait /= static_cast<double>(required.size());
  return sigmoid(data.exercise_a[exercise] * (mean_trait - data.exercise_b[exercise]));
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t S = spec.n_students;
  const std::size_t E = spec.n_exercises;
  const std::size_t K = spec.n_concepts;
  const std::size_t d = spec.semantic_dim;

  // two-tier popularity: a small head absorbs most draws, so the tail stays
  // rare enough to land under the default cold threshold
  const std::size_t n_head = std::max<std::size_t>(1, (E * 3) / 10);
  const std::size_t n_tail = E > n_head ? E - n_head : 0;

  SyntheticData data;
  data.student_traits = Tensor::zeros(S, K);
  for (double& v : data.student_traits.data()) v = rng.normal();
  data.exercise_a = Tensor::zeros(E);
  data.exercise_b = Tensor::zeros(E);
  for (std::size_t e = 0; e < E; ++e) {
    data.exercise_a[e] = rng.uniform(1.0, 2.5);
    // rare exercises keep moderate difficulty: an item far out in the
    // difficulty tail answers one way for nearly everyone, and with only a
    // handful of held-out responses that single-label column carries no
    // ranking information
    data.exercise_b[e] = e < n_head ? rng.normal() : 0.55 * rng.normal();
  }

  data.exercise_concepts.resize(E);
  std::vector<std::size_t> concept_pool(K);
  std::iota(concept_pool.begin(), concept_pool.end(), 0);
  for (std::size_t e = 0; e < E; ++e) {
    const std::size_t count = 1 + rng.bounded(std::min<std::size_t>(3, K));
    rng.shuffle(concept_pool);
    std::vector<std::size_t> chosen(concept_pool.begin(),
                                    concept_pool.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(chosen.begin(), chosen.end());
    data.exercise_concepts[e] = std::move(chosen);
  }

  // the synthetic encoder maps latent factors to semantic rows through an
  // orthonormal basis, so distances in semantic space mirror distances
  // between the latent factors instead of an arbitrary entanglement of them
  const auto orthonormal_rows = [&rng, d](std::size_t rows) {
    Tensor m = Tensor::zeros(rows, d);
    for (double& v : m.data()) v = rng.normal();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t p = 0; p < r; ++p) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += m.at(r, j) * m.at(p, j);
        for (std::size_t j = 0; j < d; ++j) m.at(r, j) -= dot * m.at(p, j);
      }
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) norm += m.at(r, j) * m.at(r, j);
      norm = std::sqrt(norm);
      // more factors than semantic dimensions: the leftover rows keep their
      // raw draw, normalized, and simply share directions with earlier ones
      if (norm < 1e-8) {
        for (std::size_t j = 0; j < d; ++j) m.at(r, j) = rng.normal();
        norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm += m.at(r, j) * m.at(r, j);
        norm = std::sqrt(norm);
      }
      for (std::size_t j = 0; j < d; ++j) m.at(r, j) /= norm;
    }
    return m;
  };
  data.student_map = orthonormal_rows(K);
  data.exercise_map = orthonormal_rows(2 + K);

  const auto noised_unit_row = [&](std::span<const double> latent, const Tensor& map) {
    std::vector<double> row(d, 0.0);
    for (std::size_t i = 0; i < latent.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) row[j] += latent[i] * map.at(i, j);
    for (std::size_t j = 0; j < d; ++j) row[j] += spec.noise * rng.normal();
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw NumericError("synthetic: a semantic row collapsed to zero");
    for (double& v : row) v /= norm;
    return row;
  };

  data.student_semantic = Tensor::zeros(S, d);
  for (std::size_t s = 0; s < S; ++s) {
    const auto row = noised_unit_row(data.student_traits.row(s), data.student_map);
    for (std::size_t j = 0; j < d; ++j) data.student_semantic.at(s, j) = row[j];
  }
  data.exercise_semantic = Tensor::zeros(E, d);
  for (std::size_t e = 0; e < E; ++e) {
    std::vector<double> latent(2 + K, 0.0);
    latent[0] = data.exercise_a[e];
    latent[1] = data.exercise_b[e];
    for (std::size_t k : data.exercise_concepts[e]) latent[2 + k] = 1.0;
    const auto row = noised_unit_row(latent, data.exercise_map);
    for (std::size_t j = 0; j < d; ++j) data.exercise_semantic.at(e, j) = row[j];
  }

  std::vector<std::string> exercise_content(E);
  std::vector<std::string> concept_names(K);
  for (std::size_t k = 0; k < K; ++k) concept_names[k] = "k" + std::to_string(k);
  for (std::size_t e = 0; e < E; ++e) {
    std::string joined;
    for (std::size_t k : data.exercise_concepts[e]) {
      if (!joined.empty()) joined += ';';
      joined += concept_names[k];
    }
    exercise_content[e] = "exercise e" + std::to_string(e) + " covering " + joined;
  }

  data.logs.reserve(S * spec.logs_per_student);
  std::vector<char> used(E, 0);
  for (std::size_t s = 0; s < S; ++s) {
    std::fill(used.begin(), used.end(), 0);
    for (std::size_t l = 0; l < spec.logs_per_student; ++l) {
      std::size_t exercise = E;  // sentinel
      for (int attempt = 0; attempt < 64; ++attempt) {
        const bool pick_head = n_tail == 0 || rng.uniform() < 0.9;
        const std::size_t candidate =
            pick_head ? rng.bounded(n_head) : n_head + rng.bounded(n_tail);
        if (used[candidate] == 0) {
          exercise = candidate;
          break;
        }
      }
      if (exercise == E) {
        for (std::size_t e = 0; e < E; ++e)
          if (used[e] == 0) {
            exercise = e;
            break;
          }
      }
      used[exercise] = 1;

      ResponseLog log;
      log.student_id = "s" + std::to_string(s);
      log.exercise_id = "e" + std::to_string(exercise);
      for (std::size_t k : data.exercise_concepts[exercise])
        log.concepts.push_back(concept_names[k]);
      log.correct = rng.uniform() < synthetic_probability(data, s, exercise) ? 1 : 0;
      log.content = exercise_content[exercise];
      data.logs.push_back(std::move(log));
    }
  }
  return data;
}

EmbeddingTable synthetic_table(const SyntheticData& data, EntityKind kind,
                               const EntityIndex& index) {
  if (index.size() == 0) throw ContractError("synthetic_table: empty index");
  const Tensor& source =
      kind == EntityKind::kStudent ? data.student_semantic : data.exercise_semantic;
  const char prefix = kind == EntityKind::kStudent ? 's' : 'e';
  Tensor rows = Tensor::zeros(index.size(), source.cols());
  for (std::size_t dense = 0; dense < index.size(); ++dense) {
    const std::string& name = index.name(dense);
    std::size_t original = 0;
    try {
      if (name.empty() || name[0] != prefix) throw std::invalid_argument(name);
      original = std::stoul(name.substr(1));
    } catch (const std::logic_error&) {
      throw ContractError("synthetic_table: '" + name + "' is not a generated " +
                          to_string(kind) + " name");
    }
    if (original >= source.rows())
      throw ContractError("synthetic_table: '" + name + "' is outside the generated range");
    for (std::size_t j = 0; j < source.cols(); ++j) rows.at(dense, j) = source.at(original, j);
  }
  return EmbeddingTable::from_rows(kind, std::move(rows), "synthetic");
}

std::string format_visualization_jsonl(const CdmModel& model, AlignMode mode, EntityKind kind,
                                       const EntityIndex& index, const EmbeddingTable& table,
                                       const std::string& proj_prefix) {
  if (mode == AlignMode::kNone)
    throw ConfigError("visualization export needs a bridge net; train with align beh or sem");
  if (table.kind() != kind) throw ContractError("visualization export: table kind mismatch");
  if (table.count() != index.size())
    throw ValidationError("visualization export: " + std::to_string(table.count()) +
                          " table rows for " + std::to_string(index.size()) + " entities");

  Tape tape;
  const LeafMap leaves = register_leaves(tape, model.params());
  std::vector<std::size_t> ids(index.size());
  std::iota(ids.begin(), ids.end(), 0);
  const Var behavioral = kind == EntityKind::kStudent
                             ? model.behavioral_students(tape, leaves, ids)
                             : model.behavioral_exercises(tape, leaves, ids);
  const Var behavioral_unit = tape.l2norm_rows(behavioral);
  const Var bridge_input = mode == AlignMode::kBeh
                               ? tape.leaf(table.matrix(), false)
                               : behavioral;
  const Var projected =
      tape.l2norm_rows(projection::apply(tape, leaves, proj_prefix, bridge_input));

  const Tensor& b = tape.value(behavioral_unit);
  const Tensor& p = tape.value(projected);
  std::string out;
  for (std::size_t i = 0; i < index.size(); ++i) {
    nlohmann::ordered_json row;
    row["kind"] = to_string(kind);
    row["id"] = index.name(i);
    row["behavioral"] = std::vector<double>(b.row(i).begin(), b.row(i).end());
    row["semantic_projected"] = std::vector<double>(p.row(i).begin(), p.row(i).end());
    out += row.dump() + "\n";
  }
  return out;
}

}  // namespace cogdiag
