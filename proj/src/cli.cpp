#include "cogdiag/cli.hpp"

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cogdiag/alignment.hpp"
#include "cogdiag/cdm.hpp"
#include "cogdiag/checkpoint.hpp"
#include "cogdiag/dataset.hpp"
#include "cogdiag/errors.hpp"
#include "cogdiag/io.hpp"
#include "cogdiag/llmdiag.hpp"
#include "cogdiag/pipeline.hpp"

namespace cogdiag {
namespace {

using ojson = nlohmann::ordered_json;
using std::filesystem::path;

// Every subcommand ends by writing one of these next to its outputs, so
// a finished run is self-describing: what ran, with which resolved
// settings, on which inputs, producing which files, taking how long.
struct ManifestSink {
  std::string subcommand;
  ojson config = ojson::object();
  std::uint64_t seed = 0;
  ojson inputs = ojson::object();
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void add_input(const path& p) { inputs[p.string()] = file_digest(p); }

  void add_dataset_inputs(const path& dir) {
    for (const char* name : {"train.jsonl", "valid.jsonl", "test.jsonl", "indices.json"})
      add_input(dir / name);
  }

  void write(const path& dir) const {
    const auto elapsed = std::chrono::steady_clock::now() - start;
    ojson doc;
    doc["subcommand"] = subcommand;
    doc["config"] = config;
    doc["seed"] = seed;
    doc["inputs"] = inputs;
    doc["outputs"] = outputs;
    doc["duration_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
    write_file_atomic(dir / "manifest.json", doc.dump(2) + "\n");
  }
};

std::vector<std::vector<double>> matrix_rows(const Tensor& t) {
  std::vector<std::vector<double>> rows(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto row = t.row(r);
    rows[r].assign(row.begin(), row.end());
  }
  return rows;
}

std::vector<double> column_values(const Tensor& t) {
  std::vector<double> values(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) values[r] = t[r];
  return values;
}

struct IngestArgs {
  std::string logs;
  std::string out;
  double train_ratio = 0.8;
  double valid_ratio = 0.1;
  double test_ratio = 0.1;
  std::uint64_t seed = 0;
};

struct SynthArgs {
  std::string out;
  std::size_t students = 200;
  std::size_t exercises = 100;
  std::size_t concepts = 12;
  std::size_t logs_per_student = 10;
  double noise = 0.1;
  std::size_t semantic_dim = 32;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 1;
  double train_ratio = 0.8;
  double valid_ratio = 0.1;
  double test_ratio = 0.1;
};

struct DiagnoseArgs {
  std::string dataset;
  std::string out;
  std::size_t max_chars = 0;
  bool offline = false;  // forces the stub even when an endpoint is configured
};

struct EmbedArgs {
  std::string dataset;
  std::string diagnoses;
  std::string out;
  std::size_t stub_dim = 256;
  bool offline = false;
};

struct TrainArgs {
  std::string dataset;
  std::string embeddings;
  std::string out;
  std::string model = "ncd";
  std::string align = "none";
  double alpha = 0.04;
  double beta = 0.015;
  double lambda = 0.2;
  double tau = 0.2;
  std::size_t topk = 20;
  double r_min = 0.1;
  double r_max = 0.5;
  std::size_t global_cap = 8192;
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double lr = 0.002;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  std::size_t mirt_dim = 16;
  std::size_t ncd_hidden1 = 512;
  std::size_t ncd_hidden2 = 256;
  std::size_t proj_hidden = projection::kDefaultHidden;
};

struct EvalArgs {
  std::string dataset;
  std::string checkpoint;
  std::string out;
  std::size_t cold_lt = 3;
  std::size_t warm_gt = 10;
};

struct SweepArgs {
  TrainArgs train;
  std::vector<double> ratios{std::begin(kDefaultDropoutRatios), std::end(kDefaultDropoutRatios)};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

struct ExportArgs {
  std::string dataset;
  std::string checkpoint;
  std::string embeddings;
  std::string kind = "both";
  std::string out;
};

void add_train_flags(CLI::App* sub, TrainArgs& a) {
  sub->add_option("--dataset", a.dataset, "Dataset directory produced by ingest or synth")
      ->required();
  sub->add_option("--embeddings", a.embeddings,
                  "Semantic embeddings JSONL; required unless --align none");
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--model", a.model, "irt | mirt | dina | ncd");
  sub->add_option("--align", a.align, "none | beh | sem");
  sub->add_option("--alpha", a.alpha, "Weight of the global contrast term");
  sub->add_option("--beta", a.beta, "Weight of the local contrast term");
  sub->add_option("--lambda", a.lambda, "Weight of the reconstruction term");
  sub->add_option("--tau", a.tau, "Contrastive softmax temperature");
  sub->add_option("--topk", a.topk, "Semantic neighbors per entity");
  sub->add_option("--r-min", a.r_min, "Mask ratio at frequency zero");
  sub->add_option("--r-max", a.r_max, "Mask ratio at the maximal frequency");
  sub->add_option("--global-cap", a.global_cap, "Negative-sample cap for the global contrast");
  sub->add_option("--epochs", a.epochs, "Maximum training epochs");
  sub->add_option("--batch-size", a.batch_size, "Logs per optimizer step");
  sub->add_option("--lr", a.lr, "Adam learning rate");
  sub->add_option("--patience", a.patience, "Epochs without validation gain before stopping");
  sub->add_option("--seed", a.seed, "Seed for init, shuffling, masking, and sampling");
  sub->add_option("--mirt-dim", a.mirt_dim, "Latent dimension of the MIRT model");
  sub->add_option("--ncd-hidden1", a.ncd_hidden1, "First hidden width of the neural model");
  sub->add_option("--ncd-hidden2", a.ncd_hidden2, "Second hidden width of the neural model");
  sub->add_option("--proj-hidden", a.proj_hidden, "Hidden width of the bridge nets");
}

ojson train_config_json(const TrainArgs& a) {
  ojson cfg;
  cfg["dataset"] = a.dataset;
  cfg["embeddings"] = a.embeddings;
  cfg["model"] = a.model;
  cfg["align"] = a.align;
  cfg["alpha"] = a.alpha;
  cfg["beta"] = a.beta;
  cfg["lambda"] = a.lambda;
  cfg["tau"] = a.tau;
  cfg["topk"] = a.topk;
  cfg["r_min"] = a.r_min;
  cfg["r_max"] = a.r_max;
  cfg["global_cap"] = a.global_cap;
  cfg["epochs"] = a.epochs;
  cfg["batch_size"] = a.batch_size;
  cfg["lr"] = a.lr;
  cfg["patience"] = a.patience;
  cfg["seed"] = a.seed;
  cfg["mirt_dim"] = a.mirt_dim;
  cfg["ncd_hidden1"] = a.ncd_hidden1;
  cfg["ncd_hidden2"] = a.ncd_hidden2;
  cfg["proj_hidden"] = a.proj_hidden;
  return cfg;
}

TrainConfig to_train_config(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.model = model_kind_from_string(a.model);
  cfg.align = align_mode_from_string(a.align);
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.lr = a.lr;
  cfg.patience = a.patience;
  cfg.seed = a.seed;
  cfg.mirt_dim = a.mirt_dim;
  cfg.ncd.hidden1 = a.ncd_hidden1;
  cfg.ncd.hidden2 = a.ncd_hidden2;
  cfg.proj_hidden = a.proj_hidden;
  return cfg;
}

AlignmentConfig to_align_config(const TrainArgs& a) {
  AlignmentConfig cfg;
  cfg.alpha = a.alpha;
  cfg.beta = a.beta;
  cfg.lambda = a.lambda;
  cfg.tau = a.tau;
  cfg.k = a.topk;
  cfg.r_min = a.r_min;
  cfg.r_max = a.r_max;
  cfg.global_cap = a.global_cap;
  return cfg;
}

// Loads both semantic tables when the alignment mode needs them. The
// tables must outlive the returned pointer pair.
struct LoadedTables {
  std::optional<EmbeddingTable> students;
  std::optional<EmbeddingTable> exercises;

  AlignmentInputs inputs() const {
    return {students ? &*students : nullptr, exercises ? &*exercises : nullptr};
  }
};

LoadedTables load_tables(const TrainArgs& a, const DatasetSplit& split, ManifestSink& sink) {
  LoadedTables tables;
  if (align_mode_from_string(a.align) == AlignMode::kNone) return tables;
  if (a.embeddings.empty())
    throw ConfigError("--align " + a.align + " needs --embeddings");
  sink.add_input(a.embeddings);
  tables.students = EmbeddingTable::load_jsonl(a.embeddings, EntityKind::kStudent,
                                               split.students);
  tables.exercises = EmbeddingTable::load_jsonl(a.embeddings, EntityKind::kExercise,
                                                split.exercises);
  return tables;
}

std::array<double, 3> ratio_array(double train, double valid, double test) {
  return {train, valid, test};
}

void cmd_ingest(const IngestArgs& a) {
  ManifestSink sink;
  sink.subcommand = "ingest";
  sink.seed = a.seed;
  sink.config = {{"logs", a.logs},
                 {"out", a.out},
                 {"train_ratio", a.train_ratio},
                 {"valid_ratio", a.valid_ratio},
                 {"test_ratio", a.test_ratio},
                 {"seed", a.seed}};
  sink.add_input(a.logs);
  const auto logs = parse_response_logs(read_file(a.logs));
  const DatasetSplit split =
      split_dataset(logs, ratio_array(a.train_ratio, a.valid_ratio, a.test_ratio), a.seed);
  const path out(a.out);
  save_dataset_dir(out, split);
  for (const char* name : {"train.jsonl", "valid.jsonl", "test.jsonl", "indices.json"})
    sink.outputs.push_back((out / name).string());
  sink.write(out);
}

void cmd_synth(const SynthArgs& a) {
  ManifestSink sink;
  sink.subcommand = "synth";
  sink.seed = a.seed;
  sink.config = {{"out", a.out},
                 {"students", a.students},
                 {"exercises", a.exercises},
                 {"concepts", a.concepts},
                 {"logs_per_student", a.logs_per_student},
                 {"noise", a.noise},
                 {"semantic_dim", a.semantic_dim},
                 {"seed", a.seed},
                 {"split_seed", a.split_seed},
                 {"train_ratio", a.train_ratio},
                 {"valid_ratio", a.valid_ratio},
                 {"test_ratio", a.test_ratio}};
  SyntheticSpec spec;
  spec.n_students = a.students;
  spec.n_exercises = a.exercises;
  spec.n_concepts = a.concepts;
  spec.logs_per_student = a.logs_per_student;
  spec.noise = a.noise;
  spec.semantic_dim = a.semantic_dim;
  spec.seed = a.seed;
  const SyntheticData data = generate_synthetic(spec);
  const DatasetSplit split = split_dataset(
      data.logs, ratio_array(a.train_ratio, a.valid_ratio, a.test_ratio), a.split_seed);

  const path out(a.out);
  save_dataset_dir(out, split);
  const EmbeddingTable students = synthetic_table(data, EntityKind::kStudent, split.students);
  const EmbeddingTable exercises =
      synthetic_table(data, EntityKind::kExercise, split.exercises);
  write_file_atomic(
      out / "embeddings.jsonl",
      format_embedding_jsonl(EntityKind::kStudent, split.students, students.matrix()) +
          format_embedding_jsonl(EntityKind::kExercise, split.exercises, exercises.matrix()));

  ojson truth;
  truth["spec"] = sink.config;
  truth["student_traits"] = matrix_rows(data.student_traits);
  truth["exercise_a"] = column_values(data.exercise_a);
  truth["exercise_b"] = column_values(data.exercise_b);
  truth["exercise_concepts"] = data.exercise_concepts;
  truth["student_map"] = matrix_rows(data.student_map);
  truth["exercise_map"] = matrix_rows(data.exercise_map);
  write_file_atomic(out / "truth.json", truth.dump(2) + "\n");

  for (const char* name :
       {"train.jsonl", "valid.jsonl", "test.jsonl", "indices.json", "embeddings.jsonl",
        "truth.json"})
    sink.outputs.push_back((out / name).string());
  sink.write(out);
}

void cmd_diagnose(const DiagnoseArgs& a) {
  ManifestSink sink;
  sink.subcommand = "diagnose";
  EndpointConfig endpoint = EndpointConfig::from_env();
  if (a.offline) endpoint.offline = true;
  sink.config = {{"dataset", a.dataset},
                 {"out", a.out},
                 {"max_chars", a.max_chars},
                 {"offline", endpoint.offline},
                 {"chat_model", endpoint.chat_model}};
  sink.add_dataset_inputs(a.dataset);
  const DatasetSplit split = load_dataset_dir(a.dataset);
  const path out(a.out);
  ensure_dir(out);
  DiagnosisCache cache(out / "diagnoses.jsonl");
  run_llm_diagnosis(endpoint, split, cache, a.max_chars);
  sink.outputs.push_back((out / "diagnoses.jsonl").string());
  sink.write(out);
}

void cmd_embed(const EmbedArgs& a) {
  ManifestSink sink;
  sink.subcommand = "embed";
  EndpointConfig endpoint = EndpointConfig::from_env();
  if (a.offline) endpoint.offline = true;
  endpoint.stub_dim = a.stub_dim;
  sink.config = {{"dataset", a.dataset},
                 {"diagnoses", a.diagnoses},
                 {"out", a.out},
                 {"stub_dim", a.stub_dim},
                 {"offline", endpoint.offline},
                 {"embed_model", endpoint.embed_model}};
  sink.add_dataset_inputs(a.dataset);
  sink.add_input(a.diagnoses);
  const DatasetSplit split = load_dataset_dir(a.dataset);
  const auto records = read_diagnosis_records(a.diagnoses);
  const path out(a.out);
  ensure_dir(out);
  EmbeddingCache cache(out / "embed-cache.jsonl");
  const EmbeddingTable students =
      embed_diagnoses(endpoint, records, EntityKind::kStudent, split.students.size(), cache);
  const EmbeddingTable exercises =
      embed_diagnoses(endpoint, records, EntityKind::kExercise, split.exercises.size(), cache);
  write_file_atomic(
      out / "embeddings.jsonl",
      format_embedding_jsonl(EntityKind::kStudent, split.students, students.matrix()) +
          format_embedding_jsonl(EntityKind::kExercise, split.exercises, exercises.matrix()));
  sink.outputs.push_back((out / "embeddings.jsonl").string());
  sink.outputs.push_back((out / "embed-cache.jsonl").string());
  sink.write(out);
}

void cmd_train(const TrainArgs& a) {
  ManifestSink sink;
  sink.subcommand = "train";
  sink.seed = a.seed;
  sink.config = train_config_json(a);
  sink.config["out"] = a.out;
  sink.add_dataset_inputs(a.dataset);
  const DatasetSplit split = load_dataset_dir(a.dataset);
  const QMatrix q = build_q_matrix(split);
  const LoadedTables tables = load_tables(a, split, sink);

  const TrainConfig cfg = to_train_config(a);
  const AlignmentConfig align = to_align_config(a);
  TrainResult result = train(cfg, split, q, tables.inputs(), align);

  Checkpoint ckpt = result.model.to_checkpoint();
  ckpt.meta["align"] = a.align;
  ckpt.meta["seed"] = std::to_string(a.seed);
  ckpt.meta["best_epoch"] = std::to_string(result.best_epoch);
  const path out(a.out);
  ensure_dir(out);
  save_checkpoint((out / "checkpoint.json").string(), ckpt);
  write_file_atomic(out / "history.jsonl", format_history_jsonl(result.history));
  sink.outputs.push_back((out / "checkpoint.json").string());
  sink.outputs.push_back((out / "history.jsonl").string());
  sink.write(out);
}

void cmd_eval(const EvalArgs& a) {
  ManifestSink sink;
  sink.subcommand = "eval";
  sink.config = {{"dataset", a.dataset},
                 {"checkpoint", a.checkpoint},
                 {"out", a.out},
                 {"cold_lt", a.cold_lt},
                 {"warm_gt", a.warm_gt}};
  sink.add_dataset_inputs(a.dataset);
  sink.add_input(a.checkpoint);
  const DatasetSplit split = load_dataset_dir(a.dataset);
  const QMatrix q = build_q_matrix(split);
  const FrequencyTable freq = build_frequency_table(split);
  const CdmModel model = CdmModel::from_checkpoint(load_checkpoint(a.checkpoint));
  const auto rows = evaluate_cold_warm(model, split, q, freq, a.cold_lt, a.warm_gt);
  const path out(a.out);
  ensure_dir(out);
  write_file_atomic(out / "metrics.csv", format_metrics_csv(rows));
  write_file_atomic(out / "metrics.json", format_metrics_json(rows));
  sink.outputs.push_back((out / "metrics.csv").string());
  sink.outputs.push_back((out / "metrics.json").string());
  sink.write(out);
}

void cmd_sweep(const SweepArgs& a) {
  ManifestSink sink;
  sink.subcommand = "sweep-dropout";
  sink.seed = a.train.seed;
  sink.config = train_config_json(a.train);
  sink.config["out"] = a.train.out;
  sink.config["ratios"] = a.ratios;
  sink.config["seeds"] = a.seeds;
  sink.add_dataset_inputs(a.train.dataset);
  const DatasetSplit split = load_dataset_dir(a.train.dataset);
  const QMatrix q = build_q_matrix(split);
  const LoadedTables tables = load_tables(a.train, split, sink);

  const TrainConfig cfg = to_train_config(a.train);
  const AlignmentConfig align = to_align_config(a.train);
  const auto cells = dropout_sweep(cfg, split, q, tables.inputs(), align, a.ratios, a.seeds);
  const path out(a.train.out);
  ensure_dir(out);
  write_file_atomic(out / "sweep.csv", format_sweep_csv(cells));
  sink.outputs.push_back((out / "sweep.csv").string());
  sink.write(out);
}

void cmd_export(const ExportArgs& a) {
  ManifestSink sink;
  sink.subcommand = "export-emb";
  sink.config = {{"dataset", a.dataset},
                 {"checkpoint", a.checkpoint},
                 {"embeddings", a.embeddings},
                 {"kind", a.kind},
                 {"out", a.out}};
  sink.add_dataset_inputs(a.dataset);
  sink.add_input(a.checkpoint);
  sink.add_input(a.embeddings);
  const DatasetSplit split = load_dataset_dir(a.dataset);
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const auto align_it = ckpt.meta.find("align");
  if (align_it == ckpt.meta.end())
    throw ConfigError("checkpoint records no alignment mode; retrain with --align beh or sem");
  const AlignMode mode = align_mode_from_string(align_it->second);
  const CdmModel model = CdmModel::from_checkpoint(std::move(ckpt));

  const bool want_students = a.kind == "both" || a.kind == "student";
  const bool want_exercises = a.kind == "both" || a.kind == "exercise";
  if (!want_students && !want_exercises)
    throw ConfigError("--kind must be student, exercise, or both, got '" + a.kind + "'");

  std::string lines;
  if (want_students) {
    const auto table =
        EmbeddingTable::load_jsonl(a.embeddings, EntityKind::kStudent, split.students);
    lines += format_visualization_jsonl(model, mode, EntityKind::kStudent, split.students,
                                        table, "proj_student");
  }
  if (want_exercises) {
    const auto table =
        EmbeddingTable::load_jsonl(a.embeddings, EntityKind::kExercise, split.exercises);
    lines += format_visualization_jsonl(model, mode, EntityKind::kExercise, split.exercises,
                                        table, "proj_exercise");
  }
  const path out(a.out);
  ensure_dir(out);
  write_file_atomic(out / "embeddings-export.jsonl", lines);
  sink.outputs.push_back((out / "embeddings-export.jsonl").string());
  sink.write(out);
}

}  // namespace

void save_dataset_dir(const path& dir, const DatasetSplit& split) {
  ensure_dir(dir);
  write_file_atomic(dir / "train.jsonl", format_jsonl_logs(split.train));
  write_file_atomic(dir / "valid.jsonl", format_jsonl_logs(split.valid));
  write_file_atomic(dir / "test.jsonl", format_jsonl_logs(split.test));
  ojson idx;
  idx["students"] = split.students.names();
  idx["exercises"] = split.exercises.names();
  idx["concepts"] = split.concepts.names();
  write_file_atomic(dir / "indices.json", idx.dump(2) + "\n");
}

DatasetSplit load_dataset_dir(const path& dir) {
  DatasetSplit split;
  ojson idx;
  try {
    idx = ojson::parse(read_file(dir / "indices.json"));
    auto intern_all = [](EntityIndex& index, const ojson& names, const char* field) {
      for (const auto& name : names) {
        const auto id = name.get<std::string>();
        if (index.intern(id) != index.size() - 1)
          throw ValidationError("indices.json: duplicate " + std::string(field) + " '" + id +
                                "'");
      }
    };
    intern_all(split.students, idx.at("students"), "student");
    intern_all(split.exercises, idx.at("exercises"), "exercise");
    intern_all(split.concepts, idx.at("concepts"), "concept");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("indices.json: " + std::string(e.what()));
  }
  split.train = parse_response_logs(read_file(dir / "train.jsonl"));
  split.valid = parse_response_logs(read_file(dir / "valid.jsonl"));
  split.test = parse_response_logs(read_file(dir / "test.jsonl"));
  auto check = [&split](const std::vector<ResponseLog>& logs, const char* file) {
    for (const auto& log : logs) {
      if (!split.students.contains(log.student_id))
        throw ValidationError(std::string(file) + ": student '" + log.student_id +
                              "' is missing from indices.json");
      if (!split.exercises.contains(log.exercise_id))
        throw ValidationError(std::string(file) + ": exercise '" + log.exercise_id +
                              "' is missing from indices.json");
      for (const auto& concept_id : log.concepts)
        if (!split.concepts.contains(concept_id))
          throw ValidationError(std::string(file) + ": concept '" + concept_id +
                                "' is missing from indices.json");
    }
  };
  check(split.train, "train.jsonl");
  check(split.valid, "valid.jsonl");
  check(split.test, "test.jsonl");
  return split;
}

int cli_run(int argc, const char* const* argv) {
  CLI::App app{"cognitive diagnosis with semantically aligned response models"};
  app.set_config("--config", "", "Read options from an INI/TOML file (sections per subcommand)");
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Split raw response logs into a dataset dir");
  ingest_cmd->add_option("--logs", ingest.logs, "Raw logs, CSV or JSON lines")->required();
  ingest_cmd->add_option("--out", ingest.out, "Dataset directory to create")->required();
  ingest_cmd->add_option("--train-ratio", ingest.train_ratio, "Training share");
  ingest_cmd->add_option("--valid-ratio", ingest.valid_ratio, "Validation share");
  ingest_cmd->add_option("--test-ratio", ingest.test_ratio, "Test share");
  ingest_cmd->add_option("--seed", ingest.seed, "Shuffle seed");

  SynthArgs synth;
  auto* synth_cmd =
      app.add_subcommand("synth", "Generate a synthetic dataset with known ground truth");
  synth_cmd->add_option("--out", synth.out, "Dataset directory to create")->required();
  synth_cmd->add_option("--students", synth.students, "Number of students");
  synth_cmd->add_option("--exercises", synth.exercises, "Number of exercises");
  synth_cmd->add_option("--concepts", synth.concepts, "Number of knowledge concepts");
  synth_cmd->add_option("--logs-per-student", synth.logs_per_student,
                        "Distinct exercises answered per student");
  synth_cmd->add_option("--noise", synth.noise, "Noise added to the semantic rows");
  synth_cmd->add_option("--semantic-dim", synth.semantic_dim, "Semantic embedding width");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--split-seed", synth.split_seed, "Shuffle seed for the split");
  synth_cmd->add_option("--train-ratio", synth.train_ratio, "Training share");
  synth_cmd->add_option("--valid-ratio", synth.valid_ratio, "Validation share");
  synth_cmd->add_option("--test-ratio", synth.test_ratio, "Test share");

  DiagnoseArgs diagnose;
  auto* diagnose_cmd =
      app.add_subcommand("diagnose", "Produce textual diagnoses for every entity");
  diagnose_cmd->add_option("--dataset", diagnose.dataset, "Dataset directory")->required();
  diagnose_cmd->add_option("--out", diagnose.out, "Output directory")->required();
  diagnose_cmd->add_option("--max-chars", diagnose.max_chars,
                           "Prompt budget in characters; 0 means unlimited");
  diagnose_cmd->add_flag("--offline", diagnose.offline,
                         "Force the deterministic stub even when an endpoint is configured");

  EmbedArgs embed;
  auto* embed_cmd = app.add_subcommand("embed", "Embed diagnosis texts into semantic vectors");
  embed_cmd->add_option("--dataset", embed.dataset, "Dataset directory")->required();
  embed_cmd->add_option("--diagnoses", embed.diagnoses, "diagnoses.jsonl from diagnose")
      ->required();
  embed_cmd->add_option("--out", embed.out, "Output directory")->required();
  embed_cmd->add_option("--stub-dim", embed.stub_dim, "Embedding width of the offline stub");
  embed_cmd->add_flag("--offline", embed.offline,
                      "Force the deterministic stub even when an endpoint is configured");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a diagnosis model");
  add_train_flags(train_cmd, train_args);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on the test split");
  eval_cmd->add_option("--dataset", eval_args.dataset, "Dataset directory")->required();
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint.json from train")
      ->required();
  eval_cmd->add_option("--out", eval_args.out, "Output directory")->required();
  eval_cmd->add_option("--cold-lt", eval_args.cold_lt,
                       "Exercises seen fewer than this many times in training are cold");
  eval_cmd->add_option("--warm-gt", eval_args.warm_gt,
                       "Exercises seen more than this many times in training are warm");

  SweepArgs sweep;
  auto* sweep_cmd =
      app.add_subcommand("sweep-dropout", "Retrain under training-set thinning per cell");
  add_train_flags(sweep_cmd, sweep.train);
  sweep_cmd->add_option("--ratios", sweep.ratios, "Dropout ratios to sweep")->expected(-1);
  sweep_cmd->add_option("--seeds", sweep.seeds, "Seeds to average per ratio")->expected(-1);

  ExportArgs export_args;
  auto* export_cmd =
      app.add_subcommand("export-emb", "Export behavioral and projected semantic embeddings");
  export_cmd->add_option("--dataset", export_args.dataset, "Dataset directory")->required();
  export_cmd->add_option("--checkpoint", export_args.checkpoint, "checkpoint.json from train")
      ->required();
  export_cmd->add_option("--embeddings", export_args.embeddings, "Semantic embeddings JSONL")
      ->required();
  export_cmd->add_option("--kind", export_args.kind, "student | exercise | both");
  export_cmd->add_option("--out", export_args.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;
    std::cerr << app.help();
    return 1;
  }

  try {
    if (ingest_cmd->parsed()) cmd_ingest(ingest);
    if (synth_cmd->parsed()) cmd_synth(synth);
    if (diagnose_cmd->parsed()) cmd_diagnose(diagnose);
    if (embed_cmd->parsed()) cmd_embed(embed);
    if (train_cmd->parsed()) cmd_train(train_args);
    if (eval_cmd->parsed()) cmd_eval(eval_args);
    if (sweep_cmd->parsed()) cmd_sweep(sweep);
    if (export_cmd->parsed()) cmd_export(export_args);
    return 0;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const TransportError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cogdiag
