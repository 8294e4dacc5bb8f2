#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cogdiag/checkpoint.hpp"
#include "cogdiag/dataset.hpp"
#include "cogdiag/optimizer.hpp"
#include "cogdiag/rng.hpp"
#include "cogdiag/tape.hpp"

namespace cogdiag {

enum class ModelKind { kIrt, kMirt, kDina, kNcd };

ModelKind model_kind_from_string(const std::string& s);  // ConfigError on unknown
std::string to_string(ModelKind kind);

struct NcdConfig {
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 256;
};

// Prediction layers of the neural model; weights are element-wise
// non-negative so mastery can only help.
struct NcdLayers {
  Tensor w1, b1, w2, b2, w3, b3;
};

// Pure interaction functions. Each returns the probability of a correct
// response, strictly inside (0,1).
double predict_irt(double theta, double a, double b);
double predict_mirt(std::span<const double> theta, std::span<const double> a, double b);
// Differentiable relaxation: eta is the product of per-concept mastery
// sigmoids over the required set, and p = g*(1-eta) + (1-s)*eta. On
// saturated (binary) masteries this coincides with the classic form.
double predict_dina(std::span<const double> mastery_logits, double s_logit, double g_logit,
                    std::span<const std::size_t> required);
double predict_ncd(std::span<const double> student_row, std::span<const double> difficulty_row,
                   double disc_logit, std::span<const double> q_row, const NcdLayers& layers);

// Summed binary cross entropy; predictions are clamped into
// [1e-7, 1-1e-7] before the logs. Per-batch averaging is for logging only.
double bce_loss(std::span<const double> predictions, std::span<const double> labels);

// One model kind plus its trainable parameters. Prediction is pure; the
// trainer is the only mutator.
class CdmModel {
 public:
  static CdmModel create(ModelKind kind, std::size_t n_students, std::size_t n_exercises,
                         std::size_t n_concepts, Rng& rng, NcdConfig ncd = {},
                         std::size_t mirt_dim = 16);

  static CdmModel from_checkpoint(Checkpoint ckpt);
  Checkpoint to_checkpoint() const;

  ModelKind kind() const { return kind_; }
  std::size_t n_students() const { return n_students_; }
  std::size_t n_exercises() const { return n_exercises_; }
  std::size_t n_concepts() const { return n_concepts_; }
  std::size_t mirt_dim() const { return mirt_dim_; }

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // Batched forward pass on a tape: probability per (student, exercise)
  // pair, as a length-B vector in (0,1).
  Var predict_batch(Tape& tape, const LeafMap& leaves, std::span<const std::size_t> students,
                    std::span<const std::size_t> exercises, const QMatrix& q) const;

  // Summed BCE on the tape with the prediction clamp applied.
  static Var bce_on_tape(Tape& tape, Var predictions, const std::vector<double>& labels);

  // Behavioral embeddings for alignment, one row per requested entity.
  // Students: IRT theta (1-d), MIRT theta, DINA mastery logits, NCD
  // student row. Exercises: IRT/MIRT (a, b) concatenated, DINA
  // (slip, guess) logits, NCD difficulty row with the discrimination
  // logit appended.
  Var behavioral_students(Tape& tape, const LeafMap& leaves,
                          std::span<const std::size_t> ids) const;
  Var behavioral_exercises(Tape& tape, const LeafMap& leaves,
                           std::span<const std::size_t> ids) const;
  std::size_t student_behavioral_dim() const;
  std::size_t exercise_behavioral_dim() const;

  // Clamps prediction-layer weights at zero. No-op for non-neural kinds;
  // must run after every optimizer step on the neural model.
  void project_nonneg();

  // Tape-free prediction for evaluation.
  double predict_one(std::size_t student, std::size_t exercise, const QMatrix& q) const;

  NcdLayers ncd_layers() const;  // ContractError unless kind is NCD

 private:
  CdmModel() = default;

  ModelKind kind_ = ModelKind::kIrt;
  std::size_t n_students_ = 0, n_exercises_ = 0, n_concepts_ = 0, mirt_dim_ = 16;
  ParameterStore params_;
};

}  // namespace cogdiag
