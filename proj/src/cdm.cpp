#include "cogdiag/cdm.hpp"

#include <algorithm>
#include <cmath>

#include "cogdiag/errors.hpp"

namespace cogdiag {

namespace {

constexpr double kClampLo = 1e-7;
constexpr double kClampHi = 1.0 - 1e-7;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor normal_init(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t = Tensor::zeros(rows, cols);
  for (auto& x : t.data()) x = rng.normal();
  return t;
}

Tensor normal_init(std::size_t n, Rng& rng) {
  Tensor t = Tensor::zeros(n);
  for (auto& x : t.data()) x = rng.normal();
  return t;
}

Tensor uniform_init(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  Tensor t = Tensor::zeros(rows, cols);
  for (auto& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

Tensor uniform_init(std::size_t n, double lo, double hi, Rng& rng) {
  Tensor t = Tensor::zeros(n);
  for (auto& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

// The prediction stack keeps its weights non-negative, so drawing them
// non-negative up front makes the per-step clamp a no-op at the start;
// a mixed-sign draw would lose half its mass to the first clamp and
// leave the layer saturated by the surviving positive half.
Tensor nonneg_layer_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(fan_in, fan_out);
  for (auto& x : t.data()) x = rng.uniform(0.0, bound);
  return t;
}

// Non-negative weights over sigmoid activations (mean 1/2) push every
// pre-activation up by 0.5 * column_sum(w), wide layers far into
// saturation. Starting each bias at the negative of that offset puts the
// unit at its responsive operating point from the first step.
Tensor centering_bias(const Tensor& w) {
  Tensor b = Tensor::zeros(w.cols());
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) sum += w.at(i, j);
    b[j] = -0.5 * sum;
  }
  return b;
}

double ncd_forward(std::span<const double> student_row, std::span<const double> difficulty_row,
                   double disc_logit, std::span<const double> q_row, const Tensor& w1,
                   const Tensor& b1, const Tensor& w2, const Tensor& b2, const Tensor& w3,
                   const Tensor& b3) {
  const std::size_t k = q_row.size();
  if (student_row.size() != k || difficulty_row.size() != k)
    throw ShapeError("ncd rows must all have the concept width " + std::to_string(k));
  if (w1.rows() != k)
    throw ShapeError("ncd first layer expects width " + std::to_string(w1.rows()) + ", got " +
                     std::to_string(k));
  const double disc = sigmoid(disc_logit);
  std::vector<double> x(k);
  for (std::size_t i = 0; i < k; ++i)
    x[i] = q_row[i] * (sigmoid(student_row[i]) - sigmoid(difficulty_row[i])) * disc;

  const std::size_t h1 = w1.cols(), h2 = w2.cols();
  std::vector<double> a1(h1), a2(h2);
  for (std::size_t j = 0; j < h1; ++j) {
    double acc = b1[j];
    for (std::size_t i = 0; i < k; ++i) acc += x[i] * w1.at(i, j);
    a1[j] = sigmoid(acc);
  }
  for (std::size_t j = 0; j < h2; ++j) {
    double acc = b2[j];
    for (std::size_t i = 0; i < h1; ++i) acc += a1[i] * w2.at(i, j);
    a2[j] = sigmoid(acc);
  }
  double out = b3[0];
  for (std::size_t i = 0; i < h2; ++i) out += a2[i] * w3.at(i, 0);
  return sigmoid(out);
}

}  // namespace

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "irt") return ModelKind::kIrt;
  if (s == "mirt") return ModelKind::kMirt;
  if (s == "dina") return ModelKind::kDina;
  if (s == "ncd") return ModelKind::kNcd;
  throw ConfigError("unknown model kind: " + s + " (expected irt|mirt|dina|ncd)");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kIrt: return "irt";
    case ModelKind::kMirt: return "mirt";
    case ModelKind::kDina: return "dina";
    case ModelKind::kNcd: return "ncd";
  }
  throw ContractError("unhandled model kind");
}

double predict_irt(double theta, double a, double b) { return sigmoid(a * (theta - b)); }

double predict_mirt(std::span<const double> theta, std::span<const double> a, double b) {
  if (theta.size() != a.size())
    throw ShapeError("mirt theta dim " + std::to_string(theta.size()) + " vs a dim " +
                     std::to_string(a.size()));
  double dot = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) dot += theta[i] * a[i];
  return sigmoid(dot - b);
}

double predict_dina(std::span<const double> mastery_logits, double s_logit, double g_logit,
                    std::span<const std::size_t> required) {
  if (required.empty()) throw ContractError("dina requires a non-empty concept set");
  double eta = 1.0;
  for (std::size_t k : required) {
    if (k >= mastery_logits.size())
      throw ShapeError("dina required concept " + std::to_string(k) + " out of range");
    eta *= sigmoid(mastery_logits[k]);
  }
  const double s = sigmoid(s_logit);
  const double g = sigmoid(g_logit);
  return g * (1.0 - eta) + (1.0 - s) * eta;
}

double predict_ncd(std::span<const double> student_row, std::span<const double> difficulty_row,
                   double disc_logit, std::span<const double> q_row, const NcdLayers& layers) {
  return ncd_forward(student_row, difficulty_row, disc_logit, q_row, layers.w1, layers.b1,
                     layers.w2, layers.b2, layers.w3, layers.b3);
}

double bce_loss(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size())
    throw ShapeError("bce sizes disagree: " + std::to_string(predictions.size()) + " vs " +
                     std::to_string(labels.size()));
  double loss = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double y = std::clamp(predictions[i], kClampLo, kClampHi);
    loss -= labels[i] * std::log(y) + (1.0 - labels[i]) * std::log(1.0 - y);
  }
  return loss;
}

CdmModel CdmModel::create(ModelKind kind, std::size_t n_students, std::size_t n_exercises,
                          std::size_t n_concepts, Rng& rng, NcdConfig ncd, std::size_t mirt_dim) {
  if (n_students == 0 || n_exercises == 0 || n_concepts == 0)
    throw ConfigError("model needs at least one student, exercise, and concept");
  if (mirt_dim == 0) throw ConfigError("mirt latent dimension must be positive");
  CdmModel m;
  m.kind_ = kind;
  m.n_students_ = n_students;
  m.n_exercises_ = n_exercises;
  m.n_concepts_ = n_concepts;
  m.mirt_dim_ = mirt_dim;
  // Trait and difficulty tables start at unit scale so the very first
  // epoch sees prediction spread in the sigmoid's responsive range;
  // near-zero starts leave every logit indistinguishable and the output
  // layers calibrate to a constant before any ranking signal arrives.
  // Discrimination-style parameters lean positive, and slip/guess logits
  // start near sigmoid^-1(0.2).
  switch (kind) {
    case ModelKind::kIrt:
      m.params_.add("student_theta", normal_init(n_students, rng));
      m.params_.add("exercise_a", uniform_init(n_exercises, 0.5, 1.5, rng));
      m.params_.add("exercise_b", normal_init(n_exercises, rng));
      break;
    case ModelKind::kMirt: {
      const double a_scale = 1.0 / std::sqrt(static_cast<double>(mirt_dim));
      m.params_.add("student_theta", normal_init(n_students, mirt_dim, rng));
      m.params_.add("exercise_a",
                    uniform_init(n_exercises, mirt_dim, 0.5 * a_scale, 1.5 * a_scale, rng));
      m.params_.add("exercise_b", normal_init(n_exercises, rng));
      break;
    }
    case ModelKind::kDina:
      m.params_.add("student_mastery", normal_init(n_students, n_concepts, rng));
      m.params_.add("exercise_slip", uniform_init(n_exercises, -1.6, -1.2, rng));
      m.params_.add("exercise_guess", uniform_init(n_exercises, -1.6, -1.2, rng));
      break;
    case ModelKind::kNcd:
      if (ncd.hidden1 == 0 || ncd.hidden2 == 0)
        throw ConfigError("ncd hidden widths must be positive");
      {
        m.params_.add("student_emb", normal_init(n_students, n_concepts, rng));
        m.params_.add("exercise_diff", normal_init(n_exercises, n_concepts, rng));
        m.params_.add("exercise_disc", normal_init(n_exercises, rng));
        Tensor w1 = nonneg_layer_init(n_concepts, ncd.hidden1, rng);
        Tensor w2 = nonneg_layer_init(ncd.hidden1, ncd.hidden2, rng);
        Tensor w3 = nonneg_layer_init(ncd.hidden2, 1, rng);
        Tensor b2 = centering_bias(w2);
        Tensor b3 = centering_bias(w3);
        m.params_.add("pred_w1", std::move(w1));
        // layer-1 inputs are signed proficiency gaps with zero mean, so
        // its bias needs no offset
        m.params_.add("pred_b1", Tensor::zeros(ncd.hidden1));
        m.params_.add("pred_w2", std::move(w2));
        m.params_.add("pred_b2", std::move(b2));
        m.params_.add("pred_w3", std::move(w3));
        m.params_.add("pred_b3", std::move(b3));
      }
      break;
  }
  return m;
}

CdmModel CdmModel::from_checkpoint(Checkpoint ckpt) {
  auto need = [&](const std::string& key) -> std::string {
    auto it = ckpt.meta.find(key);
    if (it == ckpt.meta.end())
      throw ValidationError("checkpoint metadata is missing the " + key + " field");
    return it->second;
  };
  auto need_count = [&](const std::string& key) -> std::size_t {
    try {
      return std::stoull(need(key));
    } catch (const std::logic_error&) {
      throw ValidationError("checkpoint metadata field " + key + " is not a count");
    }
  };
  CdmModel m;
  m.kind_ = model_kind_from_string(need("model"));
  m.n_students_ = need_count("n_students");
  m.n_exercises_ = need_count("n_exercises");
  m.n_concepts_ = need_count("n_concepts");
  m.mirt_dim_ = need_count("mirt_dim");
  m.params_ = std::move(ckpt.params);
  const char* required[] = {"student_theta", "student_mastery", "student_emb"};
  bool has_student = false;
  for (const char* name : required) has_student = has_student || m.params_.contains(name);
  if (!has_student) throw ValidationError("checkpoint holds no student table");
  return m;
}

Checkpoint CdmModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta["model"] = to_string(kind_);
  ckpt.meta["n_students"] = std::to_string(n_students_);
  ckpt.meta["n_exercises"] = std::to_string(n_exercises_);
  ckpt.meta["n_concepts"] = std::to_string(n_concepts_);
  ckpt.meta["mirt_dim"] = std::to_string(mirt_dim_);
  for (const auto& e : params_.entries()) ckpt.params.add(e.name, e.value);
  return ckpt;
}

Var CdmModel::predict_batch(Tape& tape, const LeafMap& leaves, std::span<const std::size_t> students,
                            std::span<const std::size_t> exercises, const QMatrix& q) const {
  if (students.size() != exercises.size())
    throw ShapeError("batch id lists disagree: " + std::to_string(students.size()) + " vs " +
                     std::to_string(exercises.size()));
  const std::size_t batch = students.size();
  if (batch == 0) throw ContractError("empty prediction batch");

  auto q_rows_leaf = [&]() {
    Tensor rows = Tensor::zeros(batch, n_concepts_);
    for (std::size_t i = 0; i < batch; ++i) {
      auto row = q.row(exercises[i]);
      for (std::size_t k = 0; k < n_concepts_; ++k) rows.at(i, k) = row[k];
    }
    return tape.leaf(std::move(rows));
  };

  switch (kind_) {
    case ModelKind::kIrt: {
      Var theta = tape.gather_rows(leaves.at("student_theta"), students);
      Var a = tape.gather_rows(leaves.at("exercise_a"), exercises);
      Var b = tape.gather_rows(leaves.at("exercise_b"), exercises);
      return tape.sigmoid(tape.mul(a, tape.sub(theta, b)));
    }
    case ModelKind::kMirt: {
      Var theta = tape.gather_rows(leaves.at("student_theta"), students);
      Var a = tape.gather_rows(leaves.at("exercise_a"), exercises);
      Var b = tape.gather_rows(leaves.at("exercise_b"), exercises);
      Var dot = tape.row_sum(tape.mul(theta, a));
      return tape.sigmoid(tape.sub(dot, b));
    }
    case ModelKind::kDina: {
      Var mastery = tape.gather_rows(leaves.at("student_mastery"), students);
      Var qrows = q_rows_leaf();
      Var eta = tape.exp(tape.row_sum(tape.mul(qrows, tape.log(tape.sigmoid(mastery)))));
      Var s = tape.sigmoid(tape.gather_rows(leaves.at("exercise_slip"), exercises));
      Var g = tape.sigmoid(tape.gather_rows(leaves.at("exercise_guess"), exercises));
      Var ones = tape.leaf(Tensor::from_vector(std::vector<double>(batch, 1.0)));
      Var miss = tape.mul(g, tape.sub(ones, eta));
      Var hit = tape.mul(tape.sub(ones, s), eta);
      return tape.add(miss, hit);
    }
    case ModelKind::kNcd: {
      Var hs = tape.sigmoid(tape.gather_rows(leaves.at("student_emb"), students));
      Var hd = tape.sigmoid(tape.gather_rows(leaves.at("exercise_diff"), exercises));
      Var disc = tape.sigmoid(tape.gather_rows(leaves.at("exercise_disc"), exercises));
      Var qrows = q_rows_leaf();
      Var x = tape.mul_col(tape.mul(qrows, tape.sub(hs, hd)), disc);
      Var h1 = tape.sigmoid(tape.add_bias(tape.matmul(x, leaves.at("pred_w1")), leaves.at("pred_b1")));
      Var h2 = tape.sigmoid(tape.add_bias(tape.matmul(h1, leaves.at("pred_w2")), leaves.at("pred_b2")));
      Var out = tape.add_bias(tape.matmul(h2, leaves.at("pred_w3")), leaves.at("pred_b3"));
      return tape.sigmoid(tape.row_sum(out));
    }
  }
  throw ContractError("unhandled model kind");
}

Var CdmModel::bce_on_tape(Tape& tape, Var predictions, const std::vector<double>& labels) {
  const Tensor& p = tape.value(predictions);
  if (p.size() != labels.size())
    throw ShapeError("bce sizes disagree: " + std::to_string(p.size()) + " vs " +
                     std::to_string(labels.size()));
  Var y = tape.clamp(predictions, kClampLo, kClampHi);
  Tensor r = Tensor::zeros(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0)
      throw ValidationError("bce labels must be 0 or 1");
    r[i] = labels[i];
  }
  Var rv = tape.leaf(std::move(r));
  Var ones = tape.leaf(Tensor::from_vector(std::vector<double>(labels.size(), 1.0)));
  Var pos = tape.mul(rv, tape.log(y));
  Var neg = tape.mul(tape.sub(ones, rv), tape.log(tape.sub(ones, y)));
  return tape.scale(tape.sum(tape.add(pos, neg)), -1.0);
}

Var CdmModel::behavioral_students(Tape& tape, const LeafMap& leaves,
                                  std::span<const std::size_t> ids) const {
  switch (kind_) {
    case ModelKind::kIrt:
      return tape.gather_rows(leaves.at("student_theta"), ids);
    case ModelKind::kMirt:
      return tape.gather_rows(leaves.at("student_theta"), ids);
    case ModelKind::kDina:
      return tape.gather_rows(leaves.at("student_mastery"), ids);
    case ModelKind::kNcd:
      return tape.gather_rows(leaves.at("student_emb"), ids);
  }
  throw ContractError("unhandled model kind");
}

Var CdmModel::behavioral_exercises(Tape& tape, const LeafMap& leaves,
                                   std::span<const std::size_t> ids) const {
  switch (kind_) {
    case ModelKind::kIrt: {
      Var a = tape.gather_rows(leaves.at("exercise_a"), ids);
      Var b = tape.gather_rows(leaves.at("exercise_b"), ids);
      return tape.concat_cols(a, b);
    }
    case ModelKind::kMirt: {
      Var a = tape.gather_rows(leaves.at("exercise_a"), ids);
      Var b = tape.gather_rows(leaves.at("exercise_b"), ids);
      return tape.concat_cols(a, b);
    }
    case ModelKind::kDina: {
      Var s = tape.gather_rows(leaves.at("exercise_slip"), ids);
      Var g = tape.gather_rows(leaves.at("exercise_guess"), ids);
      return tape.concat_cols(s, g);
    }
    case ModelKind::kNcd: {
      Var diff = tape.gather_rows(leaves.at("exercise_diff"), ids);
      Var disc = tape.gather_rows(leaves.at("exercise_disc"), ids);
      return tape.concat_cols(diff, disc);
    }
  }
  throw ContractError("unhandled model kind");
}

std::size_t CdmModel::student_behavioral_dim() const {
  switch (kind_) {
    case ModelKind::kIrt: return 1;
    case ModelKind::kMirt: return mirt_dim_;
    case ModelKind::kDina: return n_concepts_;
    case ModelKind::kNcd: return n_concepts_;
  }
  throw ContractError("unhandled model kind");
}

std::size_t CdmModel::exercise_behavioral_dim() const {
  switch (kind_) {
    case ModelKind::kIrt: return 2;
    case ModelKind::kMirt: return mirt_dim_ + 1;
    case ModelKind::kDina: return 2;
    case ModelKind::kNcd: return n_concepts_ + 1;
  }
  throw ContractError("unhandled model kind");
}

void CdmModel::project_nonneg() {
  if (kind_ != ModelKind::kNcd) return;
  for (const char* name : {"pred_w1", "pred_w2", "pred_w3"}) {
    Tensor& w = params_.get(name);
    for (auto& x : w.data())
      if (x < 0.0) x = 0.0;
  }
}

double CdmModel::predict_one(std::size_t student, std::size_t exercise, const QMatrix& q) const {
  if (student >= n_students_ || exercise >= n_exercises_)
    throw ContractError("predict_one ids out of range");
  switch (kind_) {
    case ModelKind::kIrt:
      return predict_irt(params_.get("student_theta")[student], params_.get("exercise_a")[exercise],
                         params_.get("exercise_b")[exercise]);
    case ModelKind::kMirt: {
      const Tensor& theta = params_.get("student_theta");
      const Tensor& a = params_.get("exercise_a");
      return predict_mirt(theta.row(student), a.row(exercise),
                          params_.get("exercise_b")[exercise]);
    }
    case ModelKind::kDina: {
      std::vector<std::size_t> required;
      for (std::size_t k = 0; k < n_concepts_; ++k)
        if (q.has(exercise, k)) required.push_back(k);
      return predict_dina(params_.get("student_mastery").row(student),
                          params_.get("exercise_slip")[exercise],
                          params_.get("exercise_guess")[exercise], required);
    }
    case ModelKind::kNcd: {
      auto q_row = q.row(exercise);
      return ncd_forward(params_.get("student_emb").row(student),
                         params_.get("exercise_diff").row(exercise),
                         params_.get("exercise_disc")[exercise], q_row, params_.get("pred_w1"),
                         params_.get("pred_b1"), params_.get("pred_w2"), params_.get("pred_b2"),
                         params_.get("pred_w3"), params_.get("pred_b3"));
    }
  }
  throw ContractError("unhandled model kind");
}

NcdLayers CdmModel::ncd_layers() const {
  if (kind_ != ModelKind::kNcd) throw ContractError("prediction layers exist only on ncd");
  return {params_.get("pred_w1"), params_.get("pred_b1"), params_.get("pred_w2"),
          params_.get("pred_b2"), params_.get("pred_w3"), params_.get("pred_b3")};
}

}  // namespace cogdiag
