#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cogdiag/dataset.hpp"
#include "cogdiag/optimizer.hpp"
#include "cogdiag/rng.hpp"
#include "cogdiag/tape.hpp"
#include "cogdiag/tensor.hpp"

namespace cogdiag {

enum class EntityKind { kStudent, kExercise };

std::string to_string(EntityKind kind);
EntityKind entity_kind_from_string(const std::string& s);  // ConfigError on unknown

struct AlignmentConfig {
  double alpha = 0.04;   // weight of the global contrast
  double beta = 0.015;   // weight of the local contrast
  double lambda = 0.2;   // weight of the reconstruction contrast
  double tau = 0.2;      // softmax temperature
  std::size_t k = 20;    // semantic neighbors per entity
  double r_min = 0.1;    // mask ratio at frequency 0
  double r_max = 0.5;    // mask ratio at the maximal frequency
  std::size_t global_cap = 8192;  // negatives are subsampled beyond this

  void validate() const;  // ConfigError on violation
};

// L2-normalized semantic embeddings, one row per entity of one kind.
class EmbeddingTable {
 public:
  // Normalizes rows; a zero-norm row is a validation error.
  static EmbeddingTable from_rows(EntityKind kind, Tensor matrix, std::string source);

  // JSON-lines file of {kind, id, vector} objects. Rows of other kinds
  // are ignored; every entity in the index must appear exactly once.
  static EmbeddingTable load_jsonl(const std::filesystem::path& path, EntityKind kind,
                                   const EntityIndex& index);

  EntityKind kind() const { return kind_; }
  const Tensor& matrix() const { return matrix_; }
  std::size_t count() const { return matrix_.rows(); }
  std::size_t dim() const { return matrix_.cols(); }
  const std::string& source() const { return source_; }

 private:
  EntityKind kind_ = EntityKind::kStudent;
  Tensor matrix_;
  std::string source_;
};

// One {kind, id, vector} object per line, in dense index order.
std::string format_embedding_jsonl(EntityKind kind, const EntityIndex& index,
                                   const Tensor& matrix);

// For each entity, the k most cosine-similar peers in semantic space,
// most similar first, ties broken by ascending index, self excluded.
struct NeighborIndex {
  std::size_t k = 0;
  std::vector<std::vector<std::size_t>> neighbors;
};

NeighborIndex topk_neighbors(const EmbeddingTable& table, std::size_t k);

// One hidden rectified layer, linear output. Parameters live in a shared
// store under a caller-chosen prefix so both bridge nets train together
// with the model.
namespace projection {
constexpr std::size_t kDefaultHidden = 512;

void init(ParameterStore& store, const std::string& prefix, std::size_t in_dim,
          std::size_t out_dim, std::size_t hidden, Rng& rng);
Var apply(Tape& tape, const LeafMap& leaves, const std::string& prefix, Var x);
}  // namespace projection

// Mean over anchors of -log softmax at the positive. Rows of anchors and
// candidates must be L2-normalized; the softmax denominator includes the
// positive term.
Var info_nce(Tape& tape, Var anchors, Var candidates, std::span<const std::size_t> positives,
             double tau);

// Global and local contrast between behavioral embeddings and projected
// semantic rows. c_batch rows belong to entity_ids (dense, one kind);
// proj_prefix names a semantic-to-behavioral net in the store. Combined
// downstream as L_cdm + alpha*global + beta*local.
struct ContrastPair {
  Var global;
  Var local;
};
ContrastPair behavioral_alignment_loss(Tape& tape, const LeafMap& leaves, Var c_batch,
                                       std::span<const std::size_t> entity_ids,
                                       const EmbeddingTable& table, const NeighborIndex& index,
                                       const std::string& proj_prefix,
                                       const AlignmentConfig& cfg, Rng& rng);

// Frequency-scaled mask fraction: rare entities keep most coordinates,
// frequent ones are masked harder. A 1-dimensional behavioral space is
// never masked.
double mask_ratio(std::size_t freq, std::size_t freq_max, const AlignmentConfig& cfg,
                  std::size_t behavioral_dim);

// Zeroes floor(d*ratio) coordinates chosen without replacement; at least
// one coordinate survives.
std::vector<double> mask_embedding(std::span<const double> c, double ratio, Rng& rng);

// Reconstruction contrast: masked behavioral rows are projected into
// semantic space and contrasted against the full table. freqs holds the
// training-interaction count per batch row; freq_max the kind-wide
// maximum. Combined downstream as L_cdm + lambda*recon.
Var semantic_alignment_loss(Tape& tape, const LeafMap& leaves, Var c_batch,
                            std::span<const std::size_t> entity_ids,
                            std::span<const std::size_t> freqs, std::size_t freq_max,
                            const EmbeddingTable& table, const std::string& proj_prefix,
                            const AlignmentConfig& cfg, Rng& rng);

}  // namespace cogdiag
