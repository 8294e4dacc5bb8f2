#include "cogdiag/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "cogdiag/errors.hpp"
#include "cogdiag/io.hpp"

namespace cogdiag {

namespace {

Tensor subset_rows(const Tensor& matrix, std::span<const std::size_t> rows) {
  Tensor out = Tensor::zeros(rows.size(), matrix.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = matrix.row(rows[i]);
    for (std::size_t j = 0; j < matrix.cols(); ++j) out.at(i, j) = src[j];
  }
  return out;
}

// Candidate rows for one contrast step: the whole table when it fits the
// cap, otherwise every required row plus a uniform sample of the rest.
// Returned ascending so positions are reproducible.
std::vector<std::size_t> capped_candidates(std::size_t n, std::span<const std::size_t> required,
                                           std::size_t cap, Rng& rng) {
  std::vector<std::size_t> kept;
  if (n <= cap) {
    kept.resize(n);
    std::iota(kept.begin(), kept.end(), 0);
    return kept;
  }
  std::vector<std::uint8_t> is_required(n, 0);
  for (std::size_t id : required) {
    if (id >= n) throw ContractError("entity id " + std::to_string(id) + " outside table of " +
                                     std::to_string(n) + " rows");
    is_required[id] = 1;
  }
  std::vector<std::size_t> pool;
  pool.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!is_required[i]) pool.push_back(i);
  std::size_t n_required = n - pool.size();
  std::size_t fill = cap > n_required ? cap - n_required : 0;
  fill = std::min(fill, pool.size());
  for (std::size_t i = 0; i < fill; ++i) {
    std::size_t j = i + rng.bounded(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  kept.reserve(n_required + fill);
  for (std::size_t i = 0; i < n; ++i)
    if (is_required[i]) kept.push_back(i);
  kept.insert(kept.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(fill));
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<std::size_t> positions_of(std::span<const std::size_t> ids,
                                      const std::vector<std::size_t>& kept) {
  std::unordered_map<std::size_t, std::size_t> where;
  where.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) where.emplace(kept[i], i);
  std::vector<std::size_t> pos(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = where.find(ids[i]);
    if (it == where.end())
      throw ContractError("anchor id " + std::to_string(ids[i]) + " has no candidate row");
    pos[i] = it->second;
  }
  return pos;
}

}  // namespace

std::string to_string(EntityKind kind) {
  return kind == EntityKind::kStudent ? "student" : "exercise";
}

EntityKind entity_kind_from_string(const std::string& s) {
  if (s == "student") return EntityKind::kStudent;
  if (s == "exercise") return EntityKind::kExercise;
  throw ConfigError("unknown entity kind: " + s + " (expected student|exercise)");
}

void AlignmentConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  if (r_min < 0.0 || r_min > r_max || r_max >= 1.0)
    throw ConfigError("mask ratio bounds must satisfy 0 <= r_min <= r_max < 1");
  if (k < 1) throw ConfigError("neighbor count must be at least 1");
  if (alpha < 0.0 || beta < 0.0 || lambda < 0.0)
    throw ConfigError("alignment weights must be non-negative");
  if (global_cap < 1) throw ConfigError("global negative cap must be at least 1");
}

EmbeddingTable EmbeddingTable::from_rows(EntityKind kind, Tensor matrix, std::string source) {
  if (matrix.rank() != 2 || matrix.rows() == 0 || matrix.cols() == 0)
    throw ValidationError("embedding table must be a non-empty matrix");
  if (!matrix.all_finite()) throw ValidationError("embedding table holds non-finite values");
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    auto row = matrix.row(i);
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    if (norm <= 0.0)
      throw ValidationError("embedding row " + std::to_string(i) + " has zero norm");
    for (double& v : row) v /= norm;
  }
  EmbeddingTable t;
  t.kind_ = kind;
  t.matrix_ = std::move(matrix);
  t.source_ = std::move(source);
  return t;
}

EmbeddingTable EmbeddingTable::load_jsonl(const std::filesystem::path& path, EntityKind kind,
                                          const EntityIndex& index) {
  const auto lines = read_lines(path);
  const std::string kind_name = to_string(kind);
  Tensor matrix;
  std::vector<std::uint8_t> filled(index.size(), 0);
  std::size_t dim = 0, seen = 0;
  std::string source = "unknown";
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(lines[i]);
      if (obj.at("kind").get<std::string>() != kind_name) continue;
      const std::string id = obj.at("id").get<std::string>();
      if (!index.contains(id))
        throw ValidationError("line " + std::to_string(i + 1) + ": unknown " + kind_name +
                              " id " + id);
      auto vec = obj.at("vector").get<std::vector<double>>();
      if (vec.empty())
        throw ValidationError("line " + std::to_string(i + 1) + ": empty vector");
      if (dim == 0) {
        dim = vec.size();
        matrix = Tensor::zeros(index.size(), dim);
      } else if (vec.size() != dim) {
        throw ValidationError("line " + std::to_string(i + 1) + ": vector dim " +
                              std::to_string(vec.size()) + " != " + std::to_string(dim));
      }
      const std::size_t dense = index.at(id);
      if (filled[dense])
        throw ValidationError("line " + std::to_string(i + 1) + ": duplicate embedding for " + id);
      filled[dense] = 1;
      ++seen;
      for (std::size_t j = 0; j < dim; ++j) matrix.at(dense, j) = vec[j];
      if (obj.contains("source")) source = obj["source"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad embedding record: ") + e.what(), i + 1);
    }
  }
  if (seen != index.size())
    throw ValidationError("embedding file covers " + std::to_string(seen) + " of " +
                          std::to_string(index.size()) + " " + kind_name + " entities");
  return from_rows(kind, std::move(matrix), std::move(source));
}

std::string format_embedding_jsonl(EntityKind kind, const EntityIndex& index,
                                   const Tensor& matrix) {
  if (matrix.rows() != index.size())
    throw ShapeError("embedding rows " + matrix.shape_str() + " do not cover " +
                     std::to_string(index.size()) + " entities");
  std::ostringstream out;
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    nlohmann::json obj;
    obj["kind"] = to_string(kind);
    obj["id"] = index.name(i);
    auto row = matrix.row(i);
    obj["vector"] = std::vector<double>(row.begin(), row.end());
    out << obj.dump() << '\n';
  }
  return out.str();
}

NeighborIndex topk_neighbors(const EmbeddingTable& table, std::size_t k) {
  const std::size_t n = table.count();
  if (n < 2) throw ContractError("neighbor selection needs at least 2 entities");
  if (k < 1) throw ContractError("neighbor selection needs k >= 1");
  const std::size_t keep = std::min(k, n - 1);
  const Tensor& m = table.matrix();
  NeighborIndex index;
  index.k = keep;
  index.neighbors.resize(n);
  std::vector<std::pair<double, std::size_t>> sims;
  for (std::size_t i = 0; i < n; ++i) {
    sims.clear();
    sims.reserve(n - 1);
    auto a = m.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      auto b = m.row(j);
      double dot = 0.0;
      for (std::size_t t = 0; t < m.cols(); ++t) dot += a[t] * b[t];
      sims.emplace_back(dot, j);
    }
    auto better = [](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first > y.first;
      return x.second < y.second;  // ties: ascending index
    };
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(keep), sims.end(),
                      better);
    auto& out = index.neighbors[i];
    out.reserve(keep);
    for (std::size_t t = 0; t < keep; ++t) out.push_back(sims[t].second);
  }
  return index;
}

namespace projection {

void init(ParameterStore& store, const std::string& prefix, std::size_t in_dim,
          std::size_t out_dim, std::size_t hidden, Rng& rng) {
  if (in_dim == 0 || out_dim == 0 || hidden == 0)
    throw ConfigError("projection dimensions must be positive");
  auto xavier = [&rng](std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros(fan_in, fan_out);
    for (auto& x : t.data()) x = rng.uniform(-bound, bound);
    return t;
  };
  store.add(prefix + ".w1", xavier(in_dim, hidden));
  // small positive biases keep dead-rectifier rows normalizable: even a
  // fully-masked input projects to a nonzero vector
  auto faint = [](std::size_t n) {
    Tensor t = Tensor::zeros(n);
    for (auto& x : t.data()) x = 0.01;
    return t;
  };
  store.add(prefix + ".b1", faint(hidden));
  store.add(prefix + ".w2", xavier(hidden, out_dim));
  store.add(prefix + ".b2", faint(out_dim));
}

Var apply(Tape& tape, const LeafMap& leaves, const std::string& prefix, Var x) {
  Var h = tape.relu(tape.add_bias(tape.matmul(x, leaves.at(prefix + ".w1")),
                                  leaves.at(prefix + ".b1")));
  return tape.add_bias(tape.matmul(h, leaves.at(prefix + ".w2")), leaves.at(prefix + ".b2"));
}

}  // namespace projection

Var info_nce(Tape& tape, Var anchors, Var candidates, std::span<const std::size_t> positives,
             double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  const Tensor& a = tape.value(anchors);
  const Tensor& c = tape.value(candidates);
  if (a.rows() != positives.size())
    throw ShapeError("need one positive per anchor: " + std::to_string(a.rows()) + " anchors vs " +
                     std::to_string(positives.size()) + " positives");
  for (std::size_t p : positives)
    if (p >= c.rows())
      throw ContractError("anchor positive " + std::to_string(p) + " has no candidate row");
  Var sims = tape.scale(tape.matmul_nt(anchors, candidates), 1.0 / tau);
  Var denom = tape.log(tape.row_sum(tape.exp(sims)));
  Var pos = tape.row_sum(tape.take_cols(sims, positives, 1));
  return tape.mean(tape.sub(denom, pos));
}

ContrastPair behavioral_alignment_loss(Tape& tape, const LeafMap& leaves, Var c_batch,
                                       std::span<const std::size_t> entity_ids,
                                       const EmbeddingTable& table, const NeighborIndex& index,
                                       const std::string& proj_prefix,
                                       const AlignmentConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t n = table.count();
  if (index.neighbors.size() != n)
    throw ContractError("neighbor index covers " + std::to_string(index.neighbors.size()) +
                        " entities, table has " + std::to_string(n));
  if (tape.value(c_batch).rows() != entity_ids.size())
    throw ShapeError("one behavioral row per entity id required");
  for (std::size_t id : entity_ids)
    if (id >= n)
      throw ContractError("entity id " + std::to_string(id) +
                          " outside the semantic table; kinds likely mismatch");

  // required rows: each anchor's positive and its semantic neighborhood
  std::vector<std::size_t> required(entity_ids.begin(), entity_ids.end());
  for (std::size_t id : entity_ids)
    for (std::size_t nb : index.neighbors[id]) required.push_back(nb);
  std::vector<std::size_t> kept = capped_candidates(n, required, cfg.global_cap, rng);
  std::vector<std::size_t> pos = positions_of(entity_ids, kept);

  Var l_rows = tape.leaf(subset_rows(table.matrix(), kept));
  Var projected = projection::apply(tape, leaves, proj_prefix, l_rows);
  Var cand = tape.l2norm_rows(projected);
  Var anchors = tape.l2norm_rows(c_batch);

  Var sims = tape.scale(tape.matmul_nt(anchors, cand), 1.0 / cfg.tau);
  Var posv = tape.row_sum(tape.take_cols(sims, pos, 1));
  Var global_denom = tape.log(tape.row_sum(tape.exp(sims)));
  Var global = tape.mean(tape.sub(global_denom, posv));

  // local candidates: the positive itself plus its neighbors, as columns
  // of the same similarity matrix
  std::unordered_map<std::size_t, std::size_t> where;
  where.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) where.emplace(kept[i], i);
  const std::size_t width = 1 + index.k;
  std::vector<std::size_t> local_cols;
  local_cols.reserve(entity_ids.size() * width);
  for (std::size_t i = 0; i < entity_ids.size(); ++i) {
    local_cols.push_back(pos[i]);
    for (std::size_t nb : index.neighbors[entity_ids[i]]) local_cols.push_back(where.at(nb));
  }
  Var local_sims = tape.take_cols(sims, local_cols, width);
  Var local_denom = tape.log(tape.row_sum(tape.exp(local_sims)));
  Var local = tape.mean(tape.sub(local_denom, posv));
  return {global, local};
}

double mask_ratio(std::size_t freq, std::size_t freq_max, const AlignmentConfig& cfg,
                  std::size_t behavioral_dim) {
  if (behavioral_dim <= 1) return 0.0;
  if (freq > freq_max)
    throw ContractError("frequency " + std::to_string(freq) + " exceeds the maximum " +
                        std::to_string(freq_max));
  if (freq_max == 0) return cfg.r_min;
  const double scale = std::log1p(static_cast<double>(freq)) /
                       std::log1p(static_cast<double>(freq_max));
  return cfg.r_min + (cfg.r_max - cfg.r_min) * scale;
}

std::vector<double> mask_embedding(std::span<const double> c, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio >= 1.0)
    throw ContractError("mask ratio must lie in [0, 1), got " + std::to_string(ratio));
  const std::size_t d = c.size();
  if (d == 0) throw ContractError("cannot mask an empty vector");
  std::vector<double> out(c.begin(), c.end());
  std::size_t zeros = static_cast<std::size_t>(std::floor(static_cast<double>(d) * ratio));
  if (zeros >= d) zeros = d - 1;  // at least one coordinate survives
  if (zeros == 0) return out;
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < zeros; ++i) {
    std::size_t j = i + rng.bounded(d - i);
    std::swap(idx[i], idx[j]);
    out[idx[i]] = 0.0;
  }
  return out;
}

Var semantic_alignment_loss(Tape& tape, const LeafMap& leaves, Var c_batch,
                            std::span<const std::size_t> entity_ids,
                            std::span<const std::size_t> freqs, std::size_t freq_max,
                            const EmbeddingTable& table, const std::string& proj_prefix,
                            const AlignmentConfig& cfg, Rng& rng) {
  cfg.validate();
  const Tensor& c = tape.value(c_batch);
  if (c.rows() != entity_ids.size() || freqs.size() != entity_ids.size())
    throw ShapeError("need one behavioral row and one frequency per entity id");
  const std::size_t n = table.count();
  for (std::size_t id : entity_ids)
    if (id >= n)
      throw ContractError("entity id " + std::to_string(id) +
                          " outside the semantic table; kinds likely mismatch");

  const std::size_t d = c.cols();
  // match the batch tensor's rank: 1-d behavioral rows arrive as plain
  // vectors and elementwise ops require equal shapes
  Tensor mask = c.rank() == 1 ? Tensor::zeros(entity_ids.size())
                              : Tensor::zeros(entity_ids.size(), d);
  std::vector<double> ones(d, 1.0);
  for (std::size_t i = 0; i < entity_ids.size(); ++i) {
    const double ratio = mask_ratio(freqs[i], freq_max, cfg, d);
    auto row = mask_embedding(ones, ratio, rng);
    for (std::size_t j = 0; j < d; ++j) mask.at(i, j) = row[j];
  }
  Var masked = tape.mul(c_batch, tape.leaf(std::move(mask)));
  Var projected = projection::apply(tape, leaves, proj_prefix, masked);
  Var anchors = tape.l2norm_rows(projected);

  std::vector<std::size_t> kept =
      capped_candidates(n, entity_ids, cfg.global_cap, rng);
  std::vector<std::size_t> pos = positions_of(entity_ids, kept);
  Var cand = tape.leaf(subset_rows(table.matrix(), kept));
  return info_nce(tape, anchors, cand, pos, cfg.tau);
}

}  // namespace cogdiag
