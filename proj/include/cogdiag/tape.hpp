#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cogdiag/tensor.hpp"

namespace cogdiag {

// Handle to a node on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

// Reverse-mode differentiation over dense tensors. Operations evaluate
// eagerly and record themselves; backward() walks the record once in
// reverse, so gradient accumulation order is fixed and runs are
// bit-identical. A tape is built per use and discarded.
//
// Every operation checks its result for NaN/Inf and throws NumericError
// if any appears; shape mismatches throw ShapeError naming both shapes.
class Tape {
 public:
  // Leaves. Parameters pass requires_grad=true; data constants false.
  Var leaf(Tensor value, bool requires_grad = false);

  // table[n x d], rows -> [m x d]; backward scatter-adds by row.
  Var gather_rows(Var table, std::span<const std::size_t> rows);

  Var matmul(Var a, Var b);     // [m x k] * [k x n]
  Var matmul_nt(Var a, Var b);  // [m x d] * [n x d]^T -> [m x n]

  Var add(Var a, Var b);  // elementwise, equal shapes
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);

  Var add_bias(Var m, Var bias);  // bias[n] broadcast over rows of [m x n]
  Var mul_col(Var m, Var col);    // col[m] scales row i of [m x n]

  Var scale(Var a, double c);
  Var sigmoid(Var a);
  Var log(Var a);  // NumericError on any non-positive input
  Var exp(Var a);
  Var relu(Var a);  // elementwise max(x, 0)
  Var clamp(Var a, double lo, double hi);

  Var sum(Var a);   // scalar
  Var mean(Var a);  // scalar
  Var row_sum(Var a);  // [m x n] -> [m x 1]

  // out[i][j] = m[i][idx[i*k + j]]; idx is row-major [rows(m) x k].
  Var take_cols(Var m, std::span<const std::size_t> idx, std::size_t k);

  Var l2norm_rows(Var a);  // each row scaled to unit L2 norm

  Var concat_cols(Var a, Var b);  // [m x p] ++ [m x q] -> [m x (p+q)]

  const Tensor& value(Var v) const;

  // Seeds d(output)/d(output) = 1 and propagates. ContractError unless
  // output is scalar. May be called once per tape.
  void backward(Var output);

  // Gradient of the backward output w.r.t. a leaf. Zero tensor when the
  // leaf did not participate; ContractError before backward() ran.
  const Tensor& grad(Var leaf) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    kLeaf,
    kGatherRows,
    kMatmul,
    kMatmulNt,
    kAdd,
    kSub,
    kMul,
    kAddBias,
    kMulCol,
    kScale,
    kSigmoid,
    kLog,
    kExp,
    kRelu,
    kClamp,
    kSum,
    kMean,
    kRowSum,
    kTakeCols,
    kL2NormRows,
    kConcatCols,
  };

  struct Node {
    Op op;
    std::size_t a = static_cast<std::size_t>(-1);
    std::size_t b = static_cast<std::size_t>(-1);
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    double c0 = 0.0, c1 = 0.0;     // scale factor / clamp bounds
    std::vector<std::size_t> idx;  // gather rows / take_cols indices
    std::size_t idx_cols = 0;
    std::vector<double> aux;  // per-row norms for l2norm_rows
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;

  Var push(Node n);
  const Node& node(Var v) const;
  Node& mutable_node(Var v);
  static void check_same_shape(const Tensor& a, const Tensor& b, const char* op);
  void check_finite(const Tensor& t, const char* op) const;
};

}  // namespace cogdiag
