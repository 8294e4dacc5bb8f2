#include "cogdiag/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "cogdiag/errors.hpp"

namespace cogdiag {

namespace {

std::string shapes(const Tensor& a, const Tensor& b) {
  return a.shape_str() + " vs " + b.shape_str();
}

}  // namespace

Var Tape::push(Node n) {
  if (backward_done_) throw ContractError("tape already ran backward; build a fresh tape");
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("Var does not belong to this tape");
  return nodes_[v.id];
}

Tape::Node& Tape::mutable_node(Var v) {
  if (v.id >= nodes_.size()) throw ContractError("Var does not belong to this tape");
  return nodes_[v.id];
}

void Tape::check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shapes(a, b));
}

void Tape::check_finite(const Tensor& t, const char* op) const {
  if (!t.all_finite())
    throw NumericError(std::string(op) + " produced a non-finite value");
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

Var Tape::leaf(Tensor value, bool requires_grad) {
  check_finite(value, "leaf");
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(n);
}

Var Tape::gather_rows(Var table, std::span<const std::size_t> rows) {
  const Node& t = node(table);
  const std::size_t d = t.value.cols();
  Tensor out = t.value.rank() == 1 ? Tensor::zeros(rows.size())
                                   : Tensor::zeros(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.value.rows())
      throw ContractError("gather_rows: row " + std::to_string(rows[i]) + " out of range " +
                          t.value.shape_str());
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = t.value[rows[i] * d + j];
  }
  Node n;
  n.op = Op::kGatherRows;
  n.a = table.id;
  n.value = std::move(out);
  n.requires_grad = t.requires_grad;
  n.idx.assign(rows.begin(), rows.end());
  return push(n);
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  if (A.cols() != B.rows())
    throw ShapeError("matmul: inner dimensions disagree " + shapes(A, B));
  const std::size_t m = A.rows(), k = A.cols(), p = B.cols();
  Tensor out = Tensor::zeros(m, p);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const double av = A[i * k + t];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < p; ++j) out[i * p + j] += av * B[t * p + j];
    }
  check_finite(out, "matmul");
  Node n;
  n.op = Op::kMatmul;
  n.a = a.id;
  n.b = b.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(n);
}

Var Tape::matmul_nt(Var a, Var b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  if (A.cols() != B.cols())
    throw ShapeError("matmul_nt: widths disagree " + shapes(A, B));
  const std::size_t m = A.rows(), d = A.cols(), p = B.rows();
  Tensor out = Tensor::zeros(m, p);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < d; ++t) acc += A[i * d + t] * B[j * d + t];
      out[i * p + j] = acc;
    }
  check_finite(out, "matmul_nt");
  Node n;
  n.op = Op::kMatmulNt;
  n.a = a.id;
  n.b = b.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(n);
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  check_same_shape(A, B, "add");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  check_finite(out, "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(n);
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  check_same_shape(A, B, "sub");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  check_finite(out, "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(n);
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  check_same_shape(A, B, "mul");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  check_finite(out, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a.id;
  n.b = b.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(n);
}

Var Tape::add_bias(Var m, Var bias) {
  const Tensor& M = node(m).value;
  const Tensor& B = node(bias).value;
  if (B.rank() != 1 || B.size() != M.cols())
    throw ShapeError("add_bias: bias must be 1-D of width cols, got " + shapes(M, B));
  const std::size_t r = M.rows(), c = M.cols();
  Tensor out = M;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += B[j];
  check_finite(out, "add_bias");
  Node n;
  n.op = Op::kAddBias;
  n.a = m.id;
  n.b = bias.id;
  n.value = std::move(out);
  n.requires_grad = node(m).requires_grad || node(bias).requires_grad;
  return push(n);
}

Var Tape::mul_col(Var m, Var col) {
  const Tensor& M = node(m).value;
  const Tensor& C = node(col).value;
  if (C.rank() != 1 || C.size() != M.rows())
    throw ShapeError("mul_col: column must be 1-D of length rows, got " + shapes(M, C));
  const std::size_t r = M.rows(), c = M.cols();
  Tensor out = M;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= C[i];
  check_finite(out, "mul_col");
  Node n;
  n.op = Op::kMulCol;
  n.a = m.id;
  n.b = col.id;
  n.value = std::move(out);
  n.requires_grad = node(m).requires_grad || node(col).requires_grad;
  return push(n);
}

Var Tape::scale(Var a, double c) {
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  check_finite(out, "scale");
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad;
  n.c0 = c;
  return push(n);
}

Var Tape::sigmoid(Var a) {
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  check_finite(out, "sigmoid");
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad;
  return push(n);
}

Var Tape::log(Var a) {
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] <= 0.0) throw NumericError("log of non-positive value");
    out[i] = std::log(out[i]);
  }
  check_finite(out, "log");
  Node n;
  n.op = Op::kLog;
  n.a = a.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad;
  return push(n);
}

Var Tape::exp(Var a) {
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  check_finite(out, "exp");
  Node n;
  n.op = Op::kExp;
  n.a = a.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad;
  return push(n);
}

Var Tape::relu(Var a) {
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  check_finite(out, "relu");
  Node n;
  n.op = Op::kRelu;
  n.a = a.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad;
  return push(n);
}

Var Tape::clamp(Var a, double lo, double hi) {
  if (!(lo < hi)) throw ContractError("clamp: lo must be below hi");
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = out[i] < lo ? lo : (out[i] > hi ? hi : out[i]);
  check_finite(out, "clamp");
  Node n;
  n.op = Op::kClamp;
  n.a = a.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad;
  n.c0 = lo;
  n.c1 = hi;
  return push(n);
}

Var Tape::sum(Var a) {
  const Tensor& A = node(a).value;
  double acc = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) acc += A[i];
  Tensor out = Tensor::scalar(acc);
  check_finite(out, "sum");
  Node n;
  n.op = Op::kSum;
  n.a = a.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad;
  return push(n);
}

Var Tape::mean(Var a) {
  const Tensor& A = node(a).value;
  if (A.empty()) throw ContractError("mean of empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) acc += A[i];
  Tensor out = Tensor::scalar(acc / static_cast<double>(A.size()));
  check_finite(out, "mean");
  Node n;
  n.op = Op::kMean;
  n.a = a.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad;
  return push(n);
}

Var Tape::row_sum(Var a) {
  const Tensor& A = node(a).value;
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out = Tensor::zeros(r);
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += A[i * c + j];
    out[i] = acc;
  }
  check_finite(out, "row_sum");
  Node n;
  n.op = Op::kRowSum;
  n.a = a.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad;
  return push(n);
}

Var Tape::take_cols(Var m, std::span<const std::size_t> idx, std::size_t k) {
  const Tensor& M = node(m).value;
  const std::size_t r = M.rows(), c = M.cols();
  if (k == 0 || idx.size() != r * k)
    throw ShapeError("take_cols: need rows*k indices, got " + std::to_string(idx.size()) +
                     " for " + M.shape_str() + " k=" + std::to_string(k));
  Tensor out = Tensor::zeros(r, k);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t col = idx[i * k + j];
      if (col >= c)
        throw ContractError("take_cols: column " + std::to_string(col) + " out of range " +
                            M.shape_str());
      out[i * k + j] = M[i * c + col];
    }
  check_finite(out, "take_cols");
  Node n;
  n.op = Op::kTakeCols;
  n.a = m.id;
  n.value = std::move(out);
  n.requires_grad = node(m).requires_grad;
  n.idx.assign(idx.begin(), idx.end());
  n.idx_cols = k;
  return push(n);
}

Var Tape::l2norm_rows(Var a) {
  const Tensor& A = node(a).value;
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out = A;
  std::vector<double> norms(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += A[i * c + j] * A[i * c + j];
    const double nrm = std::sqrt(acc);
    if (nrm <= 0.0) throw NumericError("l2norm_rows: zero-norm row " + std::to_string(i));
    norms[i] = nrm;
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= nrm;
  }
  check_finite(out, "l2norm_rows");
  Node n;
  n.op = Op::kL2NormRows;
  n.a = a.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad;
  n.aux = std::move(norms);
  return push(n);
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  if (A.rows() != B.rows())
    throw ShapeError("concat_cols: row counts disagree " + shapes(A, B));
  const std::size_t r = A.rows(), p = A.cols(), q = B.cols();
  Tensor out = Tensor::zeros(r, p + q);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < p; ++j) out[i * (p + q) + j] = A[i * p + j];
    for (std::size_t j = 0; j < q; ++j) out[i * (p + q) + p + j] = B[i * q + j];
  }
  check_finite(out, "concat_cols");
  Node n;
  n.op = Op::kConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.value = std::move(out);
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(n);
}

void Tape::backward(Var output) {
  if (backward_done_) throw ContractError("backward already ran on this tape");
  Node& out = mutable_node(output);
  if (out.value.size() != 1)
    throw ContractError("backward requires a scalar output, got " + out.value.shape_str());
  for (Node& n : nodes_) {
    if (n.requires_grad) {
      n.grad = n.value.rank() == 1 ? Tensor::zeros(n.value.rows())
                                   : Tensor::zeros(n.value.rows(), n.value.cols());
    }
  }
  if (!out.requires_grad) {
    backward_done_ = true;
    return;
  }
  out.grad[0] = 1.0;

  for (std::size_t ni = nodes_.size(); ni-- > 0;) {
    Node& n = nodes_[ni];
    if (!n.requires_grad || n.op == Op::kLeaf) continue;
    const Tensor& g = n.grad;
    Node* pa = n.a != static_cast<std::size_t>(-1) ? &nodes_[n.a] : nullptr;
    Node* pb = n.b != static_cast<std::size_t>(-1) ? &nodes_[n.b] : nullptr;
    const bool wa = pa && pa->requires_grad;
    const bool wb = pb && pb->requires_grad;

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kGatherRows: {
        if (!wa) break;
        const std::size_t d = n.value.cols();
        for (std::size_t i = 0; i < n.idx.size(); ++i)
          for (std::size_t j = 0; j < d; ++j) pa->grad[n.idx[i] * d + j] += g[i * d + j];
        break;
      }
      case Op::kMatmul: {
        const Tensor& A = pa->value;
        const Tensor& B = pb->value;
        const std::size_t m = A.rows(), k = A.cols(), p = B.cols();
        if (wa)
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < p; ++j) {
              const double gv = g[i * p + j];
              if (gv == 0.0) continue;
              for (std::size_t t = 0; t < k; ++t) pa->grad[i * k + t] += gv * B[t * p + j];
            }
        if (wb)
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t t = 0; t < k; ++t) {
              const double av = A[i * k + t];
              if (av == 0.0) continue;
              for (std::size_t j = 0; j < p; ++j) pb->grad[t * p + j] += av * g[i * p + j];
            }
        break;
      }
      case Op::kMatmulNt: {
        const Tensor& A = pa->value;
        const Tensor& B = pb->value;
        const std::size_t m = A.rows(), d = A.cols(), p = B.rows();
        if (wa)
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < p; ++j) {
              const double gv = g[i * p + j];
              if (gv == 0.0) continue;
              for (std::size_t t = 0; t < d; ++t) pa->grad[i * d + t] += gv * B[j * d + t];
            }
        if (wb)
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < p; ++j) {
              const double gv = g[i * p + j];
              if (gv == 0.0) continue;
              for (std::size_t t = 0; t < d; ++t) pb->grad[j * d + t] += gv * A[i * d + t];
            }
        break;
      }
      case Op::kAdd: {
        if (wa)
          for (std::size_t i = 0; i < g.size(); ++i) pa->grad[i] += g[i];
        if (wb)
          for (std::size_t i = 0; i < g.size(); ++i) pb->grad[i] += g[i];
        break;
      }
      case Op::kSub: {
        if (wa)
          for (std::size_t i = 0; i < g.size(); ++i) pa->grad[i] += g[i];
        if (wb)
          for (std::size_t i = 0; i < g.size(); ++i) pb->grad[i] -= g[i];
        break;
      }
      case Op::kMul: {
        if (wa)
          for (std::size_t i = 0; i < g.size(); ++i) pa->grad[i] += g[i] * pb->value[i];
        if (wb)
          for (std::size_t i = 0; i < g.size(); ++i) pb->grad[i] += g[i] * pa->value[i];
        break;
      }
      case Op::kAddBias: {
        const std::size_t r = n.value.rows(), c = n.value.cols();
        if (wa)
          for (std::size_t i = 0; i < g.size(); ++i) pa->grad[i] += g[i];
        if (wb)
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) pb->grad[j] += g[i * c + j];
        break;
      }
      case Op::kMulCol: {
        const std::size_t r = n.value.rows(), c = n.value.cols();
        if (wa)
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) pa->grad[i * c + j] += g[i * c + j] * pb->value[i];
        if (wb)
          for (std::size_t i = 0; i < r; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * pa->value[i * c + j];
            pb->grad[i] += acc;
          }
        break;
      }
      case Op::kScale: {
        if (wa)
          for (std::size_t i = 0; i < g.size(); ++i) pa->grad[i] += g[i] * n.c0;
        break;
      }
      case Op::kSigmoid: {
        if (wa)
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = n.value[i];
            pa->grad[i] += g[i] * y * (1.0 - y);
          }
        break;
      }
      case Op::kLog: {
        if (wa)
          for (std::size_t i = 0; i < g.size(); ++i) pa->grad[i] += g[i] / pa->value[i];
        break;
      }
      case Op::kExp: {
        if (wa)
          for (std::size_t i = 0; i < g.size(); ++i) pa->grad[i] += g[i] * n.value[i];
        break;
      }
      case Op::kRelu: {
        if (wa)
          for (std::size_t i = 0; i < g.size(); ++i)
            if (pa->value[i] > 0.0) pa->grad[i] += g[i];
        break;
      }
      case Op::kClamp: {
        if (wa)
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = pa->value[i];
            if (x > n.c0 && x < n.c1) pa->grad[i] += g[i];
          }
        break;
      }
      case Op::kSum: {
        if (wa)
          for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g[0];
        break;
      }
      case Op::kMean: {
        if (wa) {
          const double s = g[0] / static_cast<double>(pa->value.size());
          for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += s;
        }
        break;
      }
      case Op::kRowSum: {
        if (wa) {
          const std::size_t r = pa->value.rows(), c = pa->value.cols();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) pa->grad[i * c + j] += g[i];
        }
        break;
      }
      case Op::kTakeCols: {
        if (wa) {
          const std::size_t r = n.value.rows(), k = n.idx_cols, c = pa->value.cols();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < k; ++j)
              pa->grad[i * c + n.idx[i * k + j]] += g[i * k + j];
        }
        break;
      }
      case Op::kL2NormRows: {
        if (wa) {
          const std::size_t r = n.value.rows(), c = n.value.cols();
          for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * n.value[i * c + j];
            for (std::size_t j = 0; j < c; ++j)
              pa->grad[i * c + j] += (g[i * c + j] - dot * n.value[i * c + j]) / n.aux[i];
          }
        }
        break;
      }
      case Op::kConcatCols: {
        const std::size_t r = n.value.rows();
        const std::size_t p = pa->value.cols(), q = pb->value.cols();
        if (wa)
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < p; ++j) pa->grad[i * p + j] += g[i * (p + q) + j];
        if (wb)
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < q; ++j) pb->grad[i * q + j] += g[i * (p + q) + p + j];
        break;
      }
    }
    if (wa && !pa->grad.all_finite()) throw NumericError("backward produced a non-finite gradient");
    if (wb && !pb->grad.all_finite()) throw NumericError("backward produced a non-finite gradient");
  }
  backward_done_ = true;
}

const Tensor& Tape::grad(Var leaf) const {
  if (!backward_done_) throw ContractError("grad queried before backward");
  const Node& n = node(leaf);
  if (!n.requires_grad) throw ContractError("grad queried on a node without requires_grad");
  return n.grad;
}

}  // namespace cogdiag
