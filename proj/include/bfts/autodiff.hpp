// Copyright 2026 The BFtS Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "bfts/error.hpp"
#include "bfts/rng.hpp"

namespace bfts {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows_init) {
    Matrix m;
    m.rows = rows_init.size();
    m.cols = m.rows ? rows_init.begin()->size() : 0;
    for (const auto& row : rows_init) {
      if (row.size() != m.cols) throw ShapeError("ragged initializer");
      m.data.insert(m.data.end(), row.begin(), row.end());
    }
    return m;
  }
  static Matrix column(std::span<const double> values) {
    Matrix m(values.size(), 1);
    std::copy(values.begin(), values.end(), m.data.begin());
    return m;
  }

  std::size_t size() const { return data.size(); }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }
  bool operator==(const Matrix& o) const = default;
};

namespace detail {

inline std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows) + "x" + std::to_string(m.cols) + ")";
}

using ConstMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline ConstMap view(const Matrix& m) {
  return ConstMap(m.data.data(), static_cast<Eigen::Index>(m.rows),
                  static_cast<Eigen::Index>(m.cols));
}
inline MutMap view(Matrix& m) {
  return MutMap(m.data.data(), static_cast<Eigen::Index>(m.rows),
                static_cast<Eigen::Index>(m.cols));
}

// out += a * b
inline void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out) {
  view(out).noalias() += view(a) * view(b);
}

// out += a * b^T
inline void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  view(out).noalias() += view(a) * view(b).transpose();
}

// out += a^T * b
inline void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  view(out).noalias() += view(a).transpose() * view(b);
}

}  // namespace detail

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul " + detail::shape_str(a) + " * " +
                     detail::shape_str(b));
  }
  Matrix out(a.rows, b.cols);
  detail::gemm_nn(a, b, out);
  return out;
}

// Compressed sparse row matrix, used for fixed graph operators.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  static SparseMatrix from_dense(const Matrix& m) {
    SparseMatrix s;
    s.rows = m.rows;
    s.cols = m.cols;
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t c = 0; c < m.cols; ++c) {
        if (m(r, c) != 0.0) {
          s.col_idx.push_back(c);
          s.values.push_back(m(r, c));
        }
      }
      s.row_ptr.push_back(s.col_idx.size());
    }
    return s;
  }

  std::size_t nnz() const { return values.size(); }
};

// out += s * x
inline void spmm(const SparseMatrix& s, const Matrix& x, Matrix& out) {
  const std::size_t m = x.cols;
  for (std::size_t r = 0; r < s.rows; ++r) {
    double* orow = &out.data[r * m];
    for (std::size_t k = s.row_ptr[r]; k < s.row_ptr[r + 1]; ++k) {
      const double w = s.values[k];
      const double* xrow = &x.data[s.col_idx[k] * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += w * xrow[j];
    }
  }
}

// out += s^T * x
inline void spmm_t(const SparseMatrix& s, const Matrix& x, Matrix& out) {
  const std::size_t m = x.cols;
  for (std::size_t r = 0; r < s.rows; ++r) {
    const double* xrow = &x.data[r * m];
    for (std::size_t k = s.row_ptr[r]; k < s.row_ptr[r + 1]; ++k) {
      const double w = s.values[k];
      double* orow = &out.data[s.col_idx[k] * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += w * xrow[j];
    }
  }
}

// Inputs to log are clamped to this floor.
inline constexpr double kLogFloor = 1e-12;

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the
// owning Tape is alive.
class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  // Value of a 1x1 tensor.
  double item() const;

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only record of operations. Backward walks it in exact reverse
// order. Leaf gradients accumulate across backward calls until zero_grad().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Matrix value, bool requires_grad = false) {
    return record(std::move(value), {}, requires_grad, nullptr);
  }
  Tensor constant(Matrix value) { return leaf(std::move(value), false); }
  Tensor scalar(double v) { return constant(Matrix(1, 1, v)); }

  // Records an op result. requires_grad is inherited from the inputs.
  Tensor record(Matrix value, std::vector<std::size_t> inputs,
                BackwardFn backward) {
    bool rg = false;
    for (auto i : inputs) rg = rg || nodes_[i].requires_grad;
    return record(std::move(value), std::move(inputs), rg, std::move(backward));
  }

  void backward(const Tensor& loss) {
    check_owner(loss);
    const Node& ln = nodes_[loss.id()];
    if (ln.value.rows != 1 || ln.value.cols != 1) {
      throw ShapeError("backward on non-scalar " + detail::shape_str(ln.value));
    }
    if (!ln.requires_grad) return;
    for (std::size_t i = 0; i <= loss.id(); ++i) {
      Node& n = nodes_[i];
      if (!n.requires_grad) continue;
      if (!n.grad.same_shape(n.value)) {
        n.grad = Matrix(n.value.rows, n.value.cols);
      } else if (!n.inputs.empty()) {
        std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
      }
    }
    nodes_[loss.id()].grad.data[0] += 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backward) n.backward(*this, i);
    }
  }

  void zero_grad() {
    for (auto& n : nodes_) {
      std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  Matrix& grad_mut(std::size_t id) { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_[id].inputs;
  }

  void check_owner(const Tensor& t) const {
    if (t.tape() != this) throw Error("tensor belongs to another tape");
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Tensor record(Matrix value, std::vector<std::size_t> inputs, bool rg,
                BackwardFn backward) {
    for (double v : value.data) {
      if (!std::isfinite(v)) throw Error("non-finite value in forward pass");
    }
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(inputs), rg,
                          std::move(backward)});
    return Tensor(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Tensor::value() const { return tape_->value(id_); }
inline const Matrix& Tensor::grad() const { return tape_->grad(id_); }
inline bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }
inline double Tensor::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("item() on " + detail::shape_str(v));
  return v.data[0];
}

namespace ad {

namespace detail {

inline Tape& same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw Error("tensors recorded on different tapes");
  }
  return *a.tape();
}

// Input gradient slot, or nullptr if that input does not need a gradient.
inline Matrix* input_grad(Tape& t, std::size_t self, std::size_t which) {
  const std::size_t in = t.inputs(self)[which];
  return t.requires_grad(in) ? &t.grad_mut(in) : nullptr;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix out(xv.rows, xv.cols);
  for (std::size_t i = 0; i < xv.size(); ++i) out.data[i] = fwd(xv.data[i]);
  return t.record(std::move(out), {x.id()},
                  [deriv](Tape& tp, std::size_t self) {
                    Matrix* gx = input_grad(tp, self, 0);
                    if (!gx) return;
                    const Matrix& xin = tp.value(tp.inputs(self)[0]);
                    const Matrix& y = tp.value(self);
                    const Matrix& g = tp.grad(self);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      gx->data[i] += g.data[i] * deriv(xin.data[i], y.data[i]);
                    }
                  });
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& t = detail::same_tape(a, b);
  Matrix out = bfts::matmul(a.value(), b.value());
  return t.record(std::move(out), {a.id(), b.id()},
                  [](Tape& tp, std::size_t self) {
                    const auto& in = tp.inputs(self);
                    const Matrix& g = tp.grad(self);
                    if (Matrix* ga = detail::input_grad(tp, self, 0)) {
                      bfts::detail::gemm_nt(g, tp.value(in[1]), *ga);
                    }
                    if (Matrix* gb = detail::input_grad(tp, self, 1)) {
                      bfts::detail::gemm_tn(tp.value(in[0]), g, *gb);
                    }
                  });
}

// Left-multiplies x by a constant matrix held by reference. The matrix must
// outlive the tape. Used for graph propagation with a fixed operator.
inline Tensor propagate(const Matrix& op, const Tensor& x) {
  Tape& t = *x.tape();
  if (op.cols != x.rows()) {
    throw ShapeError("propagate: operator " + bfts::detail::shape_str(op) +
                     " vs input " + bfts::detail::shape_str(x.value()));
  }
  Matrix out = bfts::matmul(op, x.value());
  const Matrix* op_ptr = &op;
  return t.record(std::move(out), {x.id()},
                  [op_ptr](Tape& tp, std::size_t self) {
                    if (Matrix* gx = detail::input_grad(tp, self, 0)) {
                      bfts::detail::gemm_tn(*op_ptr, tp.grad(self), *gx);
                    }
                  });
}

// Sparse counterpart of propagate.
inline Tensor propagate(const SparseMatrix& op, const Tensor& x) {
  Tape& t = *x.tape();
  if (op.cols != x.rows()) {
    throw ShapeError("propagate: operator has " + std::to_string(op.cols) +
                     " columns, input has " + std::to_string(x.rows()) + " rows");
  }
  Matrix out(op.rows, x.cols());
  spmm(op, x.value(), out);
  const SparseMatrix* op_ptr = &op;
  return t.record(std::move(out), {x.id()},
                  [op_ptr](Tape& tp, std::size_t self) {
                    if (Matrix* gx = detail::input_grad(tp, self, 0)) {
                      spmm_t(*op_ptr, tp.grad(self), *gx);
                    }
                  });
}

// Elementwise sum. b may also be a 1 x cols row broadcast over a's rows.
inline Tensor add(const Tensor& a, const Tensor& b) {
  Tape& t = detail::same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const bool broadcast = !av.same_shape(bv);
  if (broadcast && !(bv.rows == 1 && bv.cols == av.cols)) {
    throw ShapeError("add " + bfts::detail::shape_str(av) + " + " +
                     bfts::detail::shape_str(bv));
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data[i] += broadcast ? bv.data[i % av.cols] : bv.data[i];
  }
  return t.record(std::move(out), {a.id(), b.id()},
                  [broadcast](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(self);
                    if (Matrix* ga = detail::input_grad(tp, self, 0)) {
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        ga->data[i] += g.data[i];
                      }
                    }
                    if (Matrix* gb = detail::input_grad(tp, self, 1)) {
                      if (broadcast) {
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          gb->data[i % gb->cols] += g.data[i];
                        }
                      } else {
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          gb->data[i] += g.data[i];
                        }
                      }
                    }
                  });
}

namespace detail {

template <typename Fwd, typename Back>
Tensor binary_same_shape(const char* name, const Tensor& a, const Tensor& b,
                         Fwd fwd, Back back) {
  Tape& t = same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (!av.same_shape(bv)) {
    throw ShapeError(std::string(name) + " " + bfts::detail::shape_str(av) +
                     " vs " + bfts::detail::shape_str(bv));
  }
  Matrix out(av.rows, av.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data[i] = fwd(av.data[i], bv.data[i]);
  }
  return t.record(std::move(out), {a.id(), b.id()},
                  [back](Tape& tp, std::size_t self) {
                    const auto& in = tp.inputs(self);
                    const Matrix& x = tp.value(in[0]);
                    const Matrix& y = tp.value(in[1]);
                    const Matrix& g = tp.grad(self);
                    Matrix* gx = input_grad(tp, self, 0);
                    Matrix* gy = input_grad(tp, self, 1);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      auto [dx, dy] = back(x.data[i], y.data[i]);
                      if (gx) gx->data[i] += g.data[i] * dx;
                      if (gy) gy->data[i] += g.data[i] * dy;
                    }
                  });
}

}  // namespace detail

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_same_shape(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_same_shape(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_same_shape(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double x, double y) { return std::pair{1.0 / y, -x / (y * y)}; });
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary(
      x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary(
      x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

// Natural log with inputs clamped to kLogFloor; the clamped region has zero
// derivative.
inline Tensor log(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::log(std::max(v, kLogFloor)); },
      [](double v, double) { return v > kLogFloor ? 1.0 / v : 0.0; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

inline Tensor row_softmax(const Tensor& x) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix out(xv.rows, xv.cols);
  for (std::size_t r = 0; r < xv.rows; ++r) {
    double mx = xv(r, 0);
    for (std::size_t c = 1; c < xv.cols; ++c) mx = std::max(mx, xv(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < xv.cols; ++c) {
      out(r, c) = std::exp(xv(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < xv.cols; ++c) out(r, c) /= z;
  }
  return t.record(std::move(out), {x.id()}, [](Tape& tp, std::size_t self) {
    Matrix* gx = detail::input_grad(tp, self, 0);
    if (!gx) return;
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.grad(self);
    for (std::size_t r = 0; r < y.rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols; ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols; ++c) {
        (*gx)(r, c) += y(r, c) * (g(r, c) - dot);
      }
    }
  });
}

// log(row_softmax(x)) computed through log-sum-exp.
inline Tensor row_log_softmax(const Tensor& x) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix out(xv.rows, xv.cols);
  for (std::size_t r = 0; r < xv.rows; ++r) {
    double mx = xv(r, 0);
    for (std::size_t c = 1; c < xv.cols; ++c) mx = std::max(mx, xv(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < xv.cols; ++c) z += std::exp(xv(r, c) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < xv.cols; ++c) out(r, c) = xv(r, c) - lse;
  }
  return t.record(std::move(out), {x.id()}, [](Tape& tp, std::size_t self) {
    Matrix* gx = detail::input_grad(tp, self, 0);
    if (!gx) return;
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.grad(self);
    for (std::size_t r = 0; r < y.rows; ++r) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < y.cols; ++c) gsum += g(r, c);
      for (std::size_t c = 0; c < y.cols; ++c) {
        (*gx)(r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
      }
    }
  });
}

inline Tensor sum(const Tensor& x) {
  Tape& t = *x.tape();
  double s = 0.0;
  for (double v : x.value().data) s += v;
  return t.record(Matrix(1, 1, s), {x.id()}, [](Tape& tp, std::size_t self) {
    Matrix* gx = detail::input_grad(tp, self, 0);
    if (!gx) return;
    const double g = tp.grad(self).data[0];
    for (double& v : gx->data) v += g;
  });
}

inline Tensor mean(const Tensor& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

// Stacks b's rows below a's rows.
inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
  Tape& t = detail::same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols != bv.cols) {
    throw ShapeError("concat_rows " + bfts::detail::shape_str(av) + " / " +
                     bfts::detail::shape_str(bv));
  }
  Matrix out(av.rows + bv.rows, av.cols);
  std::copy(av.data.begin(), av.data.end(), out.data.begin());
  std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.size());
  const std::size_t split = av.size();
  return t.record(std::move(out), {a.id(), b.id()},
                  [split](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(self);
                    if (Matrix* ga = detail::input_grad(tp, self, 0)) {
                      for (std::size_t i = 0; i < split; ++i) {
                        ga->data[i] += g.data[i];
                      }
                    }
                    if (Matrix* gb = detail::input_grad(tp, self, 1)) {
                      for (std::size_t i = split; i < g.size(); ++i) {
                        gb->data[i - split] += g.data[i];
                      }
                    }
                  });
}

// Keeps the rows whose mask entry is nonzero, in order.
inline Tensor select_rows(const Tensor& x, std::span<const std::uint8_t> mask) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  if (mask.size() != xv.rows) {
    throw ShapeError("select_rows mask of length " +
                     std::to_string(mask.size()) + " for " +
                     bfts::detail::shape_str(xv));
  }
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (mask[r]) rows.push_back(r);
  }
  Matrix out(rows.size(), xv.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(&xv.data[rows[i] * xv.cols], xv.cols, &out.data[i * xv.cols]);
  }
  return t.record(std::move(out), {x.id()},
                  [rows = std::move(rows)](Tape& tp, std::size_t self) {
                    Matrix* gx = detail::input_grad(tp, self, 0);
                    if (!gx) return;
                    const Matrix& g = tp.grad(self);
                    const std::size_t c = g.cols;
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                      for (std::size_t j = 0; j < c; ++j) {
                        gx->data[rows[i] * c + j] += g.data[i * c + j];
                      }
                    }
                  });
}

// Column j as an n x 1 tensor.
inline Tensor column(const Tensor& x, std::size_t j) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  if (j >= xv.cols) throw ShapeError("column index out of range");
  Matrix out(xv.rows, 1);
  for (std::size_t r = 0; r < xv.rows; ++r) out.data[r] = xv(r, j);
  return t.record(std::move(out), {x.id()}, [j](Tape& tp, std::size_t self) {
    Matrix* gx = detail::input_grad(tp, self, 0);
    if (!gx) return;
    const Matrix& g = tp.grad(self);
    for (std::size_t r = 0; r < g.rows; ++r) (*gx)(r, j) += g.data[r];
  });
}

// Per-entry multipliers of inverted dropout: 0 with probability `rate`,
// 1/(1-rate) otherwise.
inline std::vector<double> dropout_factors(std::size_t n, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout rate must be in [0,1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> factor(n);
  for (double& f : factor) f = rng.uniform() < rate ? 0.0 : keep_scale;
  return factor;
}

// Multiplies x elementwise by fixed dropout factors.
inline Tensor dropout(const Tensor& x, std::vector<double> factor) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  if (factor.size() != xv.size()) throw ShapeError("dropout mask size mismatch");
  Matrix out(xv.rows, xv.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data[i] = xv.data[i] * factor[i];
  }
  return t.record(std::move(out), {x.id()},
                  [factor = std::move(factor)](Tape& tp, std::size_t self) {
                    Matrix* gx = detail::input_grad(tp, self, 0);
                    if (!gx) return;
                    const Matrix& g = tp.grad(self);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      gx->data[i] += g.data[i] * factor[i];
                    }
                  });
}

// Inverted dropout: at train time each entry is zeroed with probability
// `rate` and survivors are scaled by 1/(1-rate). Identity otherwise.
inline Tensor dropout(const Tensor& x, double rate, bool train, Rng& rng) {
  if (!train || rate <= 0.0) return x;
  return dropout(x, dropout_factors(x.value().size(), rate, rng));
}

}  // namespace ad

// Adaptive moment estimation state for one parameter list.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of params against grads (descent).
inline void adam_step(std::span<Matrix> params, std::span<const Matrix> grads,
                      AdamState& state, double lr, AdamHyper hp = {}) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: parameter/gradient count mismatch");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.rows, p.cols);
      state.v.emplace_back(p.rows, p.cols);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = params[k];
    const Matrix& g = grads[k];
    if (!p.same_shape(g) || !p.same_shape(state.m[k])) {
      throw ShapeError("adam_step: shape mismatch for parameter " +
                       std::to_string(k));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      double& m = state.m[k].data[i];
      double& v = state.v[k].data[i];
      m = hp.beta1 * m + (1.0 - hp.beta1) * g.data[i];
      v = hp.beta2 * v + (1.0 - hp.beta2) * g.data[i] * g.data[i];
      const double mhat = m / c1;
      const double vhat = v / c2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
}

// ---- checkpoints -----------------------------------------------------------

struct NamedMatrix {
  std::string name;
  Matrix value;
  bool operator==(const NamedMatrix&) const = default;
};

inline constexpr const char* kCheckpointMagic = "BFTS-CKPT v1";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_checkpoint(std::ostream& out,
                             std::span<const NamedMatrix> tensors) {
  out << kCheckpointMagic << '\n';
  for (const auto& t : tensors) {
    out << t.name << ' ' << t.value.rows << ' ' << t.value.cols << '\n';
    for (std::size_t r = 0; r < t.value.rows; ++r) {
      for (std::size_t c = 0; c < t.value.cols; ++c) {
        if (c) out << ' ';
        out << format_double(t.value(r, c));
      }
      out << '\n';
    }
  }
  out << "end " << tensors.size() << '\n';
}

inline std::vector<NamedMatrix> read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw DataError("checkpoint: missing 'BFTS-CKPT v1' header");
  }
  std::vector<NamedMatrix> out;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (ended) throw DataError("checkpoint: data after end marker");
    if (line.rfind("end ", 0) == 0) {
      if (line != "end " + std::to_string(out.size())) {
        throw DataError("checkpoint: bad end marker '" + line + "'");
      }
      ended = true;
      continue;
    }
    std::istringstream hdr(line);
    NamedMatrix t;
    long long rows = -1, cols = -1;
    std::string extra;
    if (!(hdr >> t.name >> rows >> cols) || rows < 0 || cols < 0 ||
        (hdr >> extra)) {
      throw DataError("checkpoint: bad tensor header '" + line + "'");
    }
    t.value = Matrix(static_cast<std::size_t>(rows),
                     static_cast<std::size_t>(cols));
    for (std::size_t r = 0; r < t.value.rows; ++r) {
      if (!std::getline(in, line)) {
        throw DataError("checkpoint: truncated tensor '" + t.name + "'");
      }
      std::istringstream row(line);
      for (std::size_t c = 0; c < t.value.cols; ++c) {
        std::string tok;
        if (!(row >> tok)) {
          throw DataError("checkpoint: short row in tensor '" + t.name + "'");
        }
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(tok, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != tok.size() || !std::isfinite(v)) {
          throw DataError("checkpoint: bad value '" + tok + "' in tensor '" +
                          t.name + "'");
        }
        t.value(r, c) = v;
      }
      std::string extra_tok;
      if (row >> extra_tok) {
        throw DataError("checkpoint: long row in tensor '" + t.name + "'");
      }
    }
    out.push_back(std::move(t));
  }
  if (!ended) throw DataError("checkpoint: missing end marker (truncated?)");
  return out;
}

inline void save_checkpoint(const std::string& path,
                            std::span<const NamedMatrix> tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  write_checkpoint(out, tensors);
}

inline std::vector<NamedMatrix> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace bfts
