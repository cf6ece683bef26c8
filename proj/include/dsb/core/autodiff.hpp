#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "dsb/core/tensor.hpp"

namespace dsb::ad {

/// A constant stack of `count` log-domain matrices, each `rows x cols`, plus the
/// row-stabilized linear form used by the log matrix-vector primitive.
struct MatrixStack {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Tensor log_values;  // [count * rows, cols]
  Tensor scaled;      // exp(log_values - row_max), same layout
  Tensor row_max;     // [count * rows]

  static MatrixStack from_log(Tensor log_values, std::size_t count);
};

enum class Op {
  leaf,
  add,
  add_row,
  add_scalar,
  sub,
  mul,
  scale,
  matmul,
  exp,
  log,
  logsumexp,
  sum,
  sum_all,
  relu,
  log_softmax,
  gather_rows,
  gather_cols,
  pick,
  log_matmul,
  log_matvec_rows,
  reshape,
};

const char* op_name(Op op);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of primitive operations with reverse-mode adjoints.
///
/// Values are computed eagerly when an op is recorded. backward() replays the
/// adjoint of every node in reverse recording order. Only nodes that depend on a
/// trainable leaf carry gradients; constants never do.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var parameter(Tensor value);
  Var constant(Tensor value);

  void backward(Var loss);

  // Gradient of the last backward() loss w.r.t. v; exactly zero when v is not
  // on any path to the loss.
  Tensor grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  friend Var add(Var, Var);
  friend Var sub(Var, Var);
  friend Var mul(Var, Var);
  friend Var scale(Var, double);
  friend Var matmul(Var, Var);
  friend Var exp(Var);
  friend Var log(Var);
  friend Var logsumexp(Var, int);
  friend Var sum(Var, int);
  friend Var sum(Var);
  friend Var relu(Var);
  friend Var log_softmax(Var);
  friend Var gather_rows(Var, std::vector<std::size_t>);
  friend Var gather_cols(Var, std::vector<std::size_t>);
  friend Var pick(Var, std::vector<std::size_t>);
  friend Var log_matmul(Var, Var, bool);
  friend Var log_matvec_rows(const MatrixStack&, Var, std::vector<std::size_t>);
  friend Var reshape(Var, Shape);

  struct Node {
    Op op = Op::leaf;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::size_t a = 0;
    std::size_t b = 0;
    double scalar = 0.0;
    int axis = 0;
    bool flag = false;
    std::vector<std::size_t> index;
    const MatrixStack* stack = nullptr;
    Tensor aux;
  };

  Var push(Node node);
  Node& node(Var v);
  const Node& node(std::size_t id) const { return nodes_[id]; }
  void accumulate(std::size_t id, const Tensor& g);
  void accumulate_add(std::size_t id, std::span<const double> g);
  void backprop(std::size_t id);

  std::deque<Node> nodes_;
};

// Elementwise sum. `b` may match `a`, be a rank-1 row broadcast over the last
// axis of a rank-2 `a`, or be a scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Elementwise product; 0 * (+-inf) is taken as 0 so masked log terms vanish.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var matmul(Var a, Var b);
Var exp(Var a);
Var log(Var a);
// Reduces a rank-2 tensor along `axis` (0 or 1), or a rank-1 tensor to a scalar.
Var logsumexp(Var a, int axis);
Var sum(Var a, int axis);
Var sum(Var a);
Var mean(Var a);
Var relu(Var a);
// Row-wise log-softmax of a rank-2 tensor.
Var log_softmax(Var a);
// out[b, :] = a[index[b], :]
Var gather_rows(Var a, std::vector<std::size_t> index);
// out[b, r] = a[r, index[b]]
Var gather_cols(Var a, std::vector<std::size_t> index);
// out[b] = a[b, index[b]]
Var pick(Var a, std::vector<std::size_t> index);
// out[i, j] = logsumexp_s(a[i, s] + b[s, j]); b laid out as [j, s] when transposed.
Var log_matmul(Var a, Var b, bool b_transposed);
// out[i, r] = logsumexp_c(M_{select[i]}[r, c] + z[i, c]) for a constant matrix stack.
// The stack must outlive the tape.
Var log_matvec_rows(const MatrixStack& stack, Var z, std::vector<std::size_t> select);
Var reshape(Var a, Shape shape);

}  // namespace dsb::ad
