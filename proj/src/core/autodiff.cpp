#include "dsb/core/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "dsb/core/error.hpp"
#include "dsb/core/logmath.hpp"

namespace dsb::ad {

namespace {

constexpr double kUnderflowGuard = 1e-280;

double safe_mul(double x, double y) {
  if (x == 0.0 || y == 0.0) return 0.0;
  return x * y;
}

void require(bool ok, const char* what) {
  if (!ok) throw ValidationError(what);
}

void require_same_tape(Var a, Var b) {
  require(a.valid() && b.valid() && a.tape() == b.tape(), "operands live on different tapes");
}

}  // namespace

MatrixStack MatrixStack::from_log(Tensor log_values, std::size_t count) {
  require(log_values.rank() == 2 && count > 0 && log_values.rows() % count == 0,
          "matrix stack: bad shape");
  MatrixStack st;
  st.count = count;
  st.rows = log_values.rows() / count;
  st.cols = log_values.cols();
  st.scaled = Tensor(log_values.shape());
  st.row_max = Tensor(Shape{log_values.rows()});
  for (std::size_t r = 0; r < log_values.rows(); ++r) {
    const auto row = log_values.row(r);
    const double top = *std::max_element(row.begin(), row.end());
    st.row_max[r] = top;
    for (std::size_t c = 0; c < st.cols; ++c) {
      st.scaled(r, c) = top == kNegInf ? 0.0 : std::exp(row[c] - top);
    }
  }
  st.log_values = std::move(log_values);
  return st;
}

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::add_row: return "add_row";
    case Op::add_scalar: return "add_scalar";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::matmul: return "matmul";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::logsumexp: return "logsumexp";
    case Op::sum: return "sum";
    case Op::sum_all: return "sum_all";
    case Op::relu: return "relu";
    case Op::log_softmax: return "log_softmax";
    case Op::gather_rows: return "gather_rows";
    case Op::gather_cols: return "gather_cols";
    case Op::pick: return "pick";
    case Op::log_matmul: return "log_matmul";
    case Op::log_matvec_rows: return "log_matvec_rows";
    case Op::reshape: return "reshape";
  }
  return "?";
}

const Tensor& Var::value() const {
  require(valid(), "value() of an unbound Var");
  return tape_->nodes_[id_].value;
}

Var Tape::push(Node n) {
  if (n.value.has_nan_or_posinf()) {
    throw NumericalError(std::string("non-finite value produced by op '") + op_name(n.op) + "'");
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tape::Node& Tape::node(Var v) {
  require(v.tape() == this, "Var belongs to another tape");
  return nodes_[v.id()];
}

Var Tape::parameter(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Tensor Tape::grad(Var v) const {
  require(v.tape() == this, "Var belongs to another tape");
  const Node& n = nodes_[v.id()];
  if (!n.has_grad) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::accumulate_add(std::size_t id, std::span<const double> g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  auto dst = n.grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

void Tape::accumulate(std::size_t id, const Tensor& g) { accumulate_add(id, g.data()); }

void Tape::backward(Var loss) {
  require(loss.tape() == this, "loss belongs to another tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ValidationError("backward() needs a scalar loss, got shape " +
                          shape_string(nodes_[loss.id()].value.shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  Node& root = nodes_[loss.id()];
  if (!root.requires_grad) return;
  root.grad = Tensor(root.value.shape(), 1.0);
  root.has_grad = true;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    if (nodes_[id].has_grad && nodes_[id].op != Op::leaf) backprop(id);
  }
}

void Tape::backprop(std::size_t id) {
  const Node& n = nodes_[id];
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::leaf:
      break;
    case Op::add:
      accumulate(n.a, g);
      accumulate(n.b, g);
      break;
    case Op::add_row: {
      accumulate(n.a, g);
      if (nodes_[n.b].requires_grad) {
        const std::size_t cols = g.cols();
        std::vector<double> gb(cols, 0.0);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < cols; ++j) gb[j] += g(i, j);
        accumulate_add(n.b, gb);
      }
      break;
    }
    case Op::add_scalar: {
      accumulate(n.a, g);
      double total = 0.0;
      for (double v : g.data()) total += v;
      accumulate_add(n.b, std::span<const double>(&total, 1));
      break;
    }
    case Op::sub: {
      accumulate(n.a, g);
      if (nodes_[n.b].requires_grad) {
        Tensor neg = g;
        for (double& v : neg.data()) v = -v;
        accumulate(n.b, neg);
      }
      break;
    }
    case Op::mul: {
      const Tensor& av = nodes_[n.a].value;
      const Tensor& bv = nodes_[n.b].value;
      if (nodes_[n.a].requires_grad) {
        Tensor ga(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = safe_mul(g[i], bv[i]);
        accumulate(n.a, ga);
      }
      if (nodes_[n.b].requires_grad) {
        Tensor gb(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] = safe_mul(g[i], av[i]);
        accumulate(n.b, gb);
      }
      break;
    }
    case Op::scale: {
      Tensor ga = g;
      for (double& v : ga.data()) v *= n.scalar;
      accumulate(n.a, ga);
      break;
    }
    case Op::matmul: {
      const Tensor& av = nodes_[n.a].value;
      const Tensor& bv = nodes_[n.b].value;
      if (nodes_[n.a].requires_grad) {
        Tensor ga(av.shape());
        ga.matrix().noalias() = g.matrix() * bv.matrix().transpose();
        accumulate(n.a, ga);
      }
      if (nodes_[n.b].requires_grad) {
        Tensor gb(bv.shape());
        gb.matrix().noalias() = av.matrix().transpose() * g.matrix();
        accumulate(n.b, gb);
      }
      break;
    }
    case Op::exp: {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = safe_mul(g[i], n.value[i]);
      accumulate(n.a, ga);
      break;
    }
    case Op::log: {
      const Tensor& av = nodes_[n.a].value;
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] == 0.0 ? 0.0 : g[i] / av[i];
      accumulate(n.a, ga);
      break;
    }
    case Op::logsumexp: {
      const Tensor& av = nodes_[n.a].value;
      Tensor ga(av.shape(), 0.0);
      if (av.rank() == 1) {
        const double out = n.value[0];
        if (out != kNegInf)
          for (std::size_t i = 0; i < av.size(); ++i) ga[i] = g[0] * std::exp(av[i] - out);
      } else if (n.axis == 1) {
        for (std::size_t i = 0; i < av.rows(); ++i) {
          const double out = n.value[i];
          if (out == kNegInf) continue;
          for (std::size_t j = 0; j < av.cols(); ++j) ga(i, j) = g[i] * std::exp(av(i, j) - out);
        }
      } else {
        for (std::size_t j = 0; j < av.cols(); ++j) {
          const double out = n.value[j];
          if (out == kNegInf) continue;
          for (std::size_t i = 0; i < av.rows(); ++i) ga(i, j) = g[j] * std::exp(av(i, j) - out);
        }
      }
      accumulate(n.a, ga);
      break;
    }
    case Op::sum: {
      const Tensor& av = nodes_[n.a].value;
      Tensor ga(av.shape());
      for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) ga(i, j) = n.axis == 1 ? g[i] : g[j];
      accumulate(n.a, ga);
      break;
    }
    case Op::sum_all: {
      Tensor ga(nodes_[n.a].value.shape(), g[0]);
      accumulate(n.a, ga);
      break;
    }
    case Op::relu: {
      const Tensor& av = nodes_[n.a].value;
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = av[i] > 0.0 ? g[i] : 0.0;
      accumulate(n.a, ga);
      break;
    }
    case Op::log_softmax: {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) total += g(i, j);
        for (std::size_t j = 0; j < g.cols(); ++j) {
          const double p = n.value(i, j) == kNegInf ? 0.0 : std::exp(n.value(i, j));
          ga(i, j) = g(i, j) - p * total;
        }
      }
      accumulate(n.a, ga);
      break;
    }
    case Op::gather_rows: {
      Node& src = nodes_[n.a];
      if (!src.requires_grad) break;
      if (!src.has_grad) {
        src.grad = Tensor(src.value.shape(), 0.0);
        src.has_grad = true;
      }
      for (std::size_t b = 0; b < n.index.size(); ++b) {
        auto dst = src.grad.row(n.index[b]);
        const auto from = g.row(b);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += from[j];
      }
      break;
    }
    case Op::gather_cols: {
      Node& src = nodes_[n.a];
      if (!src.requires_grad) break;
      if (!src.has_grad) {
        src.grad = Tensor(src.value.shape(), 0.0);
        src.has_grad = true;
      }
      for (std::size_t b = 0; b < n.index.size(); ++b)
        for (std::size_t r = 0; r < src.value.rows(); ++r) src.grad(r, n.index[b]) += g(b, r);
      break;
    }
    case Op::pick: {
      Node& src = nodes_[n.a];
      if (!src.requires_grad) break;
      if (!src.has_grad) {
        src.grad = Tensor(src.value.shape(), 0.0);
        src.has_grad = true;
      }
      for (std::size_t b = 0; b < n.index.size(); ++b) src.grad(b, n.index[b]) += g[b];
      break;
    }
    case Op::log_matmul: {
      // d out(i,j) / d a(i,s) = exp(a(i,s) + b(s,j) - out(i,j)).
      const Tensor& av = nodes_[n.a].value;
      const Tensor& bv = nodes_[n.b].value;
      const bool bt = n.flag;
      const std::size_t m = av.rows();
      const std::size_t inner = av.cols();
      const std::size_t cols = n.value.cols();
      auto bval = [&](std::size_t s, std::size_t j) { return bt ? bv(j, s) : bv(s, j); };
      std::vector<double> a_max(m, kNegInf), b_max(cols, kNegInf);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t s = 0; s < inner; ++s) a_max[i] = std::max(a_max[i], av(i, s));
      for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t s = 0; s < inner; ++s) b_max[j] = std::max(b_max[j], bval(s, j));
      RowMatrix ea(m, inner), eb(inner, cols), scaled_g(m, cols);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t s = 0; s < inner; ++s)
          ea(i, s) = a_max[i] == kNegInf ? 0.0 : std::exp(av(i, s) - a_max[i]);
      for (std::size_t s = 0; s < inner; ++s)
        for (std::size_t j = 0; j < cols; ++j)
          eb(s, j) = b_max[j] == kNegInf ? 0.0 : std::exp(bval(s, j) - b_max[j]);
      // Entries flagged in aux were evaluated exactly; handle them term by term.
      Tensor ga(av.shape(), 0.0), gb(bv.shape(), 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          const double out = n.value(i, j);
          if (out == kNegInf || g(i, j) == 0.0) {
            scaled_g(i, j) = 0.0;
          } else if (n.aux(i, j) != 0.0) {
            scaled_g(i, j) = 0.0;
            for (std::size_t s = 0; s < inner; ++s) {
              const double w = std::exp(av(i, s) + bval(s, j) - out);
              if (w == 0.0) continue;
              ga(i, s) += g(i, j) * w;
              if (bt) gb(j, s) += g(i, j) * w;
              else gb(s, j) += g(i, j) * w;
            }
          } else {
            scaled_g(i, j) = g(i, j) * std::exp(a_max[i] + b_max[j] - out);
          }
        }
      }
      if (nodes_[n.a].requires_grad) {
        RowMatrix part = scaled_g * eb.transpose();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t s = 0; s < inner; ++s) ga(i, s) += ea(i, s) * part(i, s);
        accumulate(n.a, ga);
      }
      if (nodes_[n.b].requires_grad) {
        RowMatrix part = ea.transpose() * scaled_g;  // [inner, cols]
        for (std::size_t s = 0; s < inner; ++s)
          for (std::size_t j = 0; j < cols; ++j) {
            const double v = eb(s, j) * part(s, j);
            if (bt) gb(j, s) += v;
            else gb(s, j) += v;
          }
        accumulate(n.b, gb);
      }
      break;
    }
    case Op::log_matvec_rows: {
      const MatrixStack& st = *n.stack;
      const Tensor& zv = nodes_[n.a].value;
      const std::size_t in = st.cols;
      const std::size_t out_cols = st.rows;
      Tensor gz(zv.shape(), 0.0);
      std::vector<double> coef(out_cols);
      for (std::size_t i = 0; i < zv.rows(); ++i) {
        const std::size_t base = n.index[i] * st.rows;
        const double zmax = n.aux(i, 0);
        if (zmax == kNegInf) continue;
        bool any = false;
        for (std::size_t r = 0; r < out_cols; ++r) {
          const double out = n.value(i, r);
          coef[r] = 0.0;
          if (out == kNegInf || g(i, r) == 0.0) continue;
          const double rmax = st.row_max[base + r];
          if (n.aux(i, 1 + r) != 0.0) {
            for (std::size_t c = 0; c < in; ++c) {
              const double w = std::exp(st.log_values(base + r, c) + zv(i, c) - out);
              gz(i, c) += g(i, r) * w;
            }
          } else {
            coef[r] = g(i, r) * std::exp(rmax + zmax - out);
            any = true;
          }
        }
        if (!any) continue;
        Eigen::Map<const Eigen::VectorXd> cv(coef.data(), static_cast<Eigen::Index>(out_cols));
        ConstMatrixMap mat(st.scaled.data().data() + base * in, static_cast<Eigen::Index>(out_cols),
                           static_cast<Eigen::Index>(in));
        Eigen::VectorXd back = mat.transpose() * cv;
        for (std::size_t c = 0; c < in; ++c) {
          if (zv(i, c) == kNegInf) continue;
          gz(i, c) += std::exp(zv(i, c) - zmax) * back[static_cast<Eigen::Index>(c)];
        }
      }
      accumulate(n.a, gz);
      break;
    }
    case Op::reshape:
      accumulate_add(n.a, g.data());
      break;
  }
}

// ---------------------------------------------------------------------------
// Op builders

Var add(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tape::Node n;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = t.node(a).requires_grad || t.node(b).requires_grad;
  n.value = av;
  if (av.shape() == bv.shape()) {
    n.op = Op::add;
    for (std::size_t i = 0; i < av.size(); ++i) n.value[i] += bv[i];
  } else if (av.rank() == 2 && bv.rank() == 1 && bv.size() == av.cols()) {
    n.op = Op::add_row;
    for (std::size_t i = 0; i < av.rows(); ++i)
      for (std::size_t j = 0; j < av.cols(); ++j) n.value(i, j) += bv[j];
  } else if (bv.size() == 1) {
    n.op = Op::add_scalar;
    for (double& v : n.value.data()) v += bv[0];
  } else {
    throw ValidationError("add: incompatible shapes " + shape_string(av.shape()) + " and " +
                          shape_string(bv.shape()));
  }
  return t.push(std::move(n));
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ValidationError("sub: shapes differ " + shape_string(av.shape()) + " vs " +
                          shape_string(bv.shape()));
  }
  Tape::Node n;
  n.op = Op::sub;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = t.node(a).requires_grad || t.node(b).requires_grad;
  n.value = av;
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] -= bv[i];
  return t.push(std::move(n));
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ValidationError("mul: shapes differ " + shape_string(av.shape()) + " vs " +
                          shape_string(bv.shape()));
  }
  Tape::Node n;
  n.op = Op::mul;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = t.node(a).requires_grad || t.node(b).requires_grad;
  n.value = Tensor(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = safe_mul(av[i], bv[i]);
  return t.push(std::move(n));
}

Var scale(Var a, double factor) {
  Tape& t = *a.tape();
  Tape::Node n;
  n.op = Op::scale;
  n.a = a.id();
  n.scalar = factor;
  n.requires_grad = t.node(a).requires_grad;
  n.value = a.value();
  for (double& v : n.value.data()) v = safe_mul(v, factor);
  return t.push(std::move(n));
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(), "matmul: bad shapes");
  Tape::Node n;
  n.op = Op::matmul;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = t.node(a).requires_grad || t.node(b).requires_grad;
  n.value = Tensor(Shape{av.rows(), bv.cols()});
  n.value.matrix().noalias() = av.matrix() * bv.matrix();
  return t.push(std::move(n));
}

Var exp(Var a) {
  Tape& t = *a.tape();
  Tape::Node n;
  n.op = Op::exp;
  n.a = a.id();
  n.requires_grad = t.node(a).requires_grad;
  n.value = a.value();
  for (double& v : n.value.data()) v = std::exp(v);
  return t.push(std::move(n));
}

Var log(Var a) {
  Tape& t = *a.tape();
  Tape::Node n;
  n.op = Op::log;
  n.a = a.id();
  n.requires_grad = t.node(a).requires_grad;
  n.value = a.value();
  for (double& v : n.value.data()) {
    if (v < 0.0) throw NumericalError("log of a negative value");
    v = v == 0.0 ? kNegInf : std::log(v);
  }
  return t.push(std::move(n));
}

Var logsumexp(Var a, int axis) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tape::Node n;
  n.op = Op::logsumexp;
  n.a = a.id();
  n.axis = axis;
  n.requires_grad = t.node(a).requires_grad;
  if (av.rank() == 1) {
    n.value = Tensor::scalar(dsb::logsumexp(av.data()));
  } else {
    require(av.rank() == 2 && (axis == 0 || axis == 1), "logsumexp: rank-2 axis must be 0 or 1");
    if (axis == 1) {
      n.value = Tensor(Shape{av.rows()});
      for (std::size_t i = 0; i < av.rows(); ++i) n.value[i] = dsb::logsumexp(av.row(i));
    } else {
      n.value = Tensor(Shape{av.cols()});
      std::vector<double> col(av.rows());
      for (std::size_t j = 0; j < av.cols(); ++j) {
        for (std::size_t i = 0; i < av.rows(); ++i) col[i] = av(i, j);
        n.value[j] = dsb::logsumexp(col);
      }
    }
  }
  return t.push(std::move(n));
}

Var sum(Var a, int axis) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  require(av.rank() == 2 && (axis == 0 || axis == 1), "sum: rank-2 axis must be 0 or 1");
  Tape::Node n;
  n.op = Op::sum;
  n.a = a.id();
  n.axis = axis;
  n.requires_grad = t.node(a).requires_grad;
  n.value = Tensor(Shape{axis == 1 ? av.rows() : av.cols()}, 0.0);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) n.value[axis == 1 ? i : j] += av(i, j);
  return t.push(std::move(n));
}

Var sum(Var a) {
  Tape& t = *a.tape();
  Tape::Node n;
  n.op = Op::sum_all;
  n.a = a.id();
  n.requires_grad = t.node(a).requires_grad;
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  n.value = Tensor::scalar(total);
  return t.push(std::move(n));
}

Var mean(Var a) {
  const double count = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / count);
}

Var relu(Var a) {
  Tape& t = *a.tape();
  Tape::Node n;
  n.op = Op::relu;
  n.a = a.id();
  n.requires_grad = t.node(a).requires_grad;
  n.value = a.value();
  for (double& v : n.value.data()) v = v > 0.0 ? v : 0.0;
  return t.push(std::move(n));
}

Var log_softmax(Var a) {
  Tape& t = *a.tape();
  require(a.value().rank() == 2, "log_softmax needs a rank-2 tensor");
  Tape::Node n;
  n.op = Op::log_softmax;
  n.a = a.id();
  n.requires_grad = t.node(a).requires_grad;
  n.value = a.value();
  for (std::size_t i = 0; i < n.value.rows(); ++i) log_normalize(n.value.row(i));
  return t.push(std::move(n));
}

Var gather_rows(Var a, std::vector<std::size_t> index) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  require(av.rank() == 2, "gather_rows needs a rank-2 tensor");
  Tape::Node n;
  n.op = Op::gather_rows;
  n.a = a.id();
  n.requires_grad = t.node(a).requires_grad;
  n.value = Tensor(Shape{index.size(), av.cols()});
  for (std::size_t b = 0; b < index.size(); ++b) {
    if (index[b] >= av.rows()) throw ValidationError("gather_rows: index out of range");
    std::copy(av.row(index[b]).begin(), av.row(index[b]).end(), n.value.row(b).begin());
  }
  n.index = std::move(index);
  return t.push(std::move(n));
}

Var gather_cols(Var a, std::vector<std::size_t> index) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  require(av.rank() == 2, "gather_cols needs a rank-2 tensor");
  Tape::Node n;
  n.op = Op::gather_cols;
  n.a = a.id();
  n.requires_grad = t.node(a).requires_grad;
  n.value = Tensor(Shape{index.size(), av.rows()});
  for (std::size_t b = 0; b < index.size(); ++b) {
    if (index[b] >= av.cols()) throw ValidationError("gather_cols: index out of range");
    for (std::size_t r = 0; r < av.rows(); ++r) n.value(b, r) = av(r, index[b]);
  }
  n.index = std::move(index);
  return t.push(std::move(n));
}

Var pick(Var a, std::vector<std::size_t> index) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  require(av.rank() == 2 && av.rows() == index.size(), "pick: one index per row required");
  Tape::Node n;
  n.op = Op::pick;
  n.a = a.id();
  n.requires_grad = t.node(a).requires_grad;
  n.value = Tensor(Shape{index.size()});
  for (std::size_t b = 0; b < index.size(); ++b) {
    if (index[b] >= av.cols()) throw ValidationError("pick: index out of range");
    n.value[b] = av(b, index[b]);
  }
  n.index = std::move(index);
  return t.push(std::move(n));
}

Var log_matmul(Var a, Var b, bool b_transposed) {
  require_same_tape(a, b);
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tape::Node n;
  n.op = Op::log_matmul;
  n.a = a.id();
  n.b = b.id();
  n.flag = b_transposed;
  n.requires_grad = t.node(a).requires_grad || t.node(b).requires_grad;
  n.value = dsb::log_matmul(av, bv, b_transposed);
  // Mark the entries the forward pass had to evaluate exactly so the adjoint
  // takes the same route.
  const std::size_t m = av.rows();
  const std::size_t inner = av.cols();
  const std::size_t cols = n.value.cols();
  auto bval = [&](std::size_t s, std::size_t j) { return b_transposed ? bv(j, s) : bv(s, j); };
  std::vector<double> a_max(m, kNegInf), b_max(cols, kNegInf);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t s = 0; s < inner; ++s) a_max[i] = std::max(a_max[i], av(i, s));
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t s = 0; s < inner; ++s) b_max[j] = std::max(b_max[j], bval(s, j));
  n.aux = Tensor(n.value.shape(), 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double out = n.value(i, j);
      if (out == kNegInf || a_max[i] == kNegInf || b_max[j] == kNegInf) continue;
      if (std::exp(out - a_max[i] - b_max[j]) <= kUnderflowGuard) n.aux(i, j) = 1.0;
    }
  return t.push(std::move(n));
}

Var log_matvec_rows(const MatrixStack& stack, Var z, std::vector<std::size_t> select) {
  Tape& t = *z.tape();
  const Tensor& zv = z.value();
  require(zv.rank() == 2 && zv.cols() == stack.cols, "log_matvec_rows: z has wrong width");
  require(select.size() == zv.rows(), "log_matvec_rows: one selector per row required");
  const std::size_t in = stack.cols;
  const std::size_t out_cols = stack.rows;
  Tape::Node n;
  n.op = Op::log_matvec_rows;
  n.a = z.id();
  n.stack = &stack;
  n.requires_grad = t.node(z).requires_grad;
  n.value = Tensor(Shape{zv.rows(), out_cols});
  // aux(i, 0) = row max of z; aux(i, 1 + r) = 1 when entry r was evaluated exactly.
  n.aux = Tensor(Shape{zv.rows(), out_cols + 1}, 0.0);
  Eigen::VectorXd e(static_cast<Eigen::Index>(in));
  std::vector<double> terms(in);
  for (std::size_t i = 0; i < zv.rows(); ++i) {
    if (select[i] >= stack.count) throw ValidationError("log_matvec_rows: selector out of range");
    const std::size_t base = select[i] * stack.rows;
    const auto zr = zv.row(i);
    const double zmax = *std::max_element(zr.begin(), zr.end());
    n.aux(i, 0) = zmax;
    if (zmax == kNegInf) {
      for (std::size_t r = 0; r < out_cols; ++r) n.value(i, r) = kNegInf;
      continue;
    }
    for (std::size_t c = 0; c < in; ++c) e[static_cast<Eigen::Index>(c)] = std::exp(zr[c] - zmax);
    ConstMatrixMap mat(stack.scaled.data().data() + base * in, static_cast<Eigen::Index>(out_cols),
                       static_cast<Eigen::Index>(in));
    Eigen::VectorXd lin = mat * e;
    for (std::size_t r = 0; r < out_cols; ++r) {
      const double rmax = stack.row_max[base + r];
      if (rmax == kNegInf) {
        n.value(i, r) = kNegInf;
      } else if (lin[static_cast<Eigen::Index>(r)] > kUnderflowGuard) {
        n.value(i, r) = rmax + zmax + std::log(lin[static_cast<Eigen::Index>(r)]);
      } else {
        for (std::size_t c = 0; c < in; ++c) terms[c] = stack.log_values(base + r, c) + zr[c];
        n.value(i, r) = dsb::logsumexp(terms);
        n.aux(i, 1 + r) = 1.0;
      }
    }
  }
  n.index = std::move(select);
  return t.push(std::move(n));
}

Var reshape(Var a, Shape shape) {
  Tape& t = *a.tape();
  Tape::Node n;
  n.op = Op::reshape;
  n.a = a.id();
  n.requires_grad = t.node(a).requires_grad;
  n.value = a.value().reshaped(std::move(shape));
  return t.push(std::move(n));
}

}  // namespace dsb::ad
