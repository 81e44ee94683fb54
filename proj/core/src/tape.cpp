#include "thinktuning/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace thinktuning {

namespace {

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite())
    throw std::range_error(std::string("tape: non-finite value produced by ") + op);
}

}  // namespace

const Tensor& Var::value() const {
  if (!tape) throw std::logic_error("Var::value on null handle");
  return tape->value(*this);
}

Tensor Var::grad() const {
  if (!tape) throw std::logic_error("Var::grad on null handle");
  return tape->grad(*this);
}

const Tape::Node& Tape::node_at(Var v) const {
  if (v.tape != this)
    throw std::logic_error("tape: handle belongs to a different tape");
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::out_of_range("tape: stale node handle (was the tape reset?)");
  return nodes_[static_cast<std::size_t>(v.id)];
}

void Tape::check_same_tape(Var a, Var b) const {
  if (a.tape != this || b.tape != this)
    throw std::logic_error("tape: operands live on different tapes");
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) {
  check_finite(value, "leaf");
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  check_finite(value, "constant");
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  n.requires_grad = false;
  return push(std::move(n));
}

Var Tape::constant(double value) { return constant(Tensor::scalar(value)); }

Var Tape::binary_elementwise(Op op, Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& ta = node_at(a).value;
  const Tensor& tb = node_at(b).value;

  Broadcast bc;
  const Tensor* out_like;
  if (ta.same_shape(tb)) {
    bc = Broadcast::kSame;
    out_like = &ta;
  } else if (ta.is_scalar()) {
    bc = Broadcast::kAScalar;
    out_like = &tb;
  } else if (tb.is_scalar()) {
    bc = Broadcast::kBScalar;
    out_like = &ta;
  } else if (ta.rank() == 1 && tb.rank() == 2 && ta.shape[0] == tb.shape[1]) {
    bc = Broadcast::kARow;
    out_like = &tb;
  } else if (tb.rank() == 1 && ta.rank() == 2 && tb.shape[0] == ta.shape[1]) {
    bc = Broadcast::kBRow;
    out_like = &ta;
  } else {
    throw std::invalid_argument("tape: shapes " + shape_string(ta.shape) + " and " +
                                shape_string(tb.shape) + " do not broadcast");
  }

  const std::int64_t n = out_like->numel();
  const std::int64_t c = out_like->rank() == 2 ? out_like->shape[1] : n;
  auto ia = [&](std::int64_t i) {
    switch (bc) {
      case Broadcast::kAScalar: return std::int64_t{0};
      case Broadcast::kARow: return i % c;
      default: return i;
    }
  };
  auto ib = [&](std::int64_t i) {
    switch (bc) {
      case Broadcast::kBScalar: return std::int64_t{0};
      case Broadcast::kBRow: return i % c;
      default: return i;
    }
  };

  if (op == Op::kDiv) {
    for (std::int64_t i = 0; i < tb.numel(); ++i)
      if (tb.at(i) == 0.0) throw std::domain_error("tape: division by zero");
  }

  Tensor out = Tensor::zeros(out_like->shape);
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = ta.at(ia(i));
    const double y = tb.at(ib(i));
    double v = 0.0;
    switch (op) {
      case Op::kAdd: v = x + y; break;
      case Op::kSub: v = x - y; break;
      case Op::kMul: v = x * y; break;
      case Op::kDiv: v = x / y; break;
      case Op::kMin: v = x <= y ? x : y; break;
      case Op::kMax: v = x >= y ? x : y; break;
      default: throw std::logic_error("tape: not a binary elementwise op");
    }
    out.at(i) = v;
  }
  check_finite(out, "binary elementwise op");

  Node node;
  node.op = op;
  node.a = a.id;
  node.b = b.id;
  node.bc = bc;
  node.value = std::move(out);
  node.requires_grad = node_at(a).requires_grad || node_at(b).requires_grad;
  return push(std::move(node));
}

Var Tape::add(Var a, Var b) { return binary_elementwise(Op::kAdd, a, b); }
Var Tape::sub(Var a, Var b) { return binary_elementwise(Op::kSub, a, b); }
Var Tape::mul(Var a, Var b) { return binary_elementwise(Op::kMul, a, b); }
Var Tape::div(Var a, Var b) { return binary_elementwise(Op::kDiv, a, b); }
Var Tape::minimum(Var a, Var b) { return binary_elementwise(Op::kMin, a, b); }
Var Tape::maximum(Var a, Var b) { return binary_elementwise(Op::kMax, a, b); }

Var Tape::exp(Var x) {
  const Tensor& tx = node_at(x).value;
  Tensor out = Tensor::zeros(tx.shape);
  for (std::int64_t i = 0; i < tx.numel(); ++i) out.at(i) = std::exp(tx.at(i));
  check_finite(out, "exp");
  Node n;
  n.op = Op::kExp;
  n.a = x.id;
  n.value = std::move(out);
  n.requires_grad = node_at(x).requires_grad;
  return push(std::move(n));
}

Var Tape::log(Var x) {
  const Tensor& tx = node_at(x).value;
  Tensor out = Tensor::zeros(tx.shape);
  for (std::int64_t i = 0; i < tx.numel(); ++i) {
    if (tx.at(i) <= 0.0) throw std::domain_error("tape: log of nonpositive value");
    out.at(i) = std::log(tx.at(i));
  }
  Node n;
  n.op = Op::kLog;
  n.a = x.id;
  n.value = std::move(out);
  n.requires_grad = node_at(x).requires_grad;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& ta = node_at(a).value;
  const Tensor& tb = node_at(b).value;
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0])
    throw std::invalid_argument("tape: matmul shapes " + shape_string(ta.shape) + " x " +
                                shape_string(tb.shape) + " incompatible");
  const std::int64_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t p = 0; p < k; ++p) {
      const double aip = ta.at(i, p);
      if (aip == 0.0) continue;
      for (std::int64_t j = 0; j < n; ++j) out.at(i, j) += aip * tb.at(p, j);
    }
  check_finite(out, "matmul");
  Node node;
  node.op = Op::kMatmul;
  node.a = a.id;
  node.b = b.id;
  node.value = std::move(out);
  node.requires_grad = node_at(a).requires_grad || node_at(b).requires_grad;
  return push(std::move(node));
}

namespace {

// Shared row iteration for the softmax pair: rank 1 is a single row.
struct RowView {
  std::int64_t rows, cols;
};
RowView rows_of(const Tensor& t) {
  if (t.rank() == 1) return {1, t.shape[0]};
  if (t.rank() == 2) return {t.shape[0], t.shape[1]};
  throw std::invalid_argument("tape: softmax needs rank 1 or 2, got scalar");
}

}  // namespace

Var Tape::row_softmax(Var x) {
  const Tensor& tx = node_at(x).value;
  const auto [r, c] = rows_of(tx);
  if (c == 0) throw std::invalid_argument("tape: softmax over empty row");
  Tensor out = Tensor::zeros(tx.shape);
  for (std::int64_t i = 0; i < r; ++i) {
    double mx = tx.at(i * c);
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, tx.at(i * c + j));
    double z = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      const double e = std::exp(tx.at(i * c + j) - mx);
      out.at(i * c + j) = e;
      z += e;
    }
    for (std::int64_t j = 0; j < c; ++j) out.at(i * c + j) /= z;
  }
  Node n;
  n.op = Op::kRowSoftmax;
  n.a = x.id;
  n.value = std::move(out);
  n.requires_grad = node_at(x).requires_grad;
  return push(std::move(n));
}

Var Tape::row_log_softmax(Var x) {
  const Tensor& tx = node_at(x).value;
  const auto [r, c] = rows_of(tx);
  if (c == 0) throw std::invalid_argument("tape: log-softmax over empty row");
  Tensor out = Tensor::zeros(tx.shape);
  for (std::int64_t i = 0; i < r; ++i) {
    double mx = tx.at(i * c);
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, tx.at(i * c + j));
    double z = 0.0;
    for (std::int64_t j = 0; j < c; ++j) z += std::exp(tx.at(i * c + j) - mx);
    const double lz = std::log(z);
    for (std::int64_t j = 0; j < c; ++j) out.at(i * c + j) = tx.at(i * c + j) - mx - lz;
  }
  Node n;
  n.op = Op::kRowLogSoftmax;
  n.a = x.id;
  n.value = std::move(out);
  n.requires_grad = node_at(x).requires_grad;
  return push(std::move(n));
}

Var Tape::gather_rows(Var x, const std::vector<std::int64_t>& idx) {
  const Tensor& tx = node_at(x).value;
  if (tx.rank() == 0) throw std::invalid_argument("tape: gather_rows on scalar");
  const std::int64_t r = tx.shape[0];
  const std::int64_t c = tx.rank() == 2 ? tx.shape[1] : 1;
  const auto k = static_cast<std::int64_t>(idx.size());
  Tensor out = tx.rank() == 2 ? Tensor::zeros({k, c}) : Tensor::zeros({k});
  for (std::int64_t i = 0; i < k; ++i) {
    const std::int64_t src = idx[static_cast<std::size_t>(i)];
    if (src == -1) continue;  // padding: zero row, no gradient
    if (src < 0 || src >= r)
      throw std::out_of_range("tape: gather_rows index " + std::to_string(src) + " out of range");
    for (std::int64_t j = 0; j < c; ++j) out.at(i * c + j) = tx.at(src * c + j);
  }
  Node n;
  n.op = Op::kGatherRows;
  n.a = x.id;
  n.idx = idx;
  n.value = std::move(out);
  n.requires_grad = node_at(x).requires_grad;
  return push(std::move(n));
}

Var Tape::gather_at(Var x, const std::vector<std::int64_t>& idx) {
  const Tensor& tx = node_at(x).value;
  if (tx.rank() != 2) throw std::invalid_argument("tape: gather_at needs a rank-2 operand");
  const std::int64_t r = tx.shape[0], c = tx.shape[1];
  if (static_cast<std::int64_t>(idx.size()) != r)
    throw std::invalid_argument("tape: gather_at needs one index per row");
  Tensor out = Tensor::zeros({r});
  for (std::int64_t i = 0; i < r; ++i) {
    const std::int64_t j = idx[static_cast<std::size_t>(i)];
    if (j < 0 || j >= c)
      throw std::out_of_range("tape: gather_at index " + std::to_string(j) + " out of range");
    out.at(i) = tx.at(i, j);
  }
  Node n;
  n.op = Op::kGatherAt;
  n.a = x.id;
  n.idx = idx;
  n.value = std::move(out);
  n.requires_grad = node_at(x).requires_grad;
  return push(std::move(n));
}

Var Tape::reshape(Var x, std::vector<std::int64_t> shape) {
  const Tensor& tx = node_at(x).value;
  if (numel_of(shape) != tx.numel())
    throw std::invalid_argument("tape: reshape to " + shape_string(shape) + " changes element count");
  Node n;
  n.op = Op::kReshape;
  n.a = x.id;
  n.value = Tensor(std::move(shape), tx.data);
  n.requires_grad = node_at(x).requires_grad;
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  const Tensor& tx = node_at(x).value;
  double s = 0.0;
  for (double v : tx.data) s += v;
  Node n;
  n.op = Op::kSum;
  n.a = x.id;
  n.value = Tensor::scalar(s);
  check_finite(n.value, "sum");
  n.requires_grad = node_at(x).requires_grad;
  return push(std::move(n));
}

Var Tape::mean(Var x) {
  const Tensor& tx = node_at(x).value;
  if (tx.numel() == 0) throw std::invalid_argument("tape: mean of empty tensor");
  double s = 0.0;
  for (double v : tx.data) s += v;
  Node n;
  n.op = Op::kMean;
  n.a = x.id;
  n.value = Tensor::scalar(s / static_cast<double>(tx.numel()));
  n.requires_grad = node_at(x).requires_grad;
  return push(std::move(n));
}

Var Tape::clip(Var x, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("tape: clip bounds out of order");
  const Tensor& tx = node_at(x).value;
  Tensor out = tx;
  for (double& v : out.data) v = v < lo ? lo : (v > hi ? hi : v);
  Node n;
  n.op = Op::kClip;
  n.a = x.id;
  n.lo = lo;
  n.hi = hi;
  n.value = std::move(out);
  n.requires_grad = node_at(x).requires_grad;
  return push(std::move(n));
}

Var Tape::stop_gradient(Var x) {
  Node n;
  n.op = Op::kStopGrad;
  n.a = x.id;
  n.value = node_at(x).value;
  n.requires_grad = false;
  return push(std::move(n));
}

Tensor& Tape::grad_buf(int id) {
  auto& g = grads_[static_cast<std::size_t>(id)];
  if (g.data.empty()) g = Tensor::zeros(nodes_[static_cast<std::size_t>(id)].value.shape);
  return g;
}

void Tape::backward(Var loss) {
  const Node& top = node_at(loss);
  if (!top.value.is_scalar())
    throw std::invalid_argument("tape: backward requires a scalar loss, got shape " +
                                shape_string(top.value.shape));
  if (has_run_)
    throw std::logic_error("tape: backward already ran; reset() before reusing the tape");
  has_run_ = true;

  grads_.assign(nodes_.size(), Tensor{});
  grad_buf(loss.id).at(0) = 1.0;

  for (int i = loss.id; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad) continue;
    const Tensor& g = grads_[static_cast<std::size_t>(i)];
    if (g.data.empty()) continue;  // no gradient flowed to this node

    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
      case Op::kStopGrad:
        break;

      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kDiv:
      case Op::kMin:
      case Op::kMax: {
        const Node& na = nodes_[static_cast<std::size_t>(n.a)];
        const Node& nb = nodes_[static_cast<std::size_t>(n.b)];
        const std::int64_t cnt = n.value.numel();
        const std::int64_t c = n.value.rank() == 2 ? n.value.shape[1] : cnt;
        auto ia = [&](std::int64_t k) {
          return n.bc == Broadcast::kAScalar ? 0 : (n.bc == Broadcast::kARow ? k % c : k);
        };
        auto ib = [&](std::int64_t k) {
          return n.bc == Broadcast::kBScalar ? 0 : (n.bc == Broadcast::kBRow ? k % c : k);
        };
        Tensor* ga = na.requires_grad ? &grad_buf(n.a) : nullptr;
        Tensor* gb = nb.requires_grad ? &grad_buf(n.b) : nullptr;
        for (std::int64_t k = 0; k < cnt; ++k) {
          const double gk = g.at(k);
          if (gk == 0.0) continue;
          const double x = na.value.at(ia(k));
          const double y = nb.value.at(ib(k));
          switch (n.op) {
            case Op::kAdd:
              if (ga) ga->at(ia(k)) += gk;
              if (gb) gb->at(ib(k)) += gk;
              break;
            case Op::kSub:
              if (ga) ga->at(ia(k)) += gk;
              if (gb) gb->at(ib(k)) -= gk;
              break;
            case Op::kMul:
              if (ga) ga->at(ia(k)) += gk * y;
              if (gb) gb->at(ib(k)) += gk * x;
              break;
            case Op::kDiv:
              if (ga) ga->at(ia(k)) += gk / y;
              if (gb) gb->at(ib(k)) -= gk * x / (y * y);
              break;
            case Op::kMin:
              if (x <= y) {  // ties route to the first operand
                if (ga) ga->at(ia(k)) += gk;
              } else if (gb) {
                gb->at(ib(k)) += gk;
              }
              break;
            case Op::kMax:
              if (x >= y) {
                if (ga) ga->at(ia(k)) += gk;
              } else if (gb) {
                gb->at(ib(k)) += gk;
              }
              break;
            default: break;
          }
        }
        break;
      }

      case Op::kExp: {
        Tensor& ga = grad_buf(n.a);
        for (std::int64_t k = 0; k < n.value.numel(); ++k) ga.at(k) += g.at(k) * n.value.at(k);
        break;
      }

      case Op::kLog: {
        const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
        Tensor& ga = grad_buf(n.a);
        for (std::int64_t k = 0; k < x.numel(); ++k) ga.at(k) += g.at(k) / x.at(k);
        break;
      }

      case Op::kMatmul: {
        const Node& na = nodes_[static_cast<std::size_t>(n.a)];
        const Node& nb = nodes_[static_cast<std::size_t>(n.b)];
        const std::int64_t m = na.value.shape[0], kk = na.value.shape[1], nn = nb.value.shape[1];
        if (na.requires_grad) {
          Tensor& ga = grad_buf(n.a);  // dA = g . B^T
          for (std::int64_t i2 = 0; i2 < m; ++i2)
            for (std::int64_t j = 0; j < nn; ++j) {
              const double gij = g.at(i2, j);
              if (gij == 0.0) continue;
              for (std::int64_t p = 0; p < kk; ++p) ga.at(i2, p) += gij * nb.value.at(p, j);
            }
        }
        if (nb.requires_grad) {
          Tensor& gb = grad_buf(n.b);  // dB = A^T . g
          for (std::int64_t i2 = 0; i2 < m; ++i2)
            for (std::int64_t p = 0; p < kk; ++p) {
              const double aip = na.value.at(i2, p);
              if (aip == 0.0) continue;
              for (std::int64_t j = 0; j < nn; ++j) gb.at(p, j) += aip * g.at(i2, j);
            }
        }
        break;
      }

      case Op::kRowSoftmax: {
        // dx = (g - <g, y>) * y per row
        const auto [r, c] = rows_of(n.value);
        Tensor& ga = grad_buf(n.a);
        for (std::int64_t i2 = 0; i2 < r; ++i2) {
          double dot = 0.0;
          for (std::int64_t j = 0; j < c; ++j) dot += g.at(i2 * c + j) * n.value.at(i2 * c + j);
          for (std::int64_t j = 0; j < c; ++j)
            ga.at(i2 * c + j) += (g.at(i2 * c + j) - dot) * n.value.at(i2 * c + j);
        }
        break;
      }

      case Op::kRowLogSoftmax: {
        // dx_j = g_j - softmax_j * sum(g); softmax = exp(value)
        const auto [r, c] = rows_of(n.value);
        Tensor& ga = grad_buf(n.a);
        for (std::int64_t i2 = 0; i2 < r; ++i2) {
          double gs = 0.0;
          for (std::int64_t j = 0; j < c; ++j) gs += g.at(i2 * c + j);
          for (std::int64_t j = 0; j < c; ++j)
            ga.at(i2 * c + j) += g.at(i2 * c + j) - std::exp(n.value.at(i2 * c + j)) * gs;
        }
        break;
      }

      case Op::kGatherRows: {
        const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
        const std::int64_t c = x.rank() == 2 ? x.shape[1] : 1;
        Tensor& ga = grad_buf(n.a);
        for (std::size_t i2 = 0; i2 < n.idx.size(); ++i2) {
          const std::int64_t src = n.idx[i2];
          if (src == -1) continue;
          for (std::int64_t j = 0; j < c; ++j)
            ga.at(src * c + j) += g.at(static_cast<std::int64_t>(i2) * c + j);
        }
        break;
      }

      case Op::kGatherAt: {
        const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
        Tensor& ga = grad_buf(n.a);
        for (std::int64_t i2 = 0; i2 < x.shape[0]; ++i2)
          ga.at(i2, n.idx[static_cast<std::size_t>(i2)]) += g.at(i2);
        break;
      }

      case Op::kReshape: {
        Tensor& ga = grad_buf(n.a);
        for (std::int64_t k = 0; k < n.value.numel(); ++k) ga.at(k) += g.at(k);
        break;
      }

      case Op::kSum: {
        Tensor& ga = grad_buf(n.a);
        const double g0 = g.at(0);
        for (double& v : ga.data) v += g0;
        break;
      }

      case Op::kMean: {
        Tensor& ga = grad_buf(n.a);
        const double g0 = g.at(0) / static_cast<double>(ga.numel());
        for (double& v : ga.data) v += g0;
        break;
      }

      case Op::kClip: {
        const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
        Tensor& ga = grad_buf(n.a);
        for (std::int64_t k = 0; k < x.numel(); ++k)
          if (x.at(k) >= n.lo && x.at(k) <= n.hi) ga.at(k) += g.at(k);
        break;
      }
    }
  }
}

const Tensor& Tape::value(Var v) const { return node_at(v).value; }

Tensor Tape::grad(Var v) const {
  const Node& n = node_at(v);
  if (!has_run_) throw std::logic_error("tape: grad read before backward");
  const Tensor& g = grads_[static_cast<std::size_t>(v.id)];
  if (g.data.empty()) return Tensor::zeros(n.value.shape);
  return g;
}

void Tape::reset() {
  nodes_.clear();
  grads_.clear();
  has_run_ = false;
}

#define TT_BINOP(op, method)                                            \
  Var operator op(Var a, Var b) { return a.tape->method(a, b); }        \
  Var operator op(Var a, double b) { return a.tape->method(a, a.tape->constant(b)); } \
  Var operator op(double a, Var b) { return b.tape->method(b.tape->constant(a), b); }

TT_BINOP(+, add)
TT_BINOP(-, sub)
TT_BINOP(*, mul)
TT_BINOP(/, div)
#undef TT_BINOP

Var operator-(Var a) { return a.tape->sub(a.tape->constant(0.0), a); }

Var exp(Var x) { return x.tape->exp(x); }
Var log(Var x) { return x.tape->log(x); }
Var matmul(Var a, Var b) { return a.tape->matmul(a, b); }
Var row_softmax(Var x) { return x.tape->row_softmax(x); }
Var row_log_softmax(Var x) { return x.tape->row_log_softmax(x); }
Var gather_rows(Var x, const std::vector<std::int64_t>& idx) { return x.tape->gather_rows(x, idx); }
Var gather_at(Var x, const std::vector<std::int64_t>& idx) { return x.tape->gather_at(x, idx); }
Var reshape(Var x, std::vector<std::int64_t> shape) { return x.tape->reshape(x, std::move(shape)); }
Var sum(Var x) { return x.tape->sum(x); }
Var mean(Var x) { return x.tape->mean(x); }
Var minimum(Var a, Var b) { return a.tape->minimum(a, b); }
Var maximum(Var a, Var b) { return a.tape->maximum(a, b); }
Var clip(Var x, double lo, double hi) { return x.tape->clip(x, lo, hi); }
Var stop_gradient(Var x) { return x.tape->stop_gradient(x); }

}  // namespace thinktuning
