#pragma once

#include <cstdint>
#include <vector>

#include "thinktuning/tensor.hpp"

namespace thinktuning {

class Tape;

// Lightweight handle to a node on a tape. Copying a Var never copies data.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  Tensor grad() const;
};

// Reverse-mode autodiff over a write-once operation tape.
//
// Usage: create leaves (differentiable) and constants (not differentiable),
// compose them with the ops below, call backward() exactly once on a scalar,
// then read grad() per leaf. Nodes are appended in topological order by
// construction, so the graph is acyclic and the backward sweep visits each
// node exactly once, in reverse creation order.
//
// Broadcasting for binary elementwise ops (add, sub, mul, div, minimum,
// maximum) accepts exactly three shape combinations:
//   * identical shapes,
//   * one operand a scalar (rank 0), applied against every element,
//   * a matrix [r,c] with a vector [c], the vector repeated across rows.
// Anything else (including column broadcast) is a shape error. Gradients of
// a broadcast operand are sum-reduced over the repeated positions.
//
// Gradient accumulation is per-backward only: a second backward() without
// reset() throws, as does reading grad() before backward(). There is no
// silent cross-step accumulation; training code rebuilds a fresh graph per
// update.
class Tape {
 public:
  // Leaves and constants. Constants never receive gradients.
  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var constant(double value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);

  Var exp(Var x);
  Var log(Var x);

  // [m,k] x [k,n] -> [m,n]. Both operands must be rank 2.
  Var matmul(Var a, Var b);

  // Row-wise softmax / log-softmax with max subtraction, rank 1 or 2. The
  // log variant is the numerically safe way to get token log-probabilities;
  // exp() of its output recovers the softmax exactly.
  Var row_softmax(Var x);
  Var row_log_softmax(Var x);

  // Select rows of a rank-2 tensor (or elements of a rank-1 tensor). An
  // index of -1 yields a zero row and routes no gradient; this is how
  // positions left of a sequence start are padded.
  Var gather_rows(Var x, const std::vector<std::int64_t>& idx);

  // Per-row element pick: x is [r,c], idx has r entries in [0,c), result [r].
  Var gather_at(Var x, const std::vector<std::int64_t>& idx);

  Var reshape(Var x, std::vector<std::int64_t> shape);

  Var sum(Var x);
  Var mean(Var x);

  // Elementwise extrema; ties route the gradient to the first operand.
  Var minimum(Var a, Var b);
  Var maximum(Var a, Var b);

  // Clamp to [lo, hi]; gradient passes where lo <= x <= hi (boundaries
  // included), and is exactly zero outside.
  Var clip(Var x, double lo, double hi);

  // Identity forward, zero backward. The AAS denominator depends on it.
  Var stop_gradient(Var x);

  void backward(Var loss);

  const Tensor& value(Var v) const;
  Tensor grad(Var v) const;

  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf, kConstant, kAdd, kSub, kMul, kDiv, kExp, kLog, kMatmul,
    kRowSoftmax, kRowLogSoftmax, kGatherRows, kGatherAt, kReshape,
    kSum, kMean, kMin, kMax, kClip, kStopGrad,
  };
  enum class Broadcast : std::uint8_t { kSame, kAScalar, kBScalar, kARow, kBRow };

  struct Node {
    Op op;
    int a = -1, b = -1;
    Tensor value;
    std::vector<std::int64_t> idx;
    double lo = 0.0, hi = 0.0;
    Broadcast bc = Broadcast::kSame;
    bool requires_grad = false;
  };

  Var push(Node node);
  Var binary_elementwise(Op op, Var a, Var b);
  const Node& node_at(Var v) const;
  void check_same_tape(Var a, Var b) const;
  Tensor& grad_buf(int id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool has_run_ = false;
};

// Operator sugar; double operands become scalar constants on the same tape.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator+(Var a, double b);
Var operator-(Var a, double b);
Var operator*(Var a, double b);
Var operator/(Var a, double b);
Var operator+(double a, Var b);
Var operator-(double a, Var b);
Var operator*(double a, Var b);
Var operator/(double a, Var b);
Var operator-(Var a);

Var exp(Var x);
Var log(Var x);
Var matmul(Var a, Var b);
Var row_softmax(Var x);
Var row_log_softmax(Var x);
Var gather_rows(Var x, const std::vector<std::int64_t>& idx);
Var gather_at(Var x, const std::vector<std::int64_t>& idx);
Var reshape(Var x, std::vector<std::int64_t> shape);
Var sum(Var x);
Var mean(Var x);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var clip(Var x, double lo, double hi);
Var stop_gradient(Var x);

}  // namespace thinktuning
