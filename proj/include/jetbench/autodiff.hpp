// SPDX-License-Identifier: Apache-2.0
//
// Minimal tape-based reverse-mode automatic differentiation over dense f64
// tensors. Operations append an entry to a Tape as they execute; backward()
// replays the tape in reverse, which is a valid topological order because
// every entry's inputs existed before it was recorded.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jetbench::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;

  std::size_t size() const { return value.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }
  bool has_grad() const { return !grad.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
  void zero_grad() { grad.clear(); }
  double item() const;
};

using Var = std::shared_ptr<TensorNode>;

Var tensor(Shape shape, std::vector<double> values, bool requires_grad = false);
Var zeros(Shape shape, bool requires_grad = false);
Var full(Shape shape, double v, bool requires_grad = false);
Var scalar(double v, bool requires_grad = false);

class Tape {
 public:
  using Rule = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Records `rule` for `output` if gradients are enabled and any input needs one.
  // Returns true when the entry was recorded (output->requires_grad is set).
  bool record(std::initializer_list<Var> inputs, const Var& output, Rule rule);

  // Seeds d(loss)/d(loss) = 1 and replays recorded rules in reverse.
  void backward(const Var& loss);

  void set_enabled(bool on) { enabled_ = on; }
  bool enabled() const { return enabled_; }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::vector<Var> inputs;
    Var output;
    Rule rule;
  };
  std::vector<Entry> entries_;
  bool enabled_ = true;
};

// ---- operations -----------------------------------------------------------
// Every op takes the tape first. Constant (non-differentiable) operands are
// passed as spans.

Var matmul(Tape& t, const Var& a, const Var& b);
// x[..., in] * w[in, out] (+ b[out]); bias may be null.
Var linear(Tape& t, const Var& x, const Var& w, const Var& b);
// a[G, m, k] * b[G, k, n]; with transpose_b, b is [G, n, k].
Var bmm(Tape& t, const Var& a, const Var& b, bool transpose_b = false);

Var add(Tape& t, const Var& a, const Var& b);
Var sub(Tape& t, const Var& a, const Var& b);
Var mul(Tape& t, const Var& a, const Var& b);
Var scale(Tape& t, const Var& a, double c);
Var add_scalar(Tape& t, const Var& a, double c);
Var add_const(Tape& t, const Var& a, std::span<const double> c);
Var mul_const(Tape& t, const Var& a, std::span<const double> c);

Var gelu(Tape& t, const Var& x);
Var relu(Tape& t, const Var& x);
Var exp(Tape& t, const Var& x);
Var square(Tape& t, const Var& x);

Var softmax(Tape& t, const Var& x, std::size_t axis);
Var log_softmax(Tape& t, const Var& x);  // over the last axis
Var layer_norm(Tape& t, const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
// gelu(x W) * (x V); W and V are [in, inner].
Var geglu(Tape& t, const Var& x, const Var& w, const Var& v);
Var l2_normalize_rows(Tape& t, const Var& x);

Var reshape(Tape& t, const Var& x, Shape shape);
Var permute(Tape& t, const Var& x, const std::vector<std::size_t>& perm);
Var concat(Tape& t, const Var& a, const Var& b, std::size_t axis);
// Repeats a tensor with leading dimension 1 `count` times along that axis.
Var repeat_leading(Tape& t, const Var& x, std::size_t count);
// Rows of a 2-D view [R, D] picked by index.
Var gather_rows(Tape& t, const Var& x, std::span<const std::size_t> rows);
// tokens[B, N, D]: rows with flag != 0 are replaced by `replacement[D]`.
Var replace_rows(Tape& t, const Var& tokens, std::span<const double> flags,
                 const Var& replacement);

// Columns [begin, end) of the last axis.
Var slice_last(Tape& t, const Var& x, std::size_t begin, std::size_t end);
// out[b, n, :] = a[b, :] + c[n, :] for a [B, D] and c [N, D].
Var outer_add(Tape& t, const Var& a, const Var& c);

Var sum(Tape& t, const Var& x);
Var mean(Tape& t, const Var& x);
// sum_i w_i x_i over entries with w_i != 0 (zero-weight entries are never read).
Var weighted_sum(Tape& t, const Var& x, std::span<const double> w);

// ---- stochastic regularizers ----------------------------------------------

// Keep mask scaled by 1/(1-rate) in training; all ones at inference.
std::vector<double> dropout_mask(std::size_t n, double rate, std::mt19937_64& rng, bool training);
Var dropout(Tape& t, const Var& x, double rate, std::mt19937_64& rng, bool training);
// Per-sample stochastic depth on the leading axis, then multiplied by `scale`.
Var drop_path(Tape& t, const Var& branch, double rate, double scale, std::mt19937_64& rng,
              bool training);

}  // namespace jetbench::ad
