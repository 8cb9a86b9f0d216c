// SPDX-License-Identifier: Apache-2.0

#include "jetbench/autodiff.hpp"

#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace jetbench::ad {
namespace {

// Activations are multi-megabyte and short-lived. With glibc defaults each one
// is a fresh mmap that is page-faulted in and unmapped again; keeping them on
// the heap lets later steps reuse the pages.
[[maybe_unused]] const bool kHeapTuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
  return true;
}();

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

double TensorNode::item() const {
  if (value.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape));
  return value[0];
}

Var tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size())
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

Var zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Var full(Shape shape, double v, bool requires_grad) {
  const std::size_t n = numel(shape);
  return tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Var scalar(double v, bool requires_grad) { return tensor({}, {v}, requires_grad); }

bool Tape::record(std::initializer_list<Var> inputs, const Var& output, Rule rule) {
  if (!enabled_) return false;
  bool any = false;
  for (const auto& in : inputs) any = any || (in && in->requires_grad);
  if (!any) return false;
  output->requires_grad = true;
  entries_.push_back(Entry{std::vector<Var>(inputs), output, std::move(rule)});
  return true;
}

void Tape::backward(const Var& loss) {
  if (loss->size() != 1)
    throw DimensionError("backward() needs a scalar loss, got shape " + shape_str(loss->shape));
  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->has_grad()) it->rule();
  }
}

}  // namespace jetbench::ad
