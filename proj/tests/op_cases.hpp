// SPDX-License-Identifier: Apache-2.0
//
// One random instance generator per differentiable op. Each instance owns its
// leaves and a scalar loss built from the op output and fixed probe weights.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fd_oracle.hpp"

namespace jetbench::testing {

struct OpInstance {
  std::vector<ad::Var> leaves;
  LossFn loss;
};

struct OpCase {
  std::string name;
  std::function<OpInstance(std::mt19937_64&)> make;
};

namespace detail {

inline std::size_t dim(std::mt19937_64& rng, std::size_t lo = 1, std::size_t hi = 4) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Wraps an op so the loss is sum(w * op(leaves)).
template <class F>
OpInstance probed(std::vector<ad::Var> leaves, F op, std::uint64_t seed) {
  auto w = std::make_shared<std::vector<double>>();
  LossFn loss = [=](ad::Tape& t) {
    ad::Var out = op(t);
    if (w->size() != out->size()) *w = probe_weights(out->size(), seed);
    return ad::weighted_sum(t, out, *w);
  };
  return {std::move(leaves), loss};
}

// Values pushed away from zero so piecewise ops are differentiable at every probe.
inline ad::Var off_zero_leaf(ad::Shape shape, std::mt19937_64& rng) {
  auto v = random_leaf(std::move(shape), rng);
  for (auto& x : v->value) x = x < 0 ? x - 0.05 : x + 0.05;
  return v;
}

}  // namespace detail

inline std::vector<OpCase> op_cases() {
  using detail::dim;
  using detail::probed;
  using ad::Tape;
  using ad::Var;
  std::vector<OpCase> c;

  c.push_back({"matmul", [](std::mt19937_64& r) {
                 const auto m = dim(r), k = dim(r), n = dim(r);
                 auto a = random_leaf({m, k}, r), b = random_leaf({k, n}, r);
                 return probed({a, b}, [=](Tape& t) { return ad::matmul(t, a, b); }, r());
               }});
  c.push_back({"linear", [](std::mt19937_64& r) {
                 const auto b0 = dim(r), n = dim(r), in = dim(r), out = dim(r);
                 auto x = random_leaf({b0, n, in}, r), w = random_leaf({in, out}, r),
                      b = random_leaf({out}, r);
                 return probed({x, w, b}, [=](Tape& t) { return ad::linear(t, x, w, b); }, r());
               }});
  c.push_back({"linear_nobias", [](std::mt19937_64& r) {
                 const auto n = dim(r), in = dim(r), out = dim(r);
                 auto x = random_leaf({n, in}, r), w = random_leaf({in, out}, r);
                 return probed({x, w}, [=](Tape& t) { return ad::linear(t, x, w, nullptr); }, r());
               }});
  c.push_back({"bmm", [](std::mt19937_64& r) {
                 const auto g = dim(r), m = dim(r), k = dim(r), n = dim(r);
                 auto a = random_leaf({g, m, k}, r), b = random_leaf({g, k, n}, r);
                 return probed({a, b}, [=](Tape& t) { return ad::bmm(t, a, b); }, r());
               }});
  c.push_back({"bmm_transposed", [](std::mt19937_64& r) {
                 const auto g = dim(r), m = dim(r), k = dim(r), n = dim(r);
                 auto a = random_leaf({g, m, k}, r), b = random_leaf({g, n, k}, r);
                 return probed({a, b}, [=](Tape& t) { return ad::bmm(t, a, b, true); }, r());
               }});
  c.push_back({"add", [](std::mt19937_64& r) {
                 const auto m = dim(r), n = dim(r);
                 auto a = random_leaf({m, n}, r), b = random_leaf({m, n}, r);
                 return probed({a, b}, [=](Tape& t) { return ad::add(t, a, b); }, r());
               }});
  c.push_back({"sub", [](std::mt19937_64& r) {
                 const auto m = dim(r), n = dim(r);
                 auto a = random_leaf({m, n}, r), b = random_leaf({m, n}, r);
                 return probed({a, b}, [=](Tape& t) { return ad::sub(t, a, b); }, r());
               }});
  c.push_back({"mul", [](std::mt19937_64& r) {
                 const auto m = dim(r), n = dim(r);
                 auto a = random_leaf({m, n}, r), b = random_leaf({m, n}, r);
                 return probed({a, b}, [=](Tape& t) { return ad::mul(t, a, b); }, r());
               }});
  c.push_back({"mul_self", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r)}, r);
                 return probed({a}, [=](Tape& t) { return ad::mul(t, a, a); }, r());
               }});
  c.push_back({"scale", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r)}, r);
                 const double k = std::uniform_real_distribution<double>(-3, 3)(r);
                 return probed({a}, [=](Tape& t) { return ad::scale(t, a, k); }, r());
               }});
  c.push_back({"add_scalar", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r)}, r);
                 return probed({a}, [=](Tape& t) { return ad::add_scalar(t, a, 0.7); }, r());
               }});
  c.push_back({"add_const", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r)}, r);
                 auto k = probe_weights(a->size(), r());
                 return probed({a}, [=](Tape& t) { return ad::add_const(t, a, k); }, r());
               }});
  c.push_back({"mul_const", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r)}, r);
                 auto k = probe_weights(a->size(), r());
                 return probed({a}, [=](Tape& t) { return ad::mul_const(t, a, k); }, r());
               }});
  c.push_back({"gelu", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r, 1, 6)}, r, -3.0, 3.0);
                 return probed({a}, [=](Tape& t) { return ad::gelu(t, a); }, r());
               }});
  c.push_back({"relu", [](std::mt19937_64& r) {
                 auto a = detail::off_zero_leaf({dim(r), dim(r, 1, 6)}, r);
                 return probed({a}, [=](Tape& t) { return ad::relu(t, a); }, r());
               }});
  c.push_back({"exp", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r)}, r);
                 return probed({a}, [=](Tape& t) { return ad::exp(t, a); }, r());
               }});
  c.push_back({"square", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r)}, r);
                 return probed({a}, [=](Tape& t) { return ad::square(t, a); }, r());
               }});
  c.push_back({"softmax_last", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r), dim(r, 2, 5)}, r, -2.0, 2.0);
                 return probed({a}, [=](Tape& t) { return ad::softmax(t, a, 2); }, r());
               }});
  c.push_back({"softmax_inner", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r, 2, 5), dim(r)}, r, -2.0, 2.0);
                 return probed({a}, [=](Tape& t) { return ad::softmax(t, a, 1); }, r());
               }});
  c.push_back({"log_softmax", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r, 2, 7)}, r, -2.0, 2.0);
                 return probed({a}, [=](Tape& t) { return ad::log_softmax(t, a); }, r());
               }});
  c.push_back({"layer_norm", [](std::mt19937_64& r) {
                 const auto d = dim(r, 2, 8);
                 auto x = random_leaf({dim(r), d}, r), g = random_leaf({d}, r, 0.5, 1.5),
                      b = random_leaf({d}, r);
                 return probed({x, g, b}, [=](Tape& t) { return ad::layer_norm(t, x, g, b); }, r());
               }});
  c.push_back({"geglu", [](std::mt19937_64& r) {
                 const auto n = dim(r), in = dim(r), inner = dim(r);
                 auto x = random_leaf({n, in}, r), w = random_leaf({in, inner}, r),
                      v = random_leaf({in, inner}, r);
                 return probed({x, w, v}, [=](Tape& t) { return ad::geglu(t, x, w, v); }, r());
               }});
  c.push_back({"l2_normalize_rows", [](std::mt19937_64& r) {
                 auto a = detail::off_zero_leaf({dim(r), dim(r, 2, 5)}, r);
                 return probed({a}, [=](Tape& t) { return ad::l2_normalize_rows(t, a); }, r());
               }});
  c.push_back({"reshape", [](std::mt19937_64& r) {
                 const auto m = dim(r), n = dim(r);
                 auto a = random_leaf({m, n}, r);
                 return probed({a}, [=](Tape& t) {
                   return ad::mul(t, ad::reshape(t, a, {n, m}), ad::reshape(t, a, {n, m}));
                 }, r());
               }});
  c.push_back({"permute", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r), dim(r), dim(r)}, r);
                 std::vector<std::size_t> p{0, 1, 2, 3};
                 std::shuffle(p.begin(), p.end(), r);
                 return probed({a}, [=](Tape& t) {
                   auto y = ad::permute(t, a, p);
                   return ad::mul(t, y, y);
                 }, r());
               }});
  c.push_back({"concat", [](std::mt19937_64& r) {
                 const std::size_t axis = dim(r, 0, 2);
                 ad::Shape sa{dim(r), dim(r), dim(r)}, sb = sa;
                 sb[axis] = dim(r);
                 auto a = random_leaf(sa, r), b = random_leaf(sb, r);
                 return probed({a, b}, [=](Tape& t) { return ad::concat(t, a, b, axis); }, r());
               }});
  c.push_back({"repeat_leading", [](std::mt19937_64& r) {
                 auto a = random_leaf({1, dim(r), dim(r)}, r);
                 const auto k = dim(r);
                 return probed({a}, [=](Tape& t) { return ad::repeat_leading(t, a, k); }, r());
               }});
  c.push_back({"gather_rows", [](std::mt19937_64& r) {
                 const auto rows = dim(r, 2, 6);
                 auto a = random_leaf({rows, dim(r)}, r);
                 std::vector<std::size_t> pick;
                 for (std::size_t i = 0; i < dim(r, 1, 8); ++i) pick.push_back(dim(r, 0, rows - 1));
                 return probed({a}, [=](Tape& t) { return ad::gather_rows(t, a, pick); }, r());
               }});
  c.push_back({"replace_rows", [](std::mt19937_64& r) {
                 const auto b0 = dim(r), n = dim(r), d = dim(r);
                 auto x = random_leaf({b0, n, d}, r), rep = random_leaf({d}, r);
                 std::vector<double> flags(b0 * n);
                 for (auto& f : flags) f = std::bernoulli_distribution(0.4)(r) ? 1.0 : 0.0;
                 return probed({x, rep}, [=](Tape& t) { return ad::replace_rows(t, x, flags, rep); },
                               r());
               }});
  c.push_back({"slice_last", [](std::mt19937_64& r) {
                 const auto d = dim(r, 2, 7);
                 const auto b = dim(r, 0, d - 1), e = dim(r, b + 1, d);
                 auto a = random_leaf({dim(r), d}, r);
                 return probed({a}, [=](Tape& t) { return ad::slice_last(t, a, b, e); }, r());
               }});
  c.push_back({"outer_add", [](std::mt19937_64& r) {
                 const auto d = dim(r);
                 auto a = random_leaf({dim(r), d}, r), b = random_leaf({dim(r), d}, r);
                 return probed({a, b}, [=](Tape& t) { return ad::outer_add(t, a, b); }, r());
               }});
  c.push_back({"sum", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r)}, r);
                 return probed({a}, [=](Tape& t) { return ad::sum(t, ad::square(t, a)); }, r());
               }});
  c.push_back({"mean", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r)}, r);
                 return probed({a}, [=](Tape& t) { return ad::mean(t, ad::square(t, a)); }, r());
               }});
  c.push_back({"weighted_sum", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r)}, r);
                 auto w = probe_weights(a->size(), r());
                 w[0] = 0.0;
                 return probed({a}, [=](Tape& t) {
                   return ad::square(t, ad::weighted_sum(t, a, w));
                 }, r());
               }});
  c.push_back({"dropout", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r), dim(r, 2, 6)}, r);
                 const auto seed = r();
                 return probed({a}, [=](Tape& t) {
                   std::mt19937_64 g(seed);
                   return ad::dropout(t, a, 0.3, g, true);
                 }, r());
               }});
  c.push_back({"drop_path", [](std::mt19937_64& r) {
                 auto a = random_leaf({dim(r, 2, 6), dim(r), dim(r)}, r);
                 const auto seed = r();
                 return probed({a}, [=](Tape& t) {
                   std::mt19937_64 g(seed);
                   return ad::drop_path(t, a, 0.3, 0.9, g, true);
                 }, r());
               }});
  return c;
}

// Worst relative error of one case over `instances` random draws.
inline double op_case_error(const OpCase& op, std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    auto inst = op.make(rng);
    for (const auto& leaf : inst.leaves) worst = std::max(worst, fd_max_error(inst.loss, leaf));
  }
  return worst;
}

}  // namespace jetbench::testing
