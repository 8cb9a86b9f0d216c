// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>

#include "jetbench/autodiff.hpp"
#include "jetbench/kernels.hpp"

namespace jetbench::ad {
namespace {

Var like(const Shape& shape) {
  auto node = std::make_shared<TensorNode>();
  node->shape = shape;
  node->value.assign(numel(shape), 0.0);
  return node;
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a->shape != b->shape)
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a->shape) + " and " +
                         shape_str(b->shape) + " differ");
}

// Adds src into dst->grad if dst participates in differentiation.
void accumulate(TensorNode* dst, std::span<const double> src) {
  if (!dst->requires_grad) return;
  dst->ensure_grad();
  for (std::size_t i = 0; i < src.size(); ++i) dst->grad[i] += src[i];
}

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double big_phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

Var matmul(Tape& t, const Var& a, const Var& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->dim(1) != b->dim(0))
    throw DimensionError("matmul: cannot multiply " + shape_str(a->shape) + " by " +
                         shape_str(b->shape));
  const std::size_t m = a->dim(0), k = a->dim(1), n = b->dim(1);
  Var out = like({m, n});
  kernels::gemm_nn(m, k, n, a->value, b->value, out->value, false);
  TensorNode *pa = a.get(), *pb = b.get(), *po = out.get();
  t.record({a, b}, out, [=] {
    if (pa->requires_grad) {
      pa->ensure_grad();
      kernels::gemm_nt(m, n, k, po->grad, pb->value, pa->grad, true);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      kernels::gemm_tn(k, m, n, pa->value, po->grad, pb->grad, true);
    }
  });
  return out;
}

Var linear(Tape& t, const Var& x, const Var& w, const Var& b) {
  if (x->shape.empty() || w->shape.size() != 2 || x->shape.back() != w->dim(0))
    throw DimensionError("linear: input " + shape_str(x->shape) + " incompatible with weight " +
                         shape_str(w->shape));
  const std::size_t in = w->dim(0), outd = w->dim(1);
  if (b && (b->shape.size() != 1 || b->dim(0) != outd))
    throw DimensionError("linear: bias " + shape_str(b->shape) + " does not match weight " +
                         shape_str(w->shape));
  const std::size_t rows = x->size() / in;
  Shape shape = x->shape;
  shape.back() = outd;
  Var out = like(shape);
  if (b) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(b->value.begin(), b->value.end(), out->value.begin() + r * outd);
  }
  kernels::gemm_nn(rows, in, outd, x->value, w->value, out->value, static_cast<bool>(b));
  TensorNode *px = x.get(), *pw = w.get(), *pb = b.get(), *po = out.get();
  t.record({x, w, b}, out, [=] {
    if (px->requires_grad) {
      px->ensure_grad();
      kernels::gemm_nt(rows, outd, in, po->grad, pw->value, px->grad, true);
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      kernels::gemm_tn(in, rows, outd, px->value, po->grad, pw->grad, true);
    }
    if (pb && pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < outd; ++j) pb->grad[j] += po->grad[r * outd + j];
    }
  });
  return out;
}

Var bmm(Tape& t, const Var& a, const Var& b, bool transpose_b) {
  const auto& sa = a->shape;
  const auto& sb = b->shape;
  if (sa.size() < 3 || sb.size() != sa.size() ||
      !std::equal(sa.begin(), sa.end() - 2, sb.begin()))
    throw DimensionError("bmm: incompatible batch shapes " + shape_str(sa) + " and " +
                         shape_str(sb));
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t kb = transpose_b ? sb.back() : sb[sb.size() - 2];
  const std::size_t n = transpose_b ? sb[sb.size() - 2] : sb.back();
  if (k != kb)
    throw DimensionError("bmm: inner dimensions differ in " + shape_str(sa) + " and " +
                         shape_str(sb));
  const std::size_t g = a->size() / (m * k);
  Shape shape(sa.begin(), sa.end() - 2);
  shape.push_back(m);
  shape.push_back(n);
  Var out = like(shape);
  if (transpose_b)
    kernels::batched_gemm_nt(g, m, k, n, a->value, b->value, out->value, false);
  else
    kernels::batched_gemm_nn(g, m, k, n, a->value, b->value, out->value, false);
  TensorNode *pa = a.get(), *pb = b.get(), *po = out.get();
  t.record({a, b}, out, [=] {
    if (pa->requires_grad) {
      pa->ensure_grad();
      if (transpose_b)
        kernels::batched_gemm_nn(g, m, n, k, po->grad, pb->value, pa->grad, true);
      else
        kernels::batched_gemm_nt(g, m, n, k, po->grad, pb->value, pa->grad, true);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      if (transpose_b)
        kernels::batched_gemm_tn(g, n, m, k, po->grad, pa->value, pb->grad, true);
      else
        kernels::batched_gemm_tn(g, k, m, n, pa->value, po->grad, pb->grad, true);
    }
  });
  return out;
}

Var add(Tape& t, const Var& a, const Var& b) {
  require_same(a, b, "add");
  Var out = like(a->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] + b->value[i];
  TensorNode *pa = a.get(), *pb = b.get(), *po = out.get();
  t.record({a, b}, out, [=] {
    accumulate(pa, po->grad);
    accumulate(pb, po->grad);
  });
  return out;
}

Var sub(Tape& t, const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Var out = like(a->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] - b->value[i];
  TensorNode *pa = a.get(), *pb = b.get(), *po = out.get();
  t.record({a, b}, out, [=] {
    accumulate(pa, po->grad);
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < po->size(); ++i) pb->grad[i] -= po->grad[i];
    }
  });
  return out;
}

Var mul(Tape& t, const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Var out = like(a->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] * b->value[i];
  TensorNode *pa = a.get(), *pb = b.get(), *po = out.get();
  t.record({a, b}, out, [=] {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < po->size(); ++i) pa->grad[i] += po->grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < po->size(); ++i) pb->grad[i] += po->grad[i] * pa->value[i];
    }
  });
  return out;
}

Var scale(Tape& t, const Var& a, double c) {
  Var out = like(a->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = c * a->value[i];
  TensorNode *pa = a.get(), *po = out.get();
  t.record({a}, out, [=] {
    pa->ensure_grad();
    kernels::axpy(c, po->grad, pa->grad);
  });
  return out;
}

Var add_scalar(Tape& t, const Var& a, double c) {
  Var out = like(a->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] + c;
  TensorNode *pa = a.get(), *po = out.get();
  t.record({a}, out, [=] { accumulate(pa, po->grad); });
  return out;
}

Var add_const(Tape& t, const Var& a, std::span<const double> c) {
  if (c.size() != a->size())
    throw DimensionError("add_const: constant of size " + std::to_string(c.size()) +
                         " for tensor " + shape_str(a->shape));
  Var out = like(a->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] + c[i];
  TensorNode *pa = a.get(), *po = out.get();
  t.record({a}, out, [=] { accumulate(pa, po->grad); });
  return out;
}

Var mul_const(Tape& t, const Var& a, std::span<const double> c) {
  if (c.size() != a->size())
    throw DimensionError("mul_const: constant of size " + std::to_string(c.size()) +
                         " for tensor " + shape_str(a->shape));
  Var out = like(a->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] * c[i];
  std::vector<double> keep(c.begin(), c.end());
  TensorNode *pa = a.get(), *po = out.get();
  t.record({a}, out, [=, keep = std::move(keep)] {
    pa->ensure_grad();
    for (std::size_t i = 0; i < po->size(); ++i) pa->grad[i] += po->grad[i] * keep[i];
  });
  return out;
}

Var gelu(Tape& t, const Var& x) {
  Var out = like(x->shape);
  kernels::gelu(x->value, out->value);
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=] {
    px->ensure_grad();
    for (std::size_t i = 0; i < po->size(); ++i) {
      const double v = px->value[i];
      px->grad[i] += po->grad[i] * (big_phi(v) + v * phi(v));
    }
  });
  return out;
}

Var relu(Tape& t, const Var& x) {
  Var out = like(x->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = std::max(0.0, x->value[i]);
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=] {
    px->ensure_grad();
    for (std::size_t i = 0; i < po->size(); ++i)
      if (px->value[i] > 0.0) px->grad[i] += po->grad[i];
  });
  return out;
}

Var exp(Tape& t, const Var& x) {
  Var out = like(x->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = std::exp(x->value[i]);
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=] {
    px->ensure_grad();
    for (std::size_t i = 0; i < po->size(); ++i) px->grad[i] += po->grad[i] * po->value[i];
  });
  return out;
}

Var square(Tape& t, const Var& x) {
  Var out = like(x->shape);
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = x->value[i] * x->value[i];
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=] {
    px->ensure_grad();
    for (std::size_t i = 0; i < po->size(); ++i)
      px->grad[i] += 2.0 * po->grad[i] * px->value[i];
  });
  return out;
}

Var softmax(Tape& t, const Var& x, std::size_t axis) {
  if (axis >= x->shape.size())
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(x->shape));
  const std::size_t len = x->dim(axis);
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < x->shape.size(); ++d) inner *= x->dim(d);
  const std::size_t outer = x->size() / (len * inner);
  Var out = like(x->shape);
  if (inner == 1) {
    kernels::softmax_rows(outer, len, x->value, out->value);
  } else {
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double mx = x->value[base];
        for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, x->value[base + j * inner]);
        double s = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          const double e = std::exp(x->value[base + j * inner] - mx);
          out->value[base + j * inner] = e;
          s += e;
        }
        for (std::size_t j = 0; j < len; ++j) out->value[base + j * inner] /= s;
      }
  }
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=] {
    px->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j)
          dot += po->grad[base + j * inner] * po->value[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t i = base + j * inner;
          px->grad[i] += po->value[i] * (po->grad[i] - dot);
        }
      }
  });
  return out;
}

Var log_softmax(Tape& t, const Var& x) {
  if (x->shape.empty()) throw DimensionError("log_softmax: scalar input");
  const std::size_t len = x->shape.back();
  const std::size_t rows = x->size() / len;
  Var out = like(x->shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x->value.data() + r * len;
    const double mx = *std::max_element(xr, xr + len);
    double s = 0.0;
    for (std::size_t j = 0; j < len; ++j) s += std::exp(xr[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < len; ++j) out->value[r * len + j] = xr[j] - lse;
  }
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=] {
    px->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < len; ++j) gs += po->grad[r * len + j];
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t i = r * len + j;
        px->grad[i] += po->grad[i] - std::exp(po->value[i]) * gs;
      }
    }
  });
  return out;
}

Var layer_norm(Tape& t, const Var& x, const Var& gain, const Var& bias, double eps) {
  if (x->shape.empty()) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x->shape.back();
  if (gain->size() != d || bias->size() != d)
    throw DimensionError("layer_norm: affine parameters must have size " + std::to_string(d));
  const std::size_t rows = x->size() / d;
  Var out = like(x->shape);
  std::vector<double> xhat(x->size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x->value.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = r * d + j;
      xhat[i] = (xr[j] - mu) * inv_std[r];
      out->value[i] = xhat[i] * gain->value[j] + bias->value[j];
    }
  }
  TensorNode *px = x.get(), *pg = gain.get(), *pb = bias.get(), *po = out.get();
  t.record({x, gain, bias}, out,
           [=, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
             if (pg->requires_grad) pg->ensure_grad();
             if (pb->requires_grad) pb->ensure_grad();
             if (px->requires_grad) px->ensure_grad();
             std::vector<double> dxhat(d);
             for (std::size_t r = 0; r < rows; ++r) {
               double mean_d = 0.0, mean_dx = 0.0;
               for (std::size_t j = 0; j < d; ++j) {
                 const std::size_t i = r * d + j;
                 const double g = po->grad[i];
                 if (pg->requires_grad) pg->grad[j] += g * xhat[i];
                 if (pb->requires_grad) pb->grad[j] += g;
                 dxhat[j] = g * pg->value[j];
                 mean_d += dxhat[j];
                 mean_dx += dxhat[j] * xhat[i];
               }
               if (!px->requires_grad) continue;
               mean_d /= static_cast<double>(d);
               mean_dx /= static_cast<double>(d);
               for (std::size_t j = 0; j < d; ++j) {
                 const std::size_t i = r * d + j;
                 px->grad[i] += inv_std[r] * (dxhat[j] - mean_d - xhat[i] * mean_dx);
               }
             }
           });
  return out;
}

Var geglu(Tape& t, const Var& x, const Var& w, const Var& v) {
  if (w->shape != v->shape)
    throw DimensionError("geglu: gate " + shape_str(w->shape) + " and value " +
                         shape_str(v->shape) + " projections differ");
  return mul(t, gelu(t, linear(t, x, w, nullptr)), linear(t, x, v, nullptr));
}

Var l2_normalize_rows(Tape& t, const Var& x) {
  if (x->shape.empty()) throw DimensionError("l2_normalize_rows: scalar input");
  const std::size_t d = x->shape.back();
  const std::size_t rows = x->size() / d;
  Var out = like(x->shape);
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x->value[r * d + j] * x->value[r * d + j];
    norms[r] = std::max(std::sqrt(s), 1e-12);
    for (std::size_t j = 0; j < d; ++j) out->value[r * d + j] = x->value[r * d + j] / norms[r];
  }
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=, norms = std::move(norms)] {
    px->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += po->grad[r * d + j] * po->value[r * d + j];
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t i = r * d + j;
        px->grad[i] += (po->grad[i] - po->value[i] * dot) / norms[r];
      }
    }
  });
  return out;
}

Var reshape(Tape& t, const Var& x, Shape shape) {
  if (numel(shape) != x->size())
    throw DimensionError("reshape: " + shape_str(x->shape) + " to " + shape_str(shape));
  Var out = like(shape);
  out->value = x->value;
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=] { accumulate(px, po->grad); });
  return out;
}

Var permute(Tape& t, const Var& x, const std::vector<std::size_t>& perm) {
  const std::size_t rank = x->shape.size();
  if (perm.size() != rank) throw DimensionError("permute: rank mismatch for " + shape_str(x->shape));
  std::vector<bool> seen(rank, false);
  for (auto p : perm) {
    if (p >= rank || seen[p]) throw DimensionError("permute: invalid axis permutation");
    seen[p] = true;
  }
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) shape[i] = x->dim(perm[i]);
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * x->dim(i);
  // source offset for every destination element
  std::vector<std::size_t> src(x->size());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank; ++i) off += idx[i] * in_stride[perm[i]];
    src[flat] = off;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  Var out = like(shape);
  for (std::size_t i = 0; i < src.size(); ++i) out->value[i] = x->value[src[i]];
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=, src = std::move(src)] {
    px->ensure_grad();
    for (std::size_t i = 0; i < src.size(); ++i) px->grad[src[i]] += po->grad[i];
  });
  return out;
}

Var concat(Tape& t, const Var& a, const Var& b, std::size_t axis) {
  const auto& sa = a->shape;
  const auto& sb = b->shape;
  bool ok = sa.size() == sb.size() && axis < sa.size();
  for (std::size_t i = 0; ok && i < sa.size(); ++i) ok = (i == axis) || sa[i] == sb[i];
  if (!ok)
    throw DimensionError("concat: " + shape_str(sa) + " and " + shape_str(sb) + " along axis " +
                         std::to_string(axis));
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < sa.size(); ++i) inner *= sa[i];
  const std::size_t la = sa[axis] * inner, lb = sb[axis] * inner;
  const std::size_t outer = a->size() / la;
  Shape shape = sa;
  shape[axis] += sb[axis];
  Var out = like(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a->value.begin() + o * la, la, out->value.begin() + o * (la + lb));
    std::copy_n(b->value.begin() + o * lb, lb, out->value.begin() + o * (la + lb) + la);
  }
  TensorNode *pa = a.get(), *pb = b.get(), *po = out.get();
  t.record({a, b}, out, [=] {
    if (pa->requires_grad) pa->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      const double* g = po->grad.data() + o * (la + lb);
      if (pa->requires_grad)
        for (std::size_t i = 0; i < la; ++i) pa->grad[o * la + i] += g[i];
      if (pb->requires_grad)
        for (std::size_t i = 0; i < lb; ++i) pb->grad[o * lb + i] += g[la + i];
    }
  });
  return out;
}

Var repeat_leading(Tape& t, const Var& x, std::size_t count) {
  if (x->shape.empty() || x->dim(0) != 1)
    throw DimensionError("repeat_leading: leading dimension must be 1, got " + shape_str(x->shape));
  Shape shape = x->shape;
  shape[0] = count;
  const std::size_t n = x->size();
  Var out = like(shape);
  for (std::size_t c = 0; c < count; ++c) std::copy_n(x->value.begin(), n, out->value.begin() + c * n);
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=] {
    px->ensure_grad();
    for (std::size_t c = 0; c < count; ++c)
      for (std::size_t i = 0; i < n; ++i) px->grad[i] += po->grad[c * n + i];
  });
  return out;
}

Var gather_rows(Tape& t, const Var& x, std::span<const std::size_t> rows) {
  if (x->shape.empty()) throw DimensionError("gather_rows: scalar input");
  const std::size_t d = x->shape.back();
  const std::size_t total = x->size() / d;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  for (auto r : idx)
    if (r >= total)
      throw DimensionError("gather_rows: row " + std::to_string(r) + " out of range for " +
                           shape_str(x->shape));
  Var out = like({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(x->value.begin() + idx[i] * d, d, out->value.begin() + i * d);
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=, idx = std::move(idx)] {
    px->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) px->grad[idx[i] * d + j] += po->grad[i * d + j];
  });
  return out;
}

Var replace_rows(Tape& t, const Var& tokens, std::span<const double> flags,
                 const Var& replacement) {
  if (tokens->shape.empty()) throw DimensionError("replace_rows: scalar input");
  const std::size_t d = tokens->shape.back();
  const std::size_t rows = tokens->size() / d;
  if (flags.size() != rows || replacement->size() != d)
    throw DimensionError("replace_rows: flags/replacement do not match " +
                         shape_str(tokens->shape));
  std::vector<double> f(flags.begin(), flags.end());
  Var out = like(tokens->shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& src = f[r] != 0.0 ? replacement->value : tokens->value;
    const std::size_t off = f[r] != 0.0 ? 0 : r * d;
    std::copy_n(src.begin() + off, d, out->value.begin() + r * d);
  }
  TensorNode *pt = tokens.get(), *pr = replacement.get(), *po = out.get();
  t.record({tokens, replacement}, out, [=, f = std::move(f)] {
    if (pt->requires_grad) pt->ensure_grad();
    if (pr->requires_grad) pr->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const bool hit = f[r] != 0.0;
      TensorNode* dst = hit ? pr : pt;
      if (!dst->requires_grad) continue;
      const std::size_t off = hit ? 0 : r * d;
      for (std::size_t j = 0; j < d; ++j) dst->grad[off + j] += po->grad[r * d + j];
    }
  });
  return out;
}

Var slice_last(Tape& t, const Var& x, std::size_t begin, std::size_t end) {
  if (x->shape.empty() || begin >= end || end > x->shape.back())
    throw DimensionError("slice_last: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(x->shape));
  const std::size_t d = x->shape.back(), w = end - begin;
  const std::size_t rows = x->size() / d;
  Shape shape = x->shape;
  shape.back() = w;
  Var out = like(shape);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x->value.begin() + r * d + begin, w, out->value.begin() + r * w);
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=] {
    px->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) px->grad[r * d + begin + j] += po->grad[r * w + j];
  });
  return out;
}

Var outer_add(Tape& t, const Var& a, const Var& c) {
  if (a->shape.size() != 2 || c->shape.size() != 2 || a->dim(1) != c->dim(1))
    throw DimensionError("outer_add: " + shape_str(a->shape) + " and " + shape_str(c->shape));
  const std::size_t nb = a->dim(0), nn = c->dim(0), d = a->dim(1);
  Var out = like({nb, nn, d});
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t n = 0; n < nn; ++n)
      for (std::size_t j = 0; j < d; ++j)
        out->value[(b * nn + n) * d + j] = a->value[b * d + j] + c->value[n * d + j];
  TensorNode *pa = a.get(), *pc = c.get(), *po = out.get();
  t.record({a, c}, out, [=] {
    if (pa->requires_grad) pa->ensure_grad();
    if (pc->requires_grad) pc->ensure_grad();
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t n = 0; n < nn; ++n)
        for (std::size_t j = 0; j < d; ++j) {
          const double g = po->grad[(b * nn + n) * d + j];
          if (pa->requires_grad) pa->grad[b * d + j] += g;
          if (pc->requires_grad) pc->grad[n * d + j] += g;
        }
  });
  return out;
}

Var sum(Tape& t, const Var& x) {
  double s = 0.0;
  for (double v : x->value) s += v;
  Var out = scalar(s);
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=] {
    px->ensure_grad();
    const double g = po->grad[0];
    for (auto& v : px->grad) v += g;
  });
  return out;
}

Var mean(Tape& t, const Var& x) {
  if (x->size() == 0) throw DimensionError("mean of empty tensor");
  return scale(t, sum(t, x), 1.0 / static_cast<double>(x->size()));
}

Var weighted_sum(Tape& t, const Var& x, std::span<const double> w) {
  if (w.size() != x->size())
    throw DimensionError("weighted_sum: weights of size " + std::to_string(w.size()) +
                         " for tensor " + shape_str(x->shape));
  std::vector<std::pair<std::size_t, double>> terms;
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    terms.emplace_back(i, w[i]);
    s += w[i] * x->value[i];
  }
  Var out = scalar(s);
  TensorNode *px = x.get(), *po = out.get();
  t.record({x}, out, [=, terms = std::move(terms)] {
    px->ensure_grad();
    for (const auto& [i, wi] : terms) px->grad[i] += po->grad[0] * wi;
  });
  return out;
}

std::vector<double> dropout_mask(std::size_t n, double rate, std::mt19937_64& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  std::vector<double> mask(n, 1.0);
  if (!training || rate == 0.0) return mask;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = u(rng) < rate ? 0.0 : keep_scale;
  return mask;
}

Var dropout(Tape& t, const Var& x, double rate, std::mt19937_64& rng, bool training) {
  if (!training || rate == 0.0) {
    if (!(rate >= 0.0 && rate < 1.0))
      throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    return x;
  }
  const auto mask = dropout_mask(x->size(), rate, rng, training);
  return mul_const(t, x, mask);
}

Var drop_path(Tape& t, const Var& branch, double rate, double scale_by, std::mt19937_64& rng,
              bool training) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("drop_path rate must lie in [0, 1), got " + std::to_string(rate));
  if (!(scale_by > 0.0)) throw std::invalid_argument("drop_path residual scale must be positive");
  if (!training || rate == 0.0) return scale_by == 1.0 ? branch : scale(t, branch, scale_by);
  if (branch->shape.empty()) throw DimensionError("drop_path: branch needs a sample axis");
  const std::size_t samples = branch->dim(0);
  const std::size_t per = branch->size() / samples;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mask(branch->size());
  for (std::size_t s = 0; s < samples; ++s) {
    const double m = u(rng) < rate ? 0.0 : scale_by / (1.0 - rate);
    std::fill_n(mask.begin() + s * per, per, m);
  }
  return mul_const(t, branch, mask);
}

}  // namespace jetbench::ad
