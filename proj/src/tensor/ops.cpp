#include "incepto/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "incepto/errors.hpp"
#include "incepto/simd.hpp"

namespace incepto::ops {

using detail::grad_target;
using detail::make_result;

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

std::size_t product(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= s[i];
  return n;
}

}  // namespace

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.data().begin(), a.data().end());
  simd::axpy(1.0, b.ptr(), out.data(), out.size());
  return make_result("add", a.shape(), std::move(out), {a, b}, [a, b](TensorImpl* o) {
    return [a, b, o] {
      const std::size_t n = o->grad.size();
      if (double* ga = grad_target(a)) simd::axpy(1.0, o->grad.data(), ga, n);
      if (double* gb = grad_target(b)) simd::axpy(1.0, o->grad.data(), gb, n);
    };
  });
}

Tensor add_broadcast(const Tensor& x, const Tensor& b) {
  const Shape& xs = x.shape();
  const Shape& bs = b.shape();
  if (bs.size() > xs.size() || !std::equal(bs.begin(), bs.end(), xs.end() - bs.size())) {
    throw DimensionError("add_broadcast: " + b.shape_string() + " is not a trailing shape of " + x.shape_string());
  }
  const std::size_t inner = b.numel();
  const std::size_t outer = x.numel() / inner;
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < outer; ++r) simd::axpy(1.0, b.ptr(), out.data() + r * inner, inner);
  return make_result("add_broadcast", xs, std::move(out), {x, b}, [x, b, inner, outer](TensorImpl* o) {
    return [x, b, o, inner, outer] {
      const double* g = o->grad.data();
      if (double* gx = grad_target(x)) simd::axpy(1.0, g, gx, o->grad.size());
      if (double* gb = grad_target(b)) {
        for (std::size_t r = 0; r < outer; ++r) simd::axpy(1.0, g + r * inner, gb, inner);
      }
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](TensorImpl* o) {
    return [a, b, o] {
      const double* g = o->grad.data();
      if (double* ga = grad_target(a)) {
        for (std::size_t i = 0; i < o->grad.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (double* gb = grad_target(b)) {
        for (std::size_t i = 0; i < o->grad.size(); ++i) gb[i] += g[i] * a[i];
      }
    };
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return make_result("scale", x.shape(), std::move(out), {x}, [x, factor](TensorImpl* o) {
    return [x, o, factor] {
      if (double* gx = grad_target(x)) simd::axpy(factor, o->grad.data(), gx, o->grad.size());
    };
  });
}

Tensor sum(const Tensor& x) {
  const double s = simd::sum(x.ptr(), x.numel());
  return make_result("sum", {1}, {s}, {x}, [x](TensorImpl* o) {
    return [x, o] {
      if (double* gx = grad_target(x)) {
        const double g = o->grad[0];
        for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g;
      }
    };
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("mean_axis: axis out of range for " + x.shape_string());
  const std::size_t outer = product(s, 0, axis);
  const std::size_t len = s[axis];
  const std::size_t inner = product(s, axis + 1, s.size());
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  const double inv = 1.0 / static_cast<double>(len);
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) simd::axpy(1.0, x.ptr() + (o * len + l) * inner, out.data() + o * inner, inner);
  }
  for (double& v : out) v *= inv;
  return make_result("mean_axis", std::move(out_shape), std::move(out), {x}, [=](TensorImpl* o) {
    return [x, o, outer, len, inner, inv] {
      if (double* gx = grad_target(x)) {
        for (std::size_t a = 0; a < outer; ++a)
          for (std::size_t l = 0; l < len; ++l) simd::axpy(inv, o->grad.data() + a * inner, gx + (a * len + l) * inner, inner);
      }
    };
  });
}

// --- products --------------------------------------------------------------

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    throw DimensionError("bmm: expected batched 3-D operands, got " + a.shape_string() + " and " + b.shape_string());
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t kb = transpose_b ? b.dim(2) : b.dim(1);
  if (kb != k) {
    throw DimensionError("bmm: inner dimensions differ, " + a.shape_string() + " and " + b.shape_string() +
                         (transpose_b ? " (transposed)" : ""));
  }
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    simd::gemm(false, transpose_b, m, n, k, a.ptr() + i * m * k, b.ptr() + i * k * n, out.data() + i * m * n);
  }
  return make_result("bmm", {batch, m, n}, std::move(out), {a, b}, [=](TensorImpl* o) {
    return [a, b, o, batch, m, n, k, transpose_b] {
      const double* g = o->grad.data();
      double* ga = grad_target(a);
      double* gb = grad_target(b);
      for (std::size_t i = 0; i < batch; ++i) {
        const double* gi = g + i * m * n;
        if (ga) simd::gemm(false, !transpose_b, m, k, n, gi, b.ptr() + i * k * n, ga + i * m * k);
        if (gb) {
          if (transpose_b) {
            simd::gemm(true, false, n, k, m, gi, a.ptr() + i * m * k, gb + i * k * n);
          } else {
            simd::gemm(true, false, k, n, m, a.ptr() + i * m * k, gi, gb + i * k * n);
          }
        }
      }
    };
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  simd::gemm(false, false, m, n, k, a.ptr(), b.ptr(), out.data());
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [=](TensorImpl* o) {
    return [a, b, o, m, n, k] {
      if (double* ga = grad_target(a)) simd::gemm(false, true, m, k, n, o->grad.data(), b.ptr(), ga);
      if (double* gb = grad_target(b)) simd::gemm(true, false, k, n, m, a.ptr(), o->grad.data(), gb);
    };
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw DimensionError("linear: input " + x.shape_string() + " does not match weights " + w.shape_string());
  }
  const std::size_t in = w.dim(0), out_w = w.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_w)) {
    throw DimensionError("linear: bias " + bias.shape_string() + " does not match weights " + w.shape_string());
  }
  const std::size_t rows = x.numel() / in;
  std::vector<double> out(rows * out_w, 0.0);
  if (bias.defined()) {
    for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data().begin(), bias.data().end(), out.begin() + r * out_w);
  }
  simd::gemm(false, false, rows, out_w, in, x.ptr(), w.ptr(), out.data());
  Shape out_shape = x.shape();
  out_shape.back() = out_w;
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_result("linear", std::move(out_shape), std::move(out), std::move(inputs), [=](TensorImpl* o) {
    return [x, w, bias, o, rows, in, out_w] {
      const double* g = o->grad.data();
      if (double* gx = grad_target(x)) simd::gemm(false, true, rows, in, out_w, g, w.ptr(), gx);
      if (double* gw = grad_target(w)) simd::gemm(true, false, in, out_w, rows, x.ptr(), g, gw);
      if (bias.defined()) {
        if (double* gb = grad_target(bias)) {
          for (std::size_t r = 0; r < rows; ++r) simd::axpy(1.0, g + r * out_w, gb, out_w);
        }
      }
    };
  });
}

// --- convolution -------------------------------------------------------------

namespace {

// cols[(ci*K + k) x T] = x[ci, t + k - pad], zero outside [0, T).
void im2col(const double* x, std::size_t cin, std::size_t t_len, std::size_t ksize, double* cols) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ksize / 2);
  const std::ptrdiff_t tl = static_cast<std::ptrdiff_t>(t_len);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t k = 0; k < ksize; ++k) {
      double* row = cols + (ci * ksize + k) * t_len;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
      for (std::ptrdiff_t t = 0; t < tl; ++t) {
        const std::ptrdiff_t src = t + shift;
        row[t] = (src >= 0 && src < tl) ? x[ci * t_len + static_cast<std::size_t>(src)] : 0.0;
      }
    }
  }
}

void col2im(const double* cols, std::size_t cin, std::size_t t_len, std::size_t ksize, double* dx) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ksize / 2);
  const std::ptrdiff_t tl = static_cast<std::ptrdiff_t>(t_len);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t k = 0; k < ksize; ++k) {
      const double* row = cols + (ci * ksize + k) * t_len;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(tl, tl - shift);
      if (hi > lo) {
        simd::axpy(1.0, row + lo, dx + ci * t_len + static_cast<std::size_t>(lo + shift),
                   static_cast<std::size_t>(hi - lo));
      }
    }
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 3) throw DimensionError("conv1d: weights must be [C_out x C_in x K], got " + weights.shape_string());
  const std::size_t cout = weights.dim(0), cin = weights.dim(1), ksize = weights.dim(2);
  if (ksize % 2 == 0) throw ConfigError("conv1d: kernel size must be odd, got " + std::to_string(ksize));
  if (x.rank() != 2 && x.rank() != 3) throw DimensionError("conv1d: input must be [C x T] or [N x C x T], got " + x.shape_string());
  const bool batched = x.rank() == 3;
  const std::size_t n = batched ? x.dim(0) : 1;
  const std::size_t xc = batched ? x.dim(1) : x.dim(0);
  const std::size_t t_len = x.shape().back();
  if (xc != cin) {
    throw DimensionError("conv1d: input has " + std::to_string(xc) + " channels, weights expect " + std::to_string(cin) +
                         " (input " + x.shape_string() + ", weights " + weights.shape_string() + ")");
  }
  if (bias.rank() != 1 || bias.dim(0) != cout) throw DimensionError("conv1d: bias must be [" + std::to_string(cout) + "]");

  const std::size_t rows = cin * ksize;
  std::vector<double> out(n * cout * t_len);
  std::vector<double> cols(rows * t_len);
  for (std::size_t s = 0; s < n; ++s) {
    double* y = out.data() + s * cout * t_len;
    for (std::size_t co = 0; co < cout; ++co) std::fill(y + co * t_len, y + (co + 1) * t_len, bias[co]);
    im2col(x.ptr() + s * cin * t_len, cin, t_len, ksize, cols.data());
    simd::gemm(false, false, cout, t_len, rows, weights.ptr(), cols.data(), y);
  }
  Shape out_shape = batched ? Shape{n, cout, t_len} : Shape{cout, t_len};
  return make_result("conv1d", std::move(out_shape), std::move(out), {x, weights, bias}, [=](TensorImpl* o) {
    return [x, weights, bias, o, n, cin, cout, ksize, t_len, rows] {
      double* gx = grad_target(x);
      double* gw = grad_target(weights);
      double* gb = grad_target(bias);
      std::vector<double> cols(rows * t_len);
      std::vector<double> dcols(gx ? rows * t_len : 0);
      for (std::size_t s = 0; s < n; ++s) {
        const double* dy = o->grad.data() + s * cout * t_len;
        if (gb) {
          for (std::size_t co = 0; co < cout; ++co) gb[co] += simd::sum(dy + co * t_len, t_len);
        }
        if (gw) {
          im2col(x.ptr() + s * cin * t_len, cin, t_len, ksize, cols.data());
          simd::gemm(false, true, cout, rows, t_len, dy, cols.data(), gw);
        }
        if (gx) {
          std::fill(dcols.begin(), dcols.end(), 0.0);
          simd::gemm(true, false, rows, t_len, cout, weights.ptr(), dy, dcols.data());
          col2im(dcols.data(), cin, t_len, ksize, gx + s * cin * t_len);
        }
      }
    };
  });
}

// --- activations and losses ------------------------------------------------

Tensor selu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    out[i] = v > 0.0 ? kSeluScale * v : kSeluScale * kSeluAlpha * std::expm1(v);
  }
  return make_result("selu", x.shape(), std::move(out), {x}, [x](TensorImpl* o) {
    return [x, o] {
      if (double* gx = grad_target(x)) {
        const std::vector<double>& g = o->grad;
        const std::vector<double>& y = o->data;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double d = x[i] > 0.0 ? kSeluScale : y[i] + kSeluScale * kSeluAlpha;
          gx[i] += g[i] * d;
        }
      }
    };
  });
}

namespace {
void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t width) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in + r * width;
    double* yr = out + r * width;
    const double mx = *std::max_element(xr, xr + width);
    const double z = simd::exp_shift(xr, mx, yr, width);
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < width; ++j) yr[j] *= inv;
  }
}
}  // namespace

Tensor softmax(const Tensor& x) {
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  std::vector<double> out(x.numel());
  softmax_rows(x.ptr(), out.data(), rows, width);
  return make_result("softmax", x.shape(), std::move(out), {x}, [x, rows, width](TensorImpl* o) {
    return [x, o, rows, width] {
      if (double* gx = grad_target(x)) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = o->data.data() + r * width;
          const double* g = o->grad.data() + r * width;
          const double inner = simd::dot(g, y, width);
          for (std::size_t j = 0; j < width; ++j) gx[r * width + j] += y[j] * (g[j] - inner);
        }
      }
    };
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale, std::vector<double>* probs) {
  if (q.rank() != 3 || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError("attention: q, k, v must share one [B x L x d] shape, got " + q.shape_string() + ", " +
                         k.shape_string() + ", " + v.shape_string());
  }
  const std::size_t batch = q.dim(0), len = q.dim(1), hd = q.dim(2);
  auto p = std::make_shared<std::vector<double>>(batch * len * len, 0.0);
  std::vector<double> out(batch * len * hd, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    double* pi = p->data() + i * len * len;
    simd::gemm(false, true, len, len, hd, q.ptr() + i * len * hd, k.ptr() + i * len * hd, pi);
    for (std::size_t j = 0; j < len * len; ++j) pi[j] *= scale;
    softmax_rows(pi, pi, len, len);
    simd::gemm(false, false, len, hd, len, pi, v.ptr() + i * len * hd, out.data() + i * len * hd);
  }
  if (probs != nullptr) *probs = *p;
  return make_result("attention", q.shape(), std::move(out), {q, k, v}, [=](TensorImpl* o) {
    return [q, k, v, p, o, batch, len, hd, scale] {
      double* gq = grad_target(q);
      double* gk = grad_target(k);
      double* gv = grad_target(v);
      std::vector<double> ds(len * len);
      for (std::size_t i = 0; i < batch; ++i) {
        const double* pi = p->data() + i * len * len;
        const double* go = o->grad.data() + i * len * hd;
        if (gv) simd::gemm(true, false, len, hd, len, pi, go, gv + i * len * hd);
        if (!gq && !gk) continue;
        std::fill(ds.begin(), ds.end(), 0.0);
        simd::gemm(false, true, len, len, hd, go, v.ptr() + i * len * hd, ds.data());
        for (std::size_t r = 0; r < len; ++r) {
          double* row = ds.data() + r * len;
          const double* y = pi + r * len;
          const double inner = simd::dot(row, y, len);
          for (std::size_t c = 0; c < len; ++c) row[c] = y[c] * (row[c] - inner) * scale;
        }
        if (gq) simd::gemm(false, false, len, hd, len, ds.data(), k.ptr() + i * len * hd, gq + i * len * hd);
        if (gk) simd::gemm(true, false, len, hd, len, ds.data(), q.ptr() + i * len * hd, gk + i * len * hd);
      }
    };
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [B x C], got " + logits.shape_string());
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(batch));
  }
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw IndexError("cross_entropy: label " + std::to_string(labels[i]) + " at position " + std::to_string(i) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
  }
  std::vector<double> probs(logits.numel());
  softmax_rows(logits.ptr(), probs.data(), batch, classes);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    // log-sum-exp form keeps -log p finite when p underflows
    const double* row = logits.ptr() + i * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    loss += (mx + std::log(z)) - row[labels[i]];
  }
  loss /= static_cast<double>(batch);
  std::vector<int> owned(labels.begin(), labels.end());
  return make_result("cross_entropy", {1}, {loss}, {logits}, [=](TensorImpl* o) {
    return [logits, o, probs, owned, batch, classes] {
      if (double* gl = grad_target(logits)) {
        const double g = o->grad[0] / static_cast<double>(batch);
        for (std::size_t i = 0; i < batch; ++i) {
          for (std::size_t j = 0; j < classes; ++j) {
            const double onehot = static_cast<int>(j) == owned[i] ? 1.0 : 0.0;
            gl[i * classes + j] += g * (probs[i * classes + j] - onehot);
          }
        }
      }
    };
  });
}

// --- shape manipulation ------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + x.shape_string() + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [x](TensorImpl* o) {
    return [x, o] {
      if (double* gx = grad_target(x)) simd::axpy(1.0, o->grad.data(), gx, o->grad.size());
    };
  });
}

Tensor permute(const Tensor& x, std::span<const std::size_t> order) {
  const Shape& s = x.shape();
  const std::size_t r = s.size();
  if (order.size() != r) throw DimensionError("permute: order length differs from rank of " + x.shape_string());
  std::vector<bool> seen(r, false);
  for (std::size_t a : order) {
    if (a >= r || seen[a]) throw DimensionError("permute: invalid axis order");
    seen[a] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = s[order[i]];
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r - 1; i > 0; --i) in_stride[i - 1] = in_stride[i] * s[i];
  // src_offset[i] for each output flat index, computed once and shared with backward.
  auto src = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < x.numel(); ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_stride[order[i]];
    (*src)[flat] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[(*src)[i]];
  return make_result("permute", std::move(out_shape), std::move(out), {x}, [x, src](TensorImpl* o) {
    return [x, o, src] {
      if (double* gx = grad_target(x)) {
        for (std::size_t i = 0; i < o->grad.size(); ++i) gx[(*src)[i]] += o->grad[i];
      }
    };
  });
}

Tensor concat(std::span<const Tensor> xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range for " + xs[0].shape_string());
  std::size_t total = 0;
  for (const Tensor& t : xs) {
    const Shape& s = t.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == s0[i];
    if (!ok) throw DimensionError("concat: " + t.shape_string() + " incompatible with " + xs[0].shape_string());
    total += s[axis];
  }
  const std::size_t outer = product(s0, 0, axis);
  const std::size_t inner = product(s0, axis + 1, s0.size());
  Shape out_shape = s0;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Tensor& t : xs) {
    const std::size_t chunk = t.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(t.ptr() + o * chunk, chunk, out.data() + o * total * inner + off * inner);
    }
    offsets.push_back(off);
    off += t.dim(axis);
  }
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  return make_result("concat", std::move(out_shape), std::move(out), inputs, [=](TensorImpl* o) {
    return [inputs, offsets, o, outer, inner, total, axis] {
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        double* g = grad_target(inputs[k]);
        if (!g) continue;
        const std::size_t chunk = inputs[k].dim(axis) * inner;
        for (std::size_t a = 0; a < outer; ++a) {
          simd::axpy(1.0, o->grad.data() + a * total * inner + offsets[k] * inner, g + a * chunk, chunk);
        }
      }
    };
  });
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  const Shape& s = x.shape();
  if (axis >= s.size() || index >= s[axis]) {
    throw IndexError("select: index " + std::to_string(index) + " on axis " + std::to_string(axis) + " of " + x.shape_string());
  }
  const std::size_t outer = product(s, 0, axis);
  const std::size_t len = s[axis];
  const std::size_t inner = product(s, axis + 1, s.size());
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(x.ptr() + (o * len + index) * inner, inner, out.data() + o * inner);
  return make_result("select", std::move(out_shape), std::move(out), {x}, [=](TensorImpl* o) {
    return [x, o, outer, len, inner, index] {
      if (double* gx = grad_target(x)) {
        for (std::size_t a = 0; a < outer; ++a) simd::axpy(1.0, o->grad.data() + a * inner, gx + (a * len + index) * inner, inner);
      }
    };
  });
}

Tensor stack(std::span<const Tensor> xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("stack: no inputs");
  std::vector<Tensor> expanded;
  expanded.reserve(xs.size());
  for (const Tensor& t : xs) {
    if (axis > t.rank()) throw DimensionError("stack: axis out of range for " + t.shape_string());
    Shape s = t.shape();
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(t, std::move(s)));
  }
  return concat(expanded, axis);
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    out[i] = x[i] * (*mask)[i];
  }
  return make_result("dropout", x.shape(), std::move(out), {x}, [x, mask](TensorImpl* o) {
    return [x, o, mask] {
      if (double* gx = grad_target(x)) {
        for (std::size_t i = 0; i < o->grad.size(); ++i) gx[i] += o->grad[i] * (*mask)[i];
      }
    };
  });
}

// --- normalization -----------------------------------------------------------

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState state, bool training) {
  if (x.rank() != 2 && x.rank() != 3) throw DimensionError("batch_norm: input must be [C x T] or [N x C x T], got " + x.shape_string());
  const bool batched = x.rank() == 3;
  const std::size_t n = batched ? x.dim(0) : 1;
  const std::size_t channels = batched ? x.dim(1) : x.dim(0);
  const std::size_t t_len = x.shape().back();
  if (gamma.numel() != channels || beta.numel() != channels || state.running_mean.size() != channels ||
      state.running_var.size() != channels) {
    throw DimensionError("batch_norm: parameters do not match " + std::to_string(channels) + " channels");
  }
  const double count = static_cast<double>(n * t_len);
  std::vector<double> mean(channels), inv_std(channels);
  if (training) {
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) s += simd::sum(x.ptr() + (b * channels + c) * t_len, t_len);
      const double mu = s / count;
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* row = x.ptr() + (b * channels + c) * t_len;
        for (std::size_t t = 0; t < t_len; ++t) ss += (row[t] - mu) * (row[t] - mu);
      }
      const double var = ss / count;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + state.epsilon);
      const double unbiased = count > 1.0 ? ss / (count - 1.0) : var;
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu;
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.epsilon);
    }
  }
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * t_len;
      for (std::size_t t = 0; t < t_len; ++t) {
        const double h = (x[base + t] - mean[c]) * inv_std[c];
        (*xhat)[base + t] = h;
        out[base + t] = gamma[c] * h + beta[c];
      }
    }
  }
  return make_result("batch_norm", x.shape(), std::move(out), {x, gamma, beta}, [=](TensorImpl* o) {
    return [x, gamma, beta, o, xhat, inv_std, n, channels, t_len, count, training] {
      const double* g = o->grad.data();
      double* gx = grad_target(x);
      double* gg = grad_target(gamma);
      double* gb = grad_target(beta);
      for (std::size_t c = 0; c < channels; ++c) {
        double sum_g = 0.0, sum_gh = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          const std::size_t base = (b * channels + c) * t_len;
          sum_g += simd::sum(g + base, t_len);
          sum_gh += simd::dot(g + base, xhat->data() + base, t_len);
        }
        if (gg) gg[c] += sum_gh;
        if (gb) gb[c] += sum_g;
        if (!gx) continue;
        const double k = gamma[c] * inv_std[c];
        const double mean_g = sum_g / count;
        const double mean_gh = sum_gh / count;
        for (std::size_t b = 0; b < n; ++b) {
          const std::size_t base = (b * channels + c) * t_len;
          for (std::size_t t = 0; t < t_len; ++t) {
            gx[base + t] += training ? k * (g[base + t] - mean_g - (*xhat)[base + t] * mean_gh) : k * g[base + t];
          }
        }
      }
    };
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double epsilon) {
  const std::size_t width = x.shape().back();
  if (gamma.numel() != width || beta.numel() != width) {
    throw DimensionError("layer_norm: parameters do not match width " + std::to_string(width) + " of " + x.shape_string());
  }
  const std::size_t rows = x.numel() / width;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * width;
    const double mu = simd::sum(xr, width) / static_cast<double>(width);
    double ss = 0.0;
    for (std::size_t j = 0; j < width; ++j) ss += (xr[j] - mu) * (xr[j] - mu);
    inv_std[r] = 1.0 / std::sqrt(ss / static_cast<double>(width) + epsilon);
    for (std::size_t j = 0; j < width; ++j) {
      const double h = (xr[j] - mu) * inv_std[r];
      (*xhat)[r * width + j] = h;
      out[r * width + j] = gamma[j] * h + beta[j];
    }
  }
  return make_result("layer_norm", x.shape(), std::move(out), {x, gamma, beta}, [=](TensorImpl* o) {
    return [x, gamma, beta, o, xhat, inv_std, rows, width] {
      const double* g = o->grad.data();
      double* gx = grad_target(x);
      double* gg = grad_target(gamma);
      double* gb = grad_target(beta);
      std::vector<double> dh(width);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g + r * width;
        const double* hr = xhat->data() + r * width;
        if (gg) for (std::size_t j = 0; j < width; ++j) gg[j] += gr[j] * hr[j];
        if (gb) simd::axpy(1.0, gr, gb, width);
        if (!gx) continue;
        for (std::size_t j = 0; j < width; ++j) dh[j] = gr[j] * gamma[j];
        const double mean_dh = simd::sum(dh.data(), width) / static_cast<double>(width);
        const double mean_dhh = simd::dot(dh.data(), hr, width) / static_cast<double>(width);
        for (std::size_t j = 0; j < width; ++j) gx[r * width + j] += inv_std[r] * (dh[j] - mean_dh - hr[j] * mean_dhh);
      }
    };
  });
}

}  // namespace incepto::ops
