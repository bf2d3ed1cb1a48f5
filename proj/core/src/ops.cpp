#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "tdl/tensor.hpp"

namespace tdl {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using CMapRow = Eigen::Map<const Eigen::RowVectorXd>;
using MapRow = Eigen::Map<Eigen::RowVectorXd>;

// dst[j] += sum_i src[i, j], always in row order. Eigen's vectorized
// colwise().sum() picks its summation order from the buffer's alignment, which
// made bias gradients differ in the last bit between identical runs.
void add_column_sums(const double* src, int64_t rows, int64_t cols, double* dst) {
  for (int64_t i = 0; i < rows; ++i) {
    const double* row = src + i * cols;
    for (int64_t j = 0; j < cols; ++j) dst[j] += row[j];
  }
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

/// Builds the output tensor and, when needed, its graph node.
Tensor make_result(Shape shape, std::vector<double> data, std::string_view op, std::initializer_list<const Tensor*> inputs,
                   std::function<void(const TensorImpl&)> bw) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  if (!NoGradGuard::active() && any_requires_grad(inputs)) {
    impl->requires_grad = true;
    auto node = std::make_shared<Node>();
    node->op = op;
    for (const Tensor* t : inputs) {
      if (t->defined()) node->inputs.push_back(t->impl());
    }
    node->backward = std::move(bw);
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

[[noreturn]] void shape_fail(std::string_view op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

void require_same(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

enum class Bin { add, sub, mul };

Tensor binary(Bin kind, std::string_view op, const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.numel() == 1 && a.shape() != b.shape();
  const bool b_scalar = b.numel() == 1 && a.shape() != b.shape();
  if (!a_scalar && !b_scalar) require_same(op, a, b);
  const Tensor& big = a_scalar ? b : a;
  const auto n = static_cast<std::size_t>(big.numel());
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ad[a_scalar ? 0 : i];
    const double y = bd[b_scalar ? 0 : i];
    out[i] = kind == Bin::add ? x + y : kind == Bin::sub ? x - y : x * y;
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result(big.shape(), std::move(out), op, {&a, &b}, [kind, ai, bi, a_scalar, b_scalar, n](const TensorImpl& o) {
    const auto& g = o.grad;
    auto push = [&](TensorImpl& t, bool is_scalar, double sign, const TensorImpl* other) {
      if (!t.requires_grad) return;
      auto tg = t.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        double gi = g[i] * sign;
        if (other) gi *= other->data[(other == ai.get() ? a_scalar : b_scalar) ? 0 : i];
        tg[is_scalar ? 0 : i] += gi;
      }
    };
    if (kind == Bin::mul) {
      push(*ai, a_scalar, 1.0, bi.get());
      push(*bi, b_scalar, 1.0, ai.get());
    } else {
      push(*ai, a_scalar, 1.0, nullptr);
      push(*bi, b_scalar, kind == Bin::sub ? -1.0 : 1.0, nullptr);
    }
  });
}

template <typename F, typename G>
Tensor unary(std::string_view op, const Tensor& x, F f, G dfdx_from_x_y) {
  const auto n = static_cast<std::size_t>(x.numel());
  auto xd = x.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(xd[i]);
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), op, {&x}, [xi, n, dfdx_from_x_y](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i] * dfdx_from_x_y(xi->data[i], o.data[i]);
  });
}

struct ConvGeom {
  int64_t n, h, w, ci, kh, kw, co, ho, wo;
  int stride, pad;
};

void im2col(const ConvGeom& g, const double* x, double* col) {
  const int64_t k = g.kh * g.kw * g.ci;
  for (int64_t b = 0; b < g.n; ++b) {
    for (int64_t oy = 0; oy < g.ho; ++oy) {
      for (int64_t ox = 0; ox < g.wo; ++ox) {
        double* row = col + ((b * g.ho + oy) * g.wo + ox) * k;
        for (int64_t ky = 0; ky < g.kh; ++ky) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          for (int64_t kx = 0; kx < g.kw; ++kx) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            double* dst = row + (ky * g.kw + kx) * g.ci;
            if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) {
              std::fill(dst, dst + g.ci, 0.0);
            } else {
              const double* src = x + ((b * g.h + iy) * g.w + ix) * g.ci;
              std::copy(src, src + g.ci, dst);
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvGeom& g, const double* col, double* dx) {
  const int64_t k = g.kh * g.kw * g.ci;
  for (int64_t b = 0; b < g.n; ++b) {
    for (int64_t oy = 0; oy < g.ho; ++oy) {
      for (int64_t ox = 0; ox < g.wo; ++ox) {
        const double* row = col + ((b * g.ho + oy) * g.wo + ox) * k;
        for (int64_t ky = 0; ky < g.kh; ++ky) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int64_t kx = 0; kx < g.kw; ++kx) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.w) continue;
            const double* src = row + (ky * g.kw + kx) * g.ci;
            double* dst = dx + ((b * g.h + iy) * g.w + ix) * g.ci;
            for (int64_t c = 0; c < g.ci; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(Bin::add, "add", a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Bin::sub, "sub", a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Bin::mul, "mul", a, b); }

Tensor scale(const Tensor& a, double s) {
  return unary(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    shape_fail("matmul", "incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MapMat(out.data(), m, n).noalias() = CMapMat(a.data().data(), m, k) * CMapMat(b.data().data(), k, n);
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result({m, n}, std::move(out), "matmul", {&a, &b}, [ai, bi, m, k, n](const TensorImpl& o) {
    CMapMat g(o.grad.data(), m, n);
    if (ai->requires_grad) MapMat(ai->grad_buffer().data(), m, k).noalias() += g * CMapMat(bi->data.data(), k, n).transpose();
    if (bi->requires_grad) MapMat(bi->grad_buffer().data(), k, n).noalias() += CMapMat(ai->data.data(), m, k).transpose() * g;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.ndim() < 1 || bias.ndim() != 1 || x.dim(-1) != bias.dim(0)) {
    shape_fail("add_bias", "bias " + shape_str(bias.shape()) + " does not match last axis of " + shape_str(x.shape()));
  }
  const int64_t c = bias.dim(0);
  const int64_t rows = x.numel() / c;
  std::vector<double> out(x.data().begin(), x.data().end());
  MapMat(out.data(), rows, c).rowwise() += CMapRow(bias.data().data(), c);
  auto xi = x.impl();
  auto bi = bias.impl();
  return make_result(x.shape(), std::move(out), "add_bias", {&x, &bias}, [xi, bi, rows, c](const TensorImpl& o) {
    if (xi->requires_grad) {
      auto g = xi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (bi->requires_grad) add_column_sums(o.grad.data(), rows, c, bi->grad_buffer().data());
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dAttrs attrs) {
  if (x.ndim() != 4 || w.ndim() != 4 || x.dim(3) != w.dim(2)) {
    shape_fail("conv2d", "input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  }
  if (attrs.stride < 1 || attrs.pad < 0) shape_fail("conv2d", "invalid stride/pad");
  ConvGeom g{};
  g.n = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.ci = x.dim(3);
  g.kh = w.dim(0);
  g.kw = w.dim(1);
  g.co = w.dim(3);
  g.stride = attrs.stride;
  g.pad = attrs.pad;
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    shape_fail("conv2d", "kernel " + shape_str(w.shape()) + " larger than padded input " + shape_str(x.shape()));
  }
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != g.co)) {
    shape_fail("conv2d", "bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(w.shape()));
  }

  const int64_t rows = g.n * g.ho * g.wo;
  const int64_t k = g.kh * g.kw * g.ci;
  const bool direct = g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
  auto col = std::make_shared<std::vector<double>>();
  const double* colp = x.data().data();
  if (!direct) {
    col->resize(static_cast<std::size_t>(rows * k));
    im2col(g, x.data().data(), col->data());
    colp = col->data();
  }
  std::vector<double> out(static_cast<std::size_t>(rows * g.co));
  MapMat y(out.data(), rows, g.co);
  y.noalias() = CMapMat(colp, rows, k) * CMapMat(w.data().data(), k, g.co);
  if (bias.defined()) y.rowwise() += CMapRow(bias.data().data(), g.co);

  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  return make_result({g.n, g.ho, g.wo, g.co}, std::move(out), "conv2d", {&x, &w, &bias},
                     [xi, wi, bi, col, g, rows, k, direct](const TensorImpl& o) {
                       CMapMat gy(o.grad.data(), rows, g.co);
                       const double* colp = direct ? xi->data.data() : col->data();
                       if (wi->requires_grad) {
                         MapMat(wi->grad_buffer().data(), k, g.co).noalias() += CMapMat(colp, rows, k).transpose() * gy;
                       }
                       if (bi && bi->requires_grad) {
                         add_column_sums(o.grad.data(), rows, g.co, bi->grad_buffer().data());
                       }
                       if (xi->requires_grad) {
                         if (direct) {
                           MapMat(xi->grad_buffer().data(), rows, k).noalias() +=
                               gy * CMapMat(wi->data.data(), k, g.co).transpose();
                         } else {
                           std::vector<double> dcol(static_cast<std::size_t>(rows * k));
                           MapMat(dcol.data(), rows, k).noalias() = gy * CMapMat(wi->data.data(), k, g.co).transpose();
                           col2im(g, dcol.data(), xi->grad_buffer().data());
                         }
                       }
                     });
}

Tensor maxpool2x2(const Tensor& x) {
  if (x.ndim() != 4 || x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
    shape_fail("maxpool2x2", "expects NHWC with even H and W, got " + shape_str(x.shape()));
  }
  const int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int64_t ho = h / 2, wo = w / 2;
  std::vector<double> out(static_cast<std::size_t>(n * ho * wo * c));
  auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
  auto xd = x.data();
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t oy = 0; oy < ho; ++oy) {
      for (int64_t ox = 0; ox < wo; ++ox) {
        for (int64_t ch = 0; ch < c; ++ch) {
          double best = -std::numeric_limits<double>::infinity();
          int64_t best_i = 0;
          for (int64_t dy = 0; dy < 2; ++dy) {
            for (int64_t dx = 0; dx < 2; ++dx) {
              const int64_t i = ((b * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
              if (xd[static_cast<std::size_t>(i)] > best) {
                best = xd[static_cast<std::size_t>(i)];
                best_i = i;
              }
            }
          }
          const auto o = static_cast<std::size_t>(((b * ho + oy) * wo + ox) * c + ch);
          out[o] = best;
          (*argmax)[o] = best_i;
        }
      }
    }
  }
  auto xi = x.impl();
  return make_result({n, ho, wo, c}, std::move(out), "maxpool2x2", {&x}, [xi, argmax](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for (std::size_t i = 0; i < argmax->size(); ++i) g[static_cast<std::size_t>((*argmax)[i])] += o.grad[i];
  });
}

Tensor upsample2x(const Tensor& x) {
  if (x.ndim() != 4) shape_fail("upsample2x", "expects NHWC, got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  std::vector<double> out(static_cast<std::size_t>(n * 4 * h * w * c));
  auto xd = x.data();
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t y = 0; y < 2 * h; ++y) {
      for (int64_t xx = 0; xx < 2 * w; ++xx) {
        const double* src = xd.data() + ((b * h + y / 2) * w + xx / 2) * c;
        std::copy(src, src + c, out.data() + ((b * 2 * h + y) * 2 * w + xx) * c);
      }
    }
  }
  auto xi = x.impl();
  return make_result({n, 2 * h, 2 * w, c}, std::move(out), "upsample2x", {&x}, [xi, n, h, w, c](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for (int64_t b = 0; b < n; ++b) {
      for (int64_t y = 0; y < 2 * h; ++y) {
        for (int64_t xx = 0; xx < 2 * w; ++xx) {
          const double* src = o.grad.data() + ((b * 2 * h + y) * 2 * w + xx) * c;
          double* dst = g.data() + ((b * h + y / 2) * w + xx / 2) * c;
          for (int64_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.ndim() < 1 || a.ndim() != b.ndim() ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    shape_fail("concat_channels", "leading dims differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const int64_t ca = a.dim(-1), cb = b.dim(-1);
  const int64_t rows = a.numel() / std::max<int64_t>(ca, 1);
  Shape shape = a.shape();
  shape.back() = ca + cb;
  std::vector<double> out(static_cast<std::size_t>(rows * (ca + cb)));
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.data().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result(std::move(shape), std::move(out), "concat_channels", {&a, &b}, [ai, bi, rows, ca, cb](const TensorImpl& o) {
    if (ai->requires_grad) {
      auto g = ai->grad_buffer();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < ca; ++j) g[static_cast<std::size_t>(r * ca + j)] += o.grad[static_cast<std::size_t>(r * (ca + cb) + j)];
    }
    if (bi->requires_grad) {
      auto g = bi->grad_buffer();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < cb; ++j)
          g[static_cast<std::size_t>(r * cb + j)] += o.grad[static_cast<std::size_t>(r * (ca + cb) + ca + j)];
    }
  });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    shape_fail("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto xi = x.impl();
  return make_result(std::move(shape), std::move(out), "reshape", {&x}, [xi](const TensorImpl& o) { xi->accumulate(o.grad); });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) shape_fail("mean", "empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const auto n = static_cast<double>(x.numel());
  auto xi = x.impl();
  return make_result({}, {s / n}, "mean", {&x}, [xi, n](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    const double gi = o.grad[0] / n;
    for (double& v : g) v += gi;
  });
}

Tensor softmax_channels(const Tensor& logits) {
  if (logits.ndim() < 1 || logits.dim(-1) < 1) shape_fail("softmax_channels", "bad shape " + shape_str(logits.shape()));
  const int64_t c = logits.dim(-1);
  const int64_t rows = logits.numel() / c;
  std::vector<double> out(static_cast<std::size_t>(logits.numel()));
  auto ld = logits.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* l = ld.data() + r * c;
    double* y = out.data() + r * c;
    const double m = *std::max_element(l, l + c);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += (y[j] = std::exp(l[j] - m));
    for (int64_t j = 0; j < c; ++j) y[j] /= z;
  }
  auto li = logits.impl();
  return make_result(logits.shape(), std::move(out), "softmax_channels", {&logits}, [li, rows, c](const TensorImpl& o) {
    auto g = li->grad_buffer();
    for (int64_t r = 0; r < rows; ++r) {
      const double* y = o.data.data() + r * c;
      const double* gy = o.grad.data() + r * c;
      double dot = 0.0;
      for (int64_t j = 0; j < c; ++j) dot += gy[j] * y[j];
      for (int64_t j = 0; j < c; ++j) g[static_cast<std::size_t>(r * c + j)] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.ndim() < 1) shape_fail("cross_entropy", "bad shape " + shape_str(logits.shape()));
  const int64_t c = logits.dim(-1);
  const int64_t rows = logits.numel() / c;
  if (static_cast<int64_t>(targets.size()) != rows) {
    shape_fail("cross_entropy", "logits " + shape_str(logits.shape()) + " need " + std::to_string(rows) + " targets, got " +
                                    std::to_string(targets.size()));
  }
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(logits.numel()));
  auto tg = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  auto ld = logits.data();
  double total = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= c) shape_fail("cross_entropy", "target id " + std::to_string(t) + " outside [0," + std::to_string(c) + ")");
    const double* l = ld.data() + r * c;
    double* p = probs->data() + r * c;
    const double m = *std::max_element(l, l + c);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += (p[j] = std::exp(l[j] - m));
    for (int64_t j = 0; j < c; ++j) p[j] /= z;
    total += (m + std::log(z)) - l[t];
  }
  auto li = logits.impl();
  const auto n = static_cast<double>(rows);
  return make_result({}, {total / n}, "cross_entropy", {&logits}, [li, probs, tg, rows, c, n](const TensorImpl& o) {
    auto g = li->grad_buffer();
    const double s = o.grad[0] / n;
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t j = 0; j < c; ++j) {
        const auto i = static_cast<std::size_t>(r * c + j);
        g[i] += s * ((*probs)[i] - (j == (*tg)[static_cast<std::size_t>(r)] ? 1.0 : 0.0));
      }
    }
  });
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  require_same("l1_loss", pred, target);
  if (pred.numel() == 0) shape_fail("l1_loss", "empty tensors");
  auto pd = pred.data();
  auto td = target.data();
  double s = 0.0;
  for (std::size_t i = 0; i < pd.size(); ++i) s += std::abs(pd[i] - td[i]);
  const auto n = static_cast<double>(pd.size());
  auto pi = pred.impl();
  auto ti = target.impl();
  return make_result({}, {s / n}, "l1_loss", {&pred}, [pi, ti, n](const TensorImpl& o) {
    auto g = pi->grad_buffer();
    const double s = o.grad[0] / n;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = pi->data[i] - ti->data[i];
      g[i] += d > 0.0 ? s : (d < 0.0 ? -s : 0.0);
    }
  });
}

Tensor forward_primitive(OpKind kind, std::span<const Tensor> in, const OpAttrs& attrs) {
  auto need = [&](std::size_t n, std::string_view op) {
    if (in.size() != n) {
      shape_fail(op, "expects " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::add: need(2, "add"); return add(in[0], in[1]);
    case OpKind::sub: need(2, "sub"); return sub(in[0], in[1]);
    case OpKind::mul: need(2, "mul"); return mul(in[0], in[1]);
    case OpKind::matmul: need(2, "matmul"); return matmul(in[0], in[1]);
    case OpKind::add_bias: need(2, "add_bias"); return add_bias(in[0], in[1]);
    case OpKind::conv2d:
      if (in.size() == 2) return conv2d(in[0], in[1], Tensor(), attrs.conv);
      need(3, "conv2d");
      return conv2d(in[0], in[1], in[2], attrs.conv);
    case OpKind::maxpool2x2: need(1, "maxpool2x2"); return maxpool2x2(in[0]);
    case OpKind::upsample2x: need(1, "upsample2x"); return upsample2x(in[0]);
    case OpKind::concat_channels: need(2, "concat_channels"); return concat_channels(in[0], in[1]);
    case OpKind::relu: need(1, "relu"); return relu(in[0]);
    case OpKind::tanh: need(1, "tanh"); return tanh(in[0]);
    case OpKind::reshape: need(1, "reshape"); return reshape(in[0], attrs.new_shape);
    case OpKind::mean: need(1, "mean"); return mean(in[0]);
    case OpKind::abs: need(1, "abs"); return abs(in[0]);
    case OpKind::softmax_channels: need(1, "softmax_channels"); return softmax_channels(in[0]);
    case OpKind::cross_entropy: need(1, "cross_entropy"); return cross_entropy(in[0], attrs.targets);
    case OpKind::l1_loss: need(2, "l1_loss"); return l1_loss(in[0], in[1]);
  }
  throw Error("forward_primitive: unknown op kind");
}

}  // namespace tdl
