#include "hhkg/ops.hpp"

#include <cmath>
#include <memory>
#include <numbers>

namespace hhkg::ops {

namespace {

template <typename T>
void check_same(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DataError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
  }
}

// c += a * b
template <typename T>
void gemm_nn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    T* ci = c.row(i).data();
    const T* ai = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      if (aip == T{0}) continue;
      const T* bp = b.row(p).data();
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c += a * b^T
template <typename T>
void gemm_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const T* ai = a.row(i).data();
    T* ci = c.row(i).data();
    for (std::size_t j = 0; j < m; ++j) {
      const T* bj = b.row(j).data();
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c += a^T * b
template <typename T>
void gemm_tn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const T* ai = a.row(i).data();
    const T* bi = b.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      if (aip == T{0}) continue;
      T* cp = c.row(p).data();
      for (std::size_t j = 0; j < m; ++j) cp[j] += aip * bi[j];
    }
  }
}

template <typename T, typename F>
Matrix<T> map(const Matrix<T>& a, F f) {
  Matrix<T> out(a.rows(), a.cols());
  auto src = a.flat();
  auto dst = out.flat();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename T>
void accumulate(Matrix<T>& dst, const Matrix<T>& src) {
  auto d = dst.flat();
  auto s = src.flat();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  check_same(t.value(a), t.value(b), "add");
  Matrix<T> out = t.value(a);
  accumulate(out, t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    if (t.needs_grad(a)) accumulate(t.grad(a), t.grad(self));
    if (t.needs_grad(b)) accumulate(t.grad(b), t.grad(self));
  });
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
  check_same(t.value(a), t.value(b), "sub");
  Matrix<T> out = t.value(a);
  auto o = out.flat();
  auto bv = t.value(b).flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    if (t.needs_grad(a)) accumulate(t.grad(a), t.grad(self));
    if (t.needs_grad(b)) {
      auto g = t.grad(b).flat();
      auto s = t.grad(self).flat();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= s[i];
    }
  });
}

template <typename T>
Var add_row(Tape<T>& t, Var a, Var row) {
  const auto& av = t.value(a);
  const auto& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw DataError("add_row: shape mismatch");
  Matrix<T> out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += rv(0, j);
  }
  return t.record(std::move(out), {a, row}, [a, row](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a)) accumulate(t.grad(a), g);
    if (t.needs_grad(row)) {
      auto& gr = t.grad(row);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
      }
    }
  });
}

template <typename T>
Var hadamard(Tape<T>& t, Var a, Var b) {
  check_same(t.value(a), t.value(b), "hadamard");
  Matrix<T> out = t.value(a);
  auto o = out.flat();
  auto bv = t.value(b).flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    auto s = t.grad(self).flat();
    if (t.needs_grad(a)) {
      auto g = t.grad(a).flat();
      auto bv = t.value(b).flat();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      auto g = t.grad(b).flat();
      auto av = t.value(a).flat();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i] * av[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& t, Var a, T c) {
  Matrix<T> out = map(t.value(a), [c](T x) { return x * c; });
  return t.record(std::move(out), {a}, [a, c](Tape<T>& t, Var self) {
    auto g = t.grad(a).flat();
    auto s = t.grad(self).flat();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * s[i];
  });
}

template <typename T>
Var scale_by(Tape<T>& t, Var a, Var s) {
  const auto& sv = t.value(s);
  if (sv.rows() != 1 || sv.cols() != 1) throw DataError("scale_by: scale must be 1x1");
  const T c = sv(0, 0);
  Matrix<T> out = map(t.value(a), [c](T x) { return x * c; });
  return t.record(std::move(out), {a, s}, [a, s](Tape<T>& t, Var self) {
    auto g = t.grad(self).flat();
    const T c = t.value(s)(0, 0);
    if (t.needs_grad(a)) {
      auto ga = t.grad(a).flat();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    }
    if (t.needs_grad(s)) {
      auto av = t.value(a).flat();
      T acc{0};
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      t.grad(s)(0, 0) += acc;
    }
  });
}

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  if (av.cols() != bv.rows()) {
    throw DataError("matmul: inner dimensions differ (" + std::to_string(av.cols()) + " vs " +
                    std::to_string(bv.rows()) + ")");
  }
  Matrix<T> out(av.rows(), bv.cols());
  gemm_nn(av, bv, out);
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a)) gemm_nt(g, t.value(b), t.grad(a));
    if (t.needs_grad(b)) gemm_tn(t.value(a), g, t.grad(b));
  });
}

template <typename T>
Var matmul_nt(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  if (av.cols() != bv.cols()) throw DataError("matmul_nt: inner dimensions differ");
  Matrix<T> out(av.rows(), bv.rows());
  gemm_nt(av, bv, out);
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a)) gemm_nn(g, t.value(b), t.grad(a));
    if (t.needs_grad(b)) gemm_tn(g, t.value(a), t.grad(b));
  });
}

template <typename T>
Var transpose(Tape<T>& t, Var a) {
  const auto& av = t.value(a);
  Matrix<T> out(av.cols(), av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
  }
  return t.record(std::move(out), {a}, [a](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.rows(); ++i) {
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(j, i);
    }
  });
}

template <typename T>
Var linear(Tape<T>& t, Var x, Var weight, Var bias) {
  return add_row(t, matmul(t, x, weight), bias);
}

template <typename T>
Var sum(Tape<T>& t, Var a) {
  T acc{0};
  for (T v : t.value(a).flat()) acc += v;
  Matrix<T> out(1, 1, acc);
  return t.record(std::move(out), {a}, [a](Tape<T>& t, Var self) {
    const T g = t.grad(self)(0, 0);
    for (auto& v : t.grad(a).flat()) v += g;
  });
}

template <typename T>
Var leaky_relu(Tape<T>& t, Var a, T slope) {
  Matrix<T> out = map(t.value(a), [slope](T x) { return x > T{0} ? x : slope * x; });
  return t.record(std::move(out), {a}, [a, slope](Tape<T>& t, Var self) {
    auto g = t.grad(a).flat();
    auto s = t.grad(self).flat();
    auto x = t.value(a).flat();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += x[i] > T{0} ? s[i] : slope * s[i];
  });
}

template <typename T>
Var gelu(Tape<T>& t, Var a) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  Matrix<T> out = map(t.value(a), [=](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); });
  return t.record(std::move(out), {a}, [a, inv_sqrt2](Tape<T>& t, Var self) {
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    auto g = t.grad(a).flat();
    auto s = t.grad(self).flat();
    auto x = t.value(a).flat();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T cdf = T(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x[i] * x[i]);
      g[i] += s[i] * (cdf + x[i] * pdf);
    }
  });
}

template <typename T>
Var sigmoid(Tape<T>& t, Var a) {
  Matrix<T> out = map(t.value(a), [](T x) { return T(1) / (T(1) + std::exp(-x)); });
  return t.record(std::move(out), {a}, [a](Tape<T>& t, Var self) {
    auto g = t.grad(a).flat();
    auto s = t.grad(self).flat();
    auto y = t.value(self).flat();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var exp(Tape<T>& t, Var a) {
  Matrix<T> out = map(t.value(a), [](T x) { return std::exp(x); });
  return t.record(std::move(out), {a}, [a](Tape<T>& t, Var self) {
    auto g = t.grad(a).flat();
    auto s = t.grad(self).flat();
    auto y = t.value(self).flat();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i] * y[i];
  });
}

namespace {

// Normalizes n groups of m values laid out with the given strides. Shared
// by layer norm (groups = rows) and batch norm (groups = columns).
struct NormLayout {
  std::size_t groups, length, group_stride, elem_stride;
};

template <typename T>
void normalize_forward(const T* x, T* xhat, T* inv_std, const NormLayout& l, T eps,
                       T* mean_out, T* var_out) {
  for (std::size_t g = 0; g < l.groups; ++g) {
    const T* xg = x + g * l.group_stride;
    T mean{0};
    for (std::size_t i = 0; i < l.length; ++i) mean += xg[i * l.elem_stride];
    mean /= static_cast<T>(l.length);
    T var{0};
    for (std::size_t i = 0; i < l.length; ++i) {
      const T d = xg[i * l.elem_stride] - mean;
      var += d * d;
    }
    var /= static_cast<T>(l.length);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[g] = is;
    if (mean_out) mean_out[g] = mean;
    if (var_out) var_out[g] = var;
    T* hg = xhat + g * l.group_stride;
    for (std::size_t i = 0; i < l.length; ++i) {
      hg[i * l.elem_stride] = (xg[i * l.elem_stride] - mean) * is;
    }
  }
}

// dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
template <typename T>
void normalize_backward(const T* dxhat, const T* xhat, const T* inv_std, T* dx,
                        const NormLayout& l) {
  for (std::size_t g = 0; g < l.groups; ++g) {
    const T* dg = dxhat + g * l.group_stride;
    const T* hg = xhat + g * l.group_stride;
    T mean_d{0}, mean_dh{0};
    for (std::size_t i = 0; i < l.length; ++i) {
      mean_d += dg[i * l.elem_stride];
      mean_dh += dg[i * l.elem_stride] * hg[i * l.elem_stride];
    }
    mean_d /= static_cast<T>(l.length);
    mean_dh /= static_cast<T>(l.length);
    T* xg = dx + g * l.group_stride;
    for (std::size_t i = 0; i < l.length; ++i) {
      const std::size_t k = i * l.elem_stride;
      xg[k] += inv_std[g] * (dg[k] - mean_d - hg[k] * mean_dh);
    }
  }
}

// y = xhat * gamma + beta with gamma, beta indexed by column.
template <typename T>
Var affine_record(Tape<T>& t, Var x, Var gamma, Var beta, std::shared_ptr<Matrix<T>> xhat,
                  std::shared_ptr<std::vector<T>> inv_std, NormLayout layout, bool frozen) {
  const auto& gv = t.value(gamma);
  const auto& bv = t.value(beta);
  Matrix<T> out(xhat->rows(), xhat->cols());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = (*xhat)(i, j) * gv(0, j) + bv(0, j);
  }
  return t.record(std::move(out), {x, gamma, beta},
                  [=](Tape<T>& t, Var self) {
                    const auto& g = t.grad(self);
                    const auto& gv = t.value(gamma);
                    if (t.needs_grad(gamma)) {
                      auto& gg = t.grad(gamma);
                      for (std::size_t i = 0; i < g.rows(); ++i) {
                        for (std::size_t j = 0; j < g.cols(); ++j) gg(0, j) += g(i, j) * (*xhat)(i, j);
                      }
                    }
                    if (t.needs_grad(beta)) {
                      auto& gb = t.grad(beta);
                      for (std::size_t i = 0; i < g.rows(); ++i) {
                        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
                      }
                    }
                    if (!t.needs_grad(x)) return;
                    Matrix<T> dxhat(g.rows(), g.cols());
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      for (std::size_t j = 0; j < g.cols(); ++j) dxhat(i, j) = g(i, j) * gv(0, j);
                    }
                    auto& gx = t.grad(x);
                    if (frozen) {
                      // Eval-mode batch norm: per-column constant scale.
                      for (std::size_t i = 0; i < g.rows(); ++i) {
                        for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) += dxhat(i, j) * (*inv_std)[j];
                      }
                    } else {
                      normalize_backward(dxhat.data(), xhat->data(), inv_std->data(), gx.data(),
                                         layout);
                    }
                  });
}

}  // namespace

template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps) {
  const auto& xv = t.value(x);
  const auto& gv = t.value(gamma);
  const auto& bv = t.value(beta);
  if (gv.rows() != 1 || gv.cols() != xv.cols() || !gv.same_shape(bv)) {
    throw DataError("layer_norm: affine shape mismatch");
  }
  const NormLayout layout{xv.rows(), xv.cols(), xv.cols(), 1};
  auto xhat = std::make_shared<Matrix<T>>(xv.rows(), xv.cols());
  auto inv_std = std::make_shared<std::vector<T>>(xv.rows());
  normalize_forward(xv.data(), xhat->data(), inv_std->data(), layout, eps, static_cast<T*>(nullptr),
                    static_cast<T*>(nullptr));
  return affine_record(t, x, gamma, beta, xhat, inv_std, layout, false);
}

template <typename T>
Var batch_norm(Tape<T>& t, Var x, Var gamma, Var beta, const BatchNormState<T>& state,
               bool training) {
  const auto& xv = t.value(x);
  const std::size_t n = xv.rows(), m = xv.cols();
  if (t.value(gamma).cols() != m || t.value(beta).cols() != m ||
      state.running_mean->value.cols() != m || state.running_var->value.cols() != m) {
    throw DataError("batch_norm: feature width mismatch");
  }
  auto xhat = std::make_shared<Matrix<T>>(n, m);
  auto inv_std = std::make_shared<std::vector<T>>(m);
  const NormLayout layout{m, n, 1, m};
  if (training) {
    std::vector<T> mean(m), var(m);
    normalize_forward(xv.data(), xhat->data(), inv_std->data(), layout, state.eps, mean.data(),
                      var.data());
    auto& rm = state.running_mean->value;
    auto& rv = state.running_var->value;
    const T unbias = n > 1 ? static_cast<T>(n) / static_cast<T>(n - 1) : T(1);
    for (std::size_t j = 0; j < m; ++j) {
      rm(0, j) = state.momentum * rm(0, j) + (T(1) - state.momentum) * mean[j];
      rv(0, j) = state.momentum * rv(0, j) + (T(1) - state.momentum) * var[j] * unbias;
    }
  } else {
    const auto& rm = state.running_mean->value;
    const auto& rv = state.running_var->value;
    for (std::size_t j = 0; j < m; ++j) (*inv_std)[j] = T(1) / std::sqrt(rv(0, j) + state.eps);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) (*xhat)(i, j) = (xv(i, j) - rm(0, j)) * (*inv_std)[j];
    }
  }
  return affine_record(t, x, gamma, beta, xhat, inv_std, layout, !training);
}

template <typename T>
Var dropout(Tape<T>& t, Var x, double rate, std::mt19937_64& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  require(rate < 1.0, "dropout rate must be < 1");
  const auto& xv = t.value(x);
  auto mask = std::make_shared<Matrix<T>>(xv.rows(), xv.cols());
  std::bernoulli_distribution keep(1.0 - rate);
  const T scale_kept = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask->flat()) m = keep(rng) ? scale_kept : T{0};
  Matrix<T> out = xv;
  auto o = out.flat();
  auto mv = mask->flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= mv[i];
  return t.record(std::move(out), {x}, [x, mask](Tape<T>& t, Var self) {
    auto g = t.grad(x).flat();
    auto s = t.grad(self).flat();
    auto mv = mask->flat();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i] * mv[i];
  });
}

template <typename T>
Var concat_cols(Tape<T>& t, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t n = t.value(parts[0]).rows();
  std::size_t width = 0;
  for (Var p : parts) {
    if (t.value(p).rows() != n) throw DataError("concat_cols: row count mismatch");
    width += t.value(p).cols();
  }
  Matrix<T> out(n, width);
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& pv = t.value(p);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(pv.row(i).begin(), pv.row(i).end(), out.row(i).begin() + offset);
    }
    offset += pv.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    std::size_t offset = 0;
    for (Var p : parts) {
      const std::size_t w = t.value(p).cols();
      if (t.needs_grad(p)) {
        auto& gp = t.grad(p);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < w; ++j) gp(i, j) += g(i, offset + j);
        }
      }
      offset += w;
    }
  });
}

template <typename T>
Var slice_cols(Tape<T>& t, Var x, std::size_t begin, std::size_t width) {
  const auto& xv = t.value(x);
  if (begin + width > xv.cols()) throw DataError("slice_cols: out of range");
  Matrix<T> out(xv.rows(), width);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    for (std::size_t j = 0; j < width; ++j) out(i, j) = xv(i, begin + j);
  }
  return t.record(std::move(out), {x}, [x, begin, width](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < width; ++j) gx(i, begin + j) += g(i, j);
    }
  });
}

template <typename T>
Var slice_rows(Tape<T>& t, Var x, std::size_t begin, std::size_t count) {
  const auto& xv = t.value(x);
  if (begin + count > xv.rows()) throw DataError("slice_rows: out of range");
  Matrix<T> out(count, xv.cols());
  for (std::size_t i = 0; i < count; ++i) {
    std::copy(xv.row(begin + i).begin(), xv.row(begin + i).end(), out.row(i).begin());
  }
  return t.record(std::move(out), {x}, [x, begin, count](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) gx(begin + i, j) += g(i, j);
    }
  });
}

template <typename T>
Var mean_of(Tape<T>& t, const std::vector<Var>& parts) {
  require(!parts.empty(), "mean_of: no inputs");
  Matrix<T> out(t.value(parts[0]).rows(), t.value(parts[0]).cols());
  for (Var p : parts) {
    check_same(out, t.value(p), "mean_of");
    accumulate(out, t.value(p));
  }
  const T inv = T(1) / static_cast<T>(parts.size());
  for (auto& v : out.flat()) v *= inv;
  return t.record(std::move(out), parts, [parts, inv](Tape<T>& t, Var self) {
    auto s = t.grad(self).flat();
    for (Var p : parts) {
      if (!t.needs_grad(p)) continue;
      auto g = t.grad(p).flat();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += inv * s[i];
    }
  });
}

template <typename T>
Var gather_rows(Tape<T>& t, Var x, std::span<const Index> rows) {
  const auto& xv = t.value(x);
  Matrix<T> out(rows.size(), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) throw DataError("gather_rows: index out of range");
    std::copy(xv.row(rows[i]).begin(), xv.row(rows[i]).end(), out.row(i).begin());
  }
  return t.record(std::move(out), {x}, [x, rows](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto dst = gx.row(rows[i]);
      auto src = g.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var scale_rows(Tape<T>& t, Var x, std::span<const T> factors) {
  const auto& xv = t.value(x);
  if (factors.size() != xv.rows()) throw DataError("scale_rows: factor count mismatch");
  Matrix<T> out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (auto& v : out.row(i)) v *= factors[i];
  }
  return t.record(std::move(out), {x}, [x, factors](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) += factors[i] * g(i, j);
    }
  });
}

template <typename T>
Var segment_softmax(Tape<T>& t, Var logits, std::span<const Index> segments,
                    std::size_t n_segments) {
  const auto& lv = t.value(logits);
  if (lv.cols() != 1 || lv.rows() != segments.size()) {
    throw DataError("segment_softmax: logits must be nnz x 1");
  }
  auto w = scatter_softmax<T>(lv.flat(), segments, n_segments);
  Matrix<T> out = Matrix<T>::column(w);
  return t.record(std::move(out), {logits}, [logits, segments, n_segments](Tape<T>& t, Var self) {
    auto w = t.value(self).flat();
    auto g = t.grad(self).flat();
    std::vector<T> dot(n_segments, T{0});
    for (std::size_t i = 0; i < w.size(); ++i) dot[segments[i]] += w[i] * g[i];
    auto gl = t.grad(logits).flat();
    for (std::size_t i = 0; i < w.size(); ++i) gl[i] += w[i] * (g[i] - dot[segments[i]]);
  });
}

template <typename T>
Var segment_weighted_sum(Tape<T>& t, Var weights, Var values, std::span<const Index> segments,
                         std::size_t n_segments) {
  const auto& wv = t.value(weights);
  const auto& vv = t.value(values);
  if (wv.cols() != 1 || wv.rows() != segments.size() || vv.rows() != segments.size()) {
    throw DataError("segment_weighted_sum: shape mismatch");
  }
  Matrix<T> out(n_segments, vv.cols());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    require(segments[i] < n_segments, "segment_weighted_sum: segment out of range");
    auto dst = out.row(segments[i]);
    auto src = vv.row(i);
    const T w = wv(i, 0);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
  }
  return t.record(std::move(out), {weights, values}, [=](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    const auto& wv = t.value(weights);
    const auto& vv = t.value(values);
    const bool gw = t.needs_grad(weights), gv = t.needs_grad(values);
    for (std::size_t i = 0; i < segments.size(); ++i) {
      auto gs = g.row(segments[i]);
      if (gw) {
        auto src = vv.row(i);
        T acc{0};
        for (std::size_t j = 0; j < gs.size(); ++j) acc += gs[j] * src[j];
        t.grad(weights)(i, 0) += acc;
      }
      if (gv) {
        auto dst = t.grad(values).row(i);
        const T w = wv(i, 0);
        for (std::size_t j = 0; j < gs.size(); ++j) dst[j] += w * gs[j];
      }
    }
  });
}

template <typename T>
Var segment_mean(Tape<T>& t, Var values, std::span<const Index> segments, std::size_t n_segments) {
  const auto& vv = t.value(values);
  if (vv.rows() != segments.size()) throw DataError("segment_mean: shape mismatch");
  auto inv_count = std::make_shared<std::vector<T>>(n_segments, T{0});
  for (Index s : segments) (*inv_count)[s] += T(1);
  for (auto& c : *inv_count) c = c > T{0} ? T(1) / c : T{0};
  Matrix<T> out(n_segments, vv.cols());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto dst = out.row(segments[i]);
    auto src = vv.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  for (std::size_t s = 0; s < n_segments; ++s) {
    for (auto& v : out.row(s)) v *= (*inv_count)[s];
  }
  return t.record(std::move(out), {values}, [values, segments, inv_count](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& gv = t.grad(values);
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const T c = (*inv_count)[segments[i]];
      auto dst = gv.row(i);
      auto src = g.row(segments[i]);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += c * src[j];
    }
  });
}

template <typename T>
Var sparse_attention(Tape<T>& t, Var q, Var k, Var v, const AttentionPlan& plan,
                     std::size_t heads, std::size_t chunk, AttentionTrace<T>* trace) {
  const auto& qv = t.value(q);
  const auto& kv = t.value(k);
  const auto& vv = t.value(v);
  const std::size_t width = qv.cols();
  if (heads == 0 || width % heads != 0 || kv.cols() != width || vv.cols() != width) {
    throw DataError("sparse_attention: width must be equal across q/k/v and divisible by heads");
  }
  const std::size_t dh = width / heads;
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t nnz = plan.size();

  auto score = [&](std::size_t begin, std::size_t end, Matrix<T>& out) {
    for (std::size_t i = begin; i < end; ++i) {
      const T* qi = qv.row(plan.query[i]).data();
      const T* ki = kv.row(plan.key[i]).data();
      auto o = out.row(i - begin);
      for (std::size_t h = 0; h < heads; ++h) {
        T acc{0};
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) acc += qi[c] * ki[c];
        o[h] = acc * inv_sqrt_d;
      }
    }
  };
  auto weights = std::make_shared<Matrix<T>>();
  const ChunkStats stats =
      chunked_segment_softmax<T>(plan.segment, plan.n_segments, heads, chunk, score, *weights);

  Matrix<T> out(plan.n_segments, width);
  for_each_chunk(nnz, chunk, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const T* vi = vv.row(plan.value[i]).data();
      T* o = out.row(plan.segment[i]).data();
      auto w = weights->row(i);
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) o[c] += w[h] * vi[c];
      }
    }
  });
  if (trace) {
    trace->weights = *weights;
    trace->stats = stats;
  }

  const AttentionPlan* p = &plan;
  return t.record(std::move(out), {q, k, v}, [=](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    const auto& qv = t.value(q);
    const auto& kv = t.value(k);
    const auto& vv = t.value(v);
    const bool need_q = t.needs_grad(q), need_k = t.needs_grad(k), need_v = t.needs_grad(v);
    Matrix<T>* gq = need_q ? &t.grad(q) : nullptr;
    Matrix<T>* gk = need_k ? &t.grad(k) : nullptr;
    Matrix<T>* gv = need_v ? &t.grad(v) : nullptr;
    const std::size_t n = p->size();

    // dw[p,h] = <g[segment_p], v[value_p]>_h; dot[s,h] = sum_p w dw.
    auto dw_of = [&](std::size_t i, std::size_t h) {
      const T* gi = g.row(p->segment[i]).data();
      const T* vi = vv.row(p->value[i]).data();
      T acc{0};
      for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) acc += gi[c] * vi[c];
      return acc;
    };
    Matrix<T> dot(p->n_segments, heads);
    if (need_q || need_k) {
      for_each_chunk(n, chunk, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          for (std::size_t h = 0; h < heads; ++h) {
            dot(p->segment[i], h) += (*weights)(i, h) * dw_of(i, h);
          }
        }
      });
    }
    for_each_chunk(n, chunk, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const T* qi = qv.row(p->query[i]).data();
        const T* ki = kv.row(p->key[i]).data();
        const T* gi = g.row(p->segment[i]).data();
        for (std::size_t h = 0; h < heads; ++h) {
          const T w = (*weights)(i, h);
          if (gv) {
            T* dv = gv->row(p->value[i]).data();
            for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) dv[c] += w * gi[c];
          }
          if (gq || gk) {
            const T dlogit = w * (dw_of(i, h) - dot(p->segment[i], h)) * inv_sqrt_d;
            if (gq) {
              T* dq = gq->row(p->query[i]).data();
              for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) dq[c] += dlogit * ki[c];
            }
            if (gk) {
              T* dk = gk->row(p->key[i]).data();
              for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) dk[c] += dlogit * qi[c];
            }
          }
        }
      }
    });
  });
}

template <typename T>
Var masked_softmax_rows(Tape<T>& t, Var scores, const Matrix<unsigned char>& mask) {
  const auto& sv = t.value(scores);
  if (sv.rows() != mask.rows() || sv.cols() != mask.cols()) {
    throw DataError("masked_softmax_rows: mask shape mismatch");
  }
  const T neg_inf = -std::numeric_limits<T>::infinity();
  Matrix<T> out(sv.rows(), sv.cols());
  for (std::size_t i = 0; i < sv.rows(); ++i) {
    auto o = out.row(i);
    T mx = neg_inf;
    for (std::size_t j = 0; j < o.size(); ++j) {
      o[j] = mask(i, j) ? sv(i, j) : neg_inf;
      mx = std::max(mx, o[j]);
    }
    if (mx == neg_inf) {
      std::fill(o.begin(), o.end(), T{0});
      continue;
    }
    T total{0};
    for (auto& x : o) {
      x = std::exp(x - mx);
      total += x;
    }
    for (auto& x : o) x /= total;
  }
  return t.record(std::move(out), {scores}, [scores](Tape<T>& t, Var self) {
    const auto& w = t.value(self);
    const auto& g = t.grad(self);
    auto& gs = t.grad(scores);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      T dot{0};
      for (std::size_t j = 0; j < w.cols(); ++j) dot += w(i, j) * g(i, j);
      for (std::size_t j = 0; j < w.cols(); ++j) gs(i, j) += w(i, j) * (g(i, j) - dot);
    }
  });
}

template <typename T>
Var row_l2_normalize(Tape<T>& t, Var x, T eps) {
  const auto& xv = t.value(x);
  auto norms = std::make_shared<std::vector<T>>(xv.rows());
  Matrix<T> out = xv;
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    T sq{0};
    for (T v : xv.row(i)) sq += v * v;
    (*norms)[i] = std::sqrt(sq + eps);
    for (auto& v : out.row(i)) v /= (*norms)[i];
  }
  return t.record(std::move(out), {x}, [x, norms](Tape<T>& t, Var self) {
    const auto& y = t.value(self);
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      T dot{0};
      for (std::size_t j = 0; j < y.cols(); ++j) dot += y(i, j) * g(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) {
        gx(i, j) += (g(i, j) - y(i, j) * dot) / (*norms)[i];
      }
    }
  });
}

template <typename T>
Var diag_cross_entropy(Tape<T>& t, Var scores, bool by_rows) {
  const auto& sv = t.value(scores);
  const std::size_t n = sv.rows();
  if (n == 0) throw DataError("diag_cross_entropy: empty batch");
  if (sv.cols() != n) throw DataError("diag_cross_entropy: scores must be square");
  auto at = [&](std::size_t i, std::size_t j) { return by_rows ? sv(i, j) : sv(j, i); };
  auto probs = std::make_shared<Matrix<T>>(n, n);  // row i = softmax of anchor i
  T loss{0};
  for (std::size_t i = 0; i < n; ++i) {
    T mx = at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, at(i, j));
    T total{0};
    for (std::size_t j = 0; j < n; ++j) {
      (*probs)(i, j) = std::exp(at(i, j) - mx);
      total += (*probs)(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) (*probs)(i, j) /= total;
    loss += mx + std::log(total) - at(i, i);
  }
  Matrix<T> out(1, 1, loss / static_cast<T>(n));
  return t.record(std::move(out), {scores}, [scores, probs, by_rows, n](Tape<T>& t, Var self) {
    const T g = t.grad(self)(0, 0) / static_cast<T>(n);
    auto& gs = t.grad(scores);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const T d = g * ((*probs)(i, j) - (i == j ? T(1) : T(0)));
        if (by_rows) {
          gs(i, j) += d;
        } else {
          gs(j, i) += d;
        }
      }
    }
  });
}

template <typename T>
Var masked_mse(Tape<T>& t, Var pred, std::span<const T> target, std::span<const Index> rows) {
  const auto& pv = t.value(pred);
  if (rows.empty()) throw DataError("masked_mse: empty mask");
  if (pv.cols() != 1 || target.size() != pv.rows()) throw DataError("masked_mse: shape mismatch");
  T acc{0};
  for (Index r : rows) {
    require(r < pv.rows(), "masked_mse: row out of range");
    const T d = pv(r, 0) - target[r];
    acc += d * d;
  }
  const T inv = T(1) / static_cast<T>(rows.size());
  Matrix<T> out(1, 1, acc * inv);
  return t.record(std::move(out), {pred}, [pred, target, rows, inv](Tape<T>& t, Var self) {
    const T g = t.grad(self)(0, 0);
    const auto& pv = t.value(pred);
    auto& gp = t.grad(pred);
    for (Index r : rows) gp(r, 0) += T(2) * inv * g * (pv(r, 0) - target[r]);
  });
}

#define HHKG_INSTANTIATE_OPS(T)                                                                 \
  template Var add<T>(Tape<T>&, Var, Var);                                                      \
  template Var sub<T>(Tape<T>&, Var, Var);                                                      \
  template Var add_row<T>(Tape<T>&, Var, Var);                                                  \
  template Var hadamard<T>(Tape<T>&, Var, Var);                                                 \
  template Var scale<T>(Tape<T>&, Var, T);                                                      \
  template Var scale_by<T>(Tape<T>&, Var, Var);                                                 \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                   \
  template Var matmul_nt<T>(Tape<T>&, Var, Var);                                                \
  template Var transpose<T>(Tape<T>&, Var);                                                     \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                              \
  template Var sum<T>(Tape<T>&, Var);                                                           \
  template Var leaky_relu<T>(Tape<T>&, Var, T);                                                 \
  template Var gelu<T>(Tape<T>&, Var);                                                          \
  template Var sigmoid<T>(Tape<T>&, Var);                                                       \
  template Var exp<T>(Tape<T>&, Var);                                                           \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                       \
  template Var batch_norm<T>(Tape<T>&, Var, Var, Var, const BatchNormState<T>&, bool);          \
  template Var dropout<T>(Tape<T>&, Var, double, std::mt19937_64&, bool);                       \
  template Var concat_cols<T>(Tape<T>&, const std::vector<Var>&);                               \
  template Var slice_cols<T>(Tape<T>&, Var, std::size_t, std::size_t);                          \
  template Var slice_rows<T>(Tape<T>&, Var, std::size_t, std::size_t);                          \
  template Var mean_of<T>(Tape<T>&, const std::vector<Var>&);                                   \
  template Var gather_rows<T>(Tape<T>&, Var, std::span<const Index>);                           \
  template Var scale_rows<T>(Tape<T>&, Var, std::span<const T>);                                \
  template Var segment_softmax<T>(Tape<T>&, Var, std::span<const Index>, std::size_t);          \
  template Var segment_weighted_sum<T>(Tape<T>&, Var, Var, std::span<const Index>, std::size_t); \
  template Var segment_mean<T>(Tape<T>&, Var, std::span<const Index>, std::size_t);             \
  template Var sparse_attention<T>(Tape<T>&, Var, Var, Var, const AttentionPlan&, std::size_t,  \
                                   std::size_t, AttentionTrace<T>*);                            \
  template Var masked_softmax_rows<T>(Tape<T>&, Var, const Matrix<unsigned char>&);             \
  template Var row_l2_normalize<T>(Tape<T>&, Var, T);                                           \
  template Var diag_cross_entropy<T>(Tape<T>&, Var, bool);                                      \
  template Var masked_mse<T>(Tape<T>&, Var, std::span<const T>, std::span<const Index>);

HHKG_INSTANTIATE_OPS(float)
HHKG_INSTANTIATE_OPS(double)

}  // namespace hhkg::ops
