#include "mbtf/nn/ops.hpp"

#include <cmath>
#include <memory>

namespace mbtf::nn {

namespace {

template <typename T>
void accumulate(const Var<T>& v, const Tensor<T>& delta) {
  if (!v || !v->requires_grad) return;
  Tensor<T>& gr = v->ensure_grad();
  T* gp = gr.ptr();
  const T* dp = delta.ptr();
  for (std::size_t i = 0; i < gr.size(); ++i) gp[i] += dp[i];
}

template <typename T>
bool needs(const Var<T>& v) {
  return v && v->requires_grad;
}

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* what) {
  if (a->value.shape() != b->value.shape()) {
    throw ValidationError(std::string(what) + ": shape mismatch " + shape_str(a->value.shape()) + " vs " +
                          shape_str(b->value.shape()));
  }
}

// C[M,N] = A[M,K] * B[N,K]^T
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const T* ar = a + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const T* br = b + static_cast<std::size_t>(j) * k;
      T acc = 0;
      for (int q = 0; q < k; ++q) acc += ar[q] * br[q];
      c[static_cast<std::size_t>(i) * n + j] += acc;
    }
  }
}

// dA[M,K] += dC[M,N] * B[N,K]
template <typename T>
void matmul_nn_acc(const T* dc, const T* b, T* da, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    T* ar = da + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const T s = dc[static_cast<std::size_t>(i) * n + j];
      if (s == T(0)) continue;
      const T* br = b + static_cast<std::size_t>(j) * k;
      for (int q = 0; q < k; ++q) ar[q] += s * br[q];
    }
  }
}

// dB[N,K] += dC[M,N]^T * A[M,K]
template <typename T>
void matmul_tn_acc(const T* dc, const T* a, T* db, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const T* ar = a + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const T s = dc[static_cast<std::size_t>(i) * n + j];
      if (s == T(0)) continue;
      T* br = db + static_cast<std::size_t>(j) * k;
      for (int q = 0; q < k; ++q) br[q] += s * ar[q];
    }
  }
}

template <typename T>
T sigm(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

template <typename T>
Var<T> add(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "add");
  Tensor<T> v = a->value;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += b->value[i];
  auto out = g.record(std::move(v), needs(a) || needs(b));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, a, b] {
      accumulate(a, o->grad);
      accumulate(b, o->grad);
    };
  }
  return out;
}

template <typename T>
Var<T> sub(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "sub");
  Tensor<T> v = a->value;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= b->value[i];
  auto out = g.record(std::move(v), needs(a) || needs(b));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, a, b] {
      accumulate(a, o->grad);
      if (needs(b)) {
        Tensor<T> neg = o->grad;
        for (auto& e : neg.vec()) e = -e;
        accumulate(b, neg);
      }
    };
  }
  return out;
}

template <typename T>
Var<T> mul(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "mul");
  Tensor<T> v = a->value;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b->value[i];
  auto out = g.record(std::move(v), needs(a) || needs(b));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, a, b] {
      if (needs(a)) {
        Tensor<T> d = o->grad;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= b->value[i];
        accumulate(a, d);
      }
      if (needs(b)) {
        Tensor<T> d = o->grad;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= a->value[i];
        accumulate(b, d);
      }
    };
  }
  return out;
}

template <typename T>
Var<T> scale(Graph<T>& g, const Var<T>& a, T s) {
  Tensor<T> v = a->value;
  for (auto& e : v.vec()) e *= s;
  auto out = g.record(std::move(v), needs(a));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, a, s] {
      Tensor<T> d = o->grad;
      for (auto& e : d.vec()) e *= s;
      accumulate(a, d);
    };
  }
  return out;
}

template <typename T>
Var<T> sum(Graph<T>& g, const Var<T>& a) {
  T acc = 0;
  for (T e : a->value.vec()) acc += e;
  auto out = g.record(Tensor<T>({1}, acc), needs(a));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, a] { accumulate(a, Tensor<T>(a->value.shape(), o->grad[0])); };
  }
  return out;
}

template <typename T>
Var<T> mean(Graph<T>& g, const Var<T>& a) {
  const T n = static_cast<T>(std::max<std::size_t>(1, a->value.size()));
  return scale(g, sum(g, a), T(1) / n);
}

template <typename T>
Var<T> sigmoid(Graph<T>& g, const Var<T>& x) {
  Tensor<T> v = x->value;
  for (auto& e : v.vec()) e = sigm(e);
  auto out = g.record(std::move(v), needs(x));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, x] {
      Tensor<T> d = o->grad;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= o->value[i] * (T(1) - o->value[i]);
      accumulate(x, d);
    };
  }
  return out;
}

template <typename T>
Var<T> tanh(Graph<T>& g, const Var<T>& x) {
  Tensor<T> v = x->value;
  for (auto& e : v.vec()) e = std::tanh(e);
  auto out = g.record(std::move(v), needs(x));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, x] {
      Tensor<T> d = o->grad;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= T(1) - o->value[i] * o->value[i];
      accumulate(x, d);
    };
  }
  return out;
}

template <typename T>
Var<T> prelu(Graph<T>& g, const Var<T>& x, const Var<T>& slope) {
  const int c = x->value.dim(0);
  require_shape(slope->value, {c}, "prelu slope");
  const std::size_t plane = x->value.size() / static_cast<std::size_t>(std::max(c, 1));
  Tensor<T> v = x->value;
  for (int ch = 0; ch < c; ++ch) {
    const T a = slope->value[static_cast<std::size_t>(ch)];
    T* p = v.ptr() + static_cast<std::size_t>(ch) * plane;
    for (std::size_t k = 0; k < plane; ++k) p[k] = p[k] > T(0) ? p[k] : a * p[k];
  }
  auto out = g.record(std::move(v), needs(x) || needs(slope));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, x, slope, c, plane] {
      Tensor<T> dx(x->value.shape());
      Tensor<T> ds({c});
      for (int ch = 0; ch < c; ++ch) {
        const T a = slope->value[static_cast<std::size_t>(ch)];
        const std::size_t base = static_cast<std::size_t>(ch) * plane;
        T acc = 0;
        for (std::size_t k = 0; k < plane; ++k) {
          const T xv = x->value[base + k];
          const T gv = o->grad[base + k];
          if (xv > T(0)) {
            dx[base + k] = gv;
          } else {
            dx[base + k] = a * gv;
            acc += xv * gv;
          }
        }
        ds[static_cast<std::size_t>(ch)] = acc;
      }
      accumulate(x, dx);
      accumulate(slope, ds);
    };
  }
  return out;
}

template <typename T>
Var<T> reshape(Graph<T>& g, const Var<T>& x, Shape shape) {
  auto out = g.record(x->value.reshaped(std::move(shape)), needs(x));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, x] { accumulate(x, o->grad.reshaped(x->value.shape())); };
  }
  return out;
}

template <typename T>
Var<T> permute3(Graph<T>& g, const Var<T>& x, std::array<int, 3> perm) {
  require_rank(x->value, 3, "permute3");
  const Shape& s = x->value.shape();
  const Shape os{s[perm[0]], s[perm[1]], s[perm[2]]};
  // stride of each output axis in the input
  const std::array<std::size_t, 3> in_stride{static_cast<std::size_t>(s[1]) * s[2], static_cast<std::size_t>(s[2]),
                                             1};
  const std::array<std::size_t, 3> st{in_stride[perm[0]], in_stride[perm[1]], in_stride[perm[2]]};
  auto gather = [os, st](const Tensor<T>& in, Tensor<T>& outt, bool scatter) {
    std::size_t idx = 0;
    for (int i = 0; i < os[0]; ++i) {
      for (int j = 0; j < os[1]; ++j) {
        const std::size_t base = i * st[0] + j * st[1];
        for (int k = 0; k < os[2]; ++k, ++idx) {
          if (scatter) {
            outt[base + k * st[2]] += in[idx];
          } else {
            outt[idx] = in[base + k * st[2]];
          }
        }
      }
    }
  };
  Tensor<T> v(os);
  gather(x->value, v, false);
  auto out = g.record(std::move(v), needs(x));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, x, gather] {
      Tensor<T> d(x->value.shape());
      gather(o->grad, d, true);
      accumulate(x, d);
    };
  }
  return out;
}

template <typename T>
Var<T> concat0(Graph<T>& g, const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ValidationError("concat0: no inputs");
  Shape s = parts[0]->value.shape();
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    Shape ps = p->value.shape();
    if (ps.size() != s.size()) throw ValidationError("concat0: rank mismatch");
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (ps[i] != s[i]) {
        throw ValidationError("concat0: dimension " + std::to_string(i) + " mismatch " + shape_str(ps) + " vs " +
                              shape_str(s));
      }
    }
    total += ps[0];
    rg = rg || needs(p);
  }
  s[0] = total;
  Tensor<T> v(s);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.vec().begin(), p->value.vec().end(), v.vec().begin() + static_cast<std::ptrdiff_t>(off));
    off += p->value.size();
  }
  auto out = g.record(std::move(v), rg);
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, parts] {
      std::size_t off2 = 0;
      for (const auto& p : parts) {
        if (needs(p)) {
          Tensor<T> d(p->value.shape());
          std::copy_n(o->grad.vec().begin() + static_cast<std::ptrdiff_t>(off2), d.size(), d.vec().begin());
          accumulate(p, d);
        }
        off2 += p->value.size();
      }
    };
  }
  return out;
}

template <typename T>
Var<T> slice0(Graph<T>& g, const Var<T>& x, int begin, int end) {
  const Shape& s = x->value.shape();
  if (begin < 0 || end > s[0] || begin >= end) {
    throw ValidationError("slice0: range [" + std::to_string(begin) + "," + std::to_string(end) +
                          ") out of bounds for " + shape_str(s));
  }
  Shape os = s;
  os[0] = end - begin;
  const std::size_t plane = x->value.size() / static_cast<std::size_t>(s[0]);
  Tensor<T> v(os);
  std::copy_n(x->value.vec().begin() + static_cast<std::ptrdiff_t>(plane * begin), v.size(), v.vec().begin());
  auto out = g.record(std::move(v), needs(x));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, x, plane, begin] {
      Tensor<T> d(x->value.shape());
      std::copy(o->grad.vec().begin(), o->grad.vec().end(),
                d.vec().begin() + static_cast<std::ptrdiff_t>(plane * begin));
      accumulate(x, d);
    };
  }
  return out;
}

template <typename T>
Var<T> concat_last(Graph<T>& g, const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ValidationError("concat_last: no inputs");
  const Shape& s0 = parts[0]->value.shape();
  const std::size_t rows = parts[0]->value.size() / static_cast<std::size_t>(std::max(1, s0.back()));
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    const Shape& ps = p->value.shape();
    if (ps.size() != s0.size() || !std::equal(ps.begin(), ps.end() - 1, s0.begin())) {
      throw ValidationError("concat_last: leading dimensions mismatch " + shape_str(ps) + " vs " + shape_str(s0));
    }
    total += ps.back();
    rg = rg || needs(p);
  }
  Shape os = s0;
  os.back() = total;
  Tensor<T> v(os);
  int col = 0;
  for (const auto& p : parts) {
    const int w = p->value.shape().back();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p->value.ptr() + r * w, w, v.ptr() + r * total + col);
    }
    col += w;
  }
  auto out = g.record(std::move(v), rg);
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, parts, rows, total] {
      int c = 0;
      for (const auto& p : parts) {
        const int w = p->value.shape().back();
        if (needs(p)) {
          Tensor<T> d(p->value.shape());
          for (std::size_t r = 0; r < rows; ++r) std::copy_n(o->grad.ptr() + r * total + c, w, d.ptr() + r * w);
          accumulate(p, d);
        }
        c += w;
      }
    };
  }
  return out;
}

template <typename T>
Var<T> slice_last(Graph<T>& g, const Var<T>& x, int begin, int end) {
  const Shape& s = x->value.shape();
  const int n = s.back();
  if (begin < 0 || end > n || begin >= end) {
    throw ValidationError("slice_last: range out of bounds for " + shape_str(s));
  }
  const std::size_t rows = x->value.size() / static_cast<std::size_t>(n);
  const int w = end - begin;
  Shape os = s;
  os.back() = w;
  Tensor<T> v(os);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x->value.ptr() + r * n + begin, w, v.ptr() + r * w);
  auto out = g.record(std::move(v), needs(x));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, x, rows, n, w, begin] {
      Tensor<T> d(x->value.shape());
      for (std::size_t r = 0; r < rows; ++r) std::copy_n(o->grad.ptr() + r * w, w, d.ptr() + r * n + begin);
      accumulate(x, d);
    };
  }
  return out;
}

template <typename T>
Var<T> mul_broadcast_last(Graph<T>& g, const Var<T>& a, const Var<T>& z) {
  require_rank(z->value, 3, "mul_broadcast_last z");
  require_shape(a->value, {z->value.dim(0), z->value.dim(1)}, "mul_broadcast_last a");
  const std::size_t rows = a->value.size();
  const int t = z->value.dim(2);
  Tensor<T> v = z->value;
  for (std::size_t r = 0; r < rows; ++r) {
    for (int k = 0; k < t; ++k) v[r * t + k] *= a->value[r];
  }
  auto out = g.record(std::move(v), needs(a) || needs(z));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, a, z, rows, t] {
      if (needs(a)) {
        Tensor<T> d(a->value.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          T acc = 0;
          for (int k = 0; k < t; ++k) acc += o->grad[r * t + k] * z->value[r * t + k];
          d[r] = acc;
        }
        accumulate(a, d);
      }
      if (needs(z)) {
        Tensor<T> d = o->grad;
        for (std::size_t r = 0; r < rows; ++r) {
          for (int k = 0; k < t; ++k) d[r * t + k] *= a->value[r];
        }
        accumulate(z, d);
      }
    };
  }
  return out;
}

template <typename T>
Var<T> conv2d(Graph<T>& g, const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvGeometry& geom) {
  const Tensor<T>* bp = bias ? &bias->value : nullptr;
  auto out = g.record(conv2d_forward(x->value, w->value, bp, geom), needs(x) || needs(w) || needs(bias));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, x, w, bias, geom] {
      if (needs(x)) {
        accumulate(x, conv2d_input_adjoint(o->grad, w->value, geom, x->value.dim(0), x->value.dim(1),
                                           x->value.dim(2)));
      }
      if (needs(w)) conv2d_weight_grad(x->value, o->grad, geom, w->ensure_grad());
      if (needs(bias)) bias_grad(o->grad, bias->ensure_grad());
    };
  }
  return out;
}

template <typename T>
Var<T> conv_transpose2d(Graph<T>& g, const Var<T>& x, const Var<T>& w, const Var<T>& bias,
                        const ConvGeometry& geom, int out_f, int out_t) {
  require_rank(w->value, 4, "conv_transpose2d weight");
  const int c_out = w->value.dim(1) * geom.groups;
  if (geom.out_f(out_f) != x->value.dim(1) || geom.out_t(out_t) != x->value.dim(2)) {
    throw ValidationError("conv_transpose2d: requested output (" + std::to_string(out_f) + "," +
                          std::to_string(out_t) + ") does not map back to input " + shape_str(x->value.shape()) +
                          " under " + geom.str());
  }
  if (w->value.dim(0) != x->value.dim(0)) {
    throw ValidationError("conv_transpose2d: input channel dimension " + std::to_string(x->value.dim(0)) +
                          " does not match weight " + shape_str(w->value.shape()));
  }
  Tensor<T> v = conv2d_input_adjoint(x->value, w->value, geom, c_out, out_f, out_t);
  if (bias) {
    require_shape(bias->value, {c_out}, "conv_transpose2d bias");
    const std::size_t plane = static_cast<std::size_t>(out_f) * out_t;
    for (int c = 0; c < c_out; ++c) {
      for (std::size_t k = 0; k < plane; ++k) v[c * plane + k] += bias->value[static_cast<std::size_t>(c)];
    }
  }
  auto out = g.record(std::move(v), needs(x) || needs(w) || needs(bias));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, x, w, bias, geom] {
      if (needs(x)) accumulate(x, conv2d_forward(o->grad, w->value, static_cast<const Tensor<T>*>(nullptr), geom));
      // The roles of "input" and "output gradient" swap relative to conv2d.
      if (needs(w)) conv2d_weight_grad(o->grad, x->value, geom, w->ensure_grad());
      if (needs(bias)) bias_grad(o->grad, bias->ensure_grad());
    };
  }
  return out;
}

template <typename T>
Var<T> batch_norm(Graph<T>& g, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, const BatchNormOptions& opt) {
  const int c = x->value.dim(0);
  require_shape(gamma->value, {c}, "batch_norm gamma");
  require_shape(beta->value, {c}, "batch_norm beta");
  require_shape(running_mean, {c}, "batch_norm running mean");
  require_shape(running_var, {c}, "batch_norm running var");
  const std::size_t plane = x->value.size() / static_cast<std::size_t>(c);
  Tensor<T> xhat(x->value.shape());
  Tensor<T> inv_std({c});
  for (int ch = 0; ch < c; ++ch) {
    const T* p = x->value.ptr() + static_cast<std::size_t>(ch) * plane;
    T mu, var;
    if (opt.training) {
      double s = 0;
      for (std::size_t k = 0; k < plane; ++k) s += p[k];
      mu = static_cast<T>(s / static_cast<double>(plane));
      double v2 = 0;
      for (std::size_t k = 0; k < plane; ++k) v2 += (p[k] - mu) * (p[k] - mu);
      var = static_cast<T>(v2 / static_cast<double>(plane));
      running_mean[ch] = static_cast<T>(opt.momentum * running_mean[ch] + (1 - opt.momentum) * mu);
      running_var[ch] = static_cast<T>(opt.momentum * running_var[ch] + (1 - opt.momentum) * var);
    } else {
      mu = running_mean[ch];
      var = running_var[ch];
    }
    const T is = T(1) / std::sqrt(var + static_cast<T>(opt.eps));
    inv_std[ch] = is;
    T* q = xhat.ptr() + static_cast<std::size_t>(ch) * plane;
    for (std::size_t k = 0; k < plane; ++k) q[k] = (p[k] - mu) * is;
  }
  Tensor<T> v(x->value.shape());
  for (int ch = 0; ch < c; ++ch) {
    const T gm = gamma->value[ch], bt = beta->value[ch];
    for (std::size_t k = 0; k < plane; ++k) v[ch * plane + k] = gm * xhat[ch * plane + k] + bt;
  }
  auto out = g.record(std::move(v), needs(x) || needs(gamma) || needs(beta));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    const bool training = opt.training;
    out->backward_fn = [o, x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), c, plane,
                        training] {
      Tensor<T> dg({c}), db({c});
      Tensor<T> dx(x->value.shape());
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t base = static_cast<std::size_t>(ch) * plane;
        T sg = 0, sgx = 0;
        for (std::size_t k = 0; k < plane; ++k) {
          sg += o->grad[base + k];
          sgx += o->grad[base + k] * xhat[base + k];
        }
        dg[ch] = sgx;
        db[ch] = sg;
        const T scale_ = gamma->value[ch] * inv_std[ch];
        if (training) {
          const T mg = sg / static_cast<T>(plane), mgx = sgx / static_cast<T>(plane);
          for (std::size_t k = 0; k < plane; ++k) {
            dx[base + k] = scale_ * (o->grad[base + k] - mg - xhat[base + k] * mgx);
          }
        } else {
          for (std::size_t k = 0; k < plane; ++k) dx[base + k] = scale_ * o->grad[base + k];
        }
      }
      accumulate(x, dx);
      accumulate(gamma, dg);
      accumulate(beta, db);
    };
  }
  return out;
}

template <typename T>
Var<T> linear(Graph<T>& g, const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  require_rank(x->value, 2, "linear input");
  require_rank(w->value, 2, "linear weight");
  const int b = x->value.dim(0), d = x->value.dim(1), o_ = w->value.dim(0);
  if (w->value.dim(1) != d) {
    throw ValidationError("linear: input feature dimension " + std::to_string(d) + " does not match weight " +
                          shape_str(w->value.shape()));
  }
  Tensor<T> v({b, o_});
  if (bias) {
    require_shape(bias->value, {o_}, "linear bias");
    for (int i = 0; i < b; ++i) std::copy_n(bias->value.ptr(), o_, v.ptr() + static_cast<std::size_t>(i) * o_);
  }
  matmul_nt(x->value.ptr(), w->value.ptr(), v.ptr(), b, o_, d);
  auto out = g.record(std::move(v), needs(x) || needs(w) || needs(bias));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, x, w, bias, b, d, o_] {
      if (needs(x)) {
        Tensor<T> dx(x->value.shape());
        matmul_nn_acc(o->grad.ptr(), w->value.ptr(), dx.ptr(), b, o_, d);
        accumulate(x, dx);
      }
      if (needs(w)) matmul_tn_acc(o->grad.ptr(), x->value.ptr(), w->ensure_grad().ptr(), b, o_, d);
      if (needs(bias)) {
        Tensor<T>& bg = bias->ensure_grad();
        for (int i = 0; i < b; ++i) {
          for (int j = 0; j < o_; ++j) bg[j] += o->grad[static_cast<std::size_t>(i) * o_ + j];
        }
      }
    };
  }
  return out;
}

template <typename T>
Var<T> gru(Graph<T>& g, const Var<T>& x, const GruWeights<T>& w, const Var<T>& h0, bool reverse) {
  require_rank(x->value, 3, "gru input");
  const int bsz = x->value.dim(0), len = x->value.dim(1), d = x->value.dim(2);
  const int h = w.hidden();
  require_shape(w.w_ih->value, {3 * h, d}, "gru w_ih");
  require_shape(w.w_hh->value, {3 * h, h}, "gru w_hh");
  require_shape(w.b_ih->value, {3 * h}, "gru b_ih");
  require_shape(w.b_hh->value, {3 * h}, "gru b_hh");
  if (h0) require_shape(h0->value, {bsz, h}, "gru h0");
  const int h3 = 3 * h;
  const std::size_t rows = static_cast<std::size_t>(bsz) * len;

  // Input projections for every step: [B*L, 3H].
  auto gi = std::make_shared<Tensor<T>>(Shape{static_cast<int>(rows), h3});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(w.b_ih->value.ptr(), h3, gi->ptr() + r * h3);
  matmul_nt(x->value.ptr(), w.w_ih->value.ptr(), gi->ptr(), static_cast<int>(rows), h3, d);

  Tensor<T> out({bsz, len, h});
  auto cache = std::make_shared<Tensor<T>>(Shape{static_cast<int>(rows), 4 * h});  // r, z, n, gh_n
  Tensor<T> hprev({bsz, h});
  if (h0) hprev = h0->value;
  Tensor<T> gh({bsz, h3});
  for (int s = 0; s < len; ++s) {
    const int t = reverse ? len - 1 - s : s;
    for (int b = 0; b < bsz; ++b) std::copy_n(w.b_hh->value.ptr(), h3, gh.ptr() + static_cast<std::size_t>(b) * h3);
    matmul_nt(hprev.ptr(), w.w_hh->value.ptr(), gh.ptr(), bsz, h3, h);
    for (int b = 0; b < bsz; ++b) {
      const std::size_t row = static_cast<std::size_t>(b) * len + t;
      const T* gir = gi->ptr() + row * h3;
      const T* ghr = gh.ptr() + static_cast<std::size_t>(b) * h3;
      T* cr = cache->ptr() + row * 4 * h;
      T* orow = out.ptr() + row * h;
      const T* hp = hprev.ptr() + static_cast<std::size_t>(b) * h;
      for (int k = 0; k < h; ++k) {
        const T r = sigm(gir[k] + ghr[k]);
        const T z = sigm(gir[h + k] + ghr[h + k]);
        const T n = std::tanh(gir[2 * h + k] + r * ghr[2 * h + k]);
        cr[k] = r;
        cr[h + k] = z;
        cr[2 * h + k] = n;
        cr[3 * h + k] = ghr[2 * h + k];
        orow[k] = (T(1) - z) * n + z * hp[k];
      }
    }
    for (int b = 0; b < bsz; ++b) {
      std::copy_n(out.ptr() + (static_cast<std::size_t>(b) * len + t) * h, h,
                  hprev.ptr() + static_cast<std::size_t>(b) * h);
    }
  }

  const bool rg = needs(x) || needs(w.w_ih) || needs(w.w_hh) || needs(w.b_ih) || needs(w.b_hh) || needs(h0);
  auto outv = g.record(std::move(out), rg);
  if (outv->requires_grad) {
    Node<T>* o = outv.get();
    outv->backward_fn = [o, x, w, h0, cache, bsz, len, d, h, h3, rows, reverse] {
      Tensor<T> dgi({static_cast<int>(rows), h3});
      Tensor<T> dgh({bsz, h3});
      Tensor<T> dh_next({bsz, h});
      Tensor<T> hp_buf({bsz, h});
      Tensor<T>* dwhh = needs(w.w_hh) ? &w.w_hh->ensure_grad() : nullptr;
      Tensor<T>* dbhh = needs(w.b_hh) ? &w.b_hh->ensure_grad() : nullptr;
      for (int s = len - 1; s >= 0; --s) {
        const int t = reverse ? len - 1 - s : s;
        const int tp = reverse ? t + 1 : t - 1;  // step that produced h_prev
        for (int b = 0; b < bsz; ++b) {
          T* hp = hp_buf.ptr() + static_cast<std::size_t>(b) * h;
          if (s == 0) {
            if (h0) {
              std::copy_n(h0->value.ptr() + static_cast<std::size_t>(b) * h, h, hp);
            } else {
              std::fill_n(hp, h, T(0));
            }
          } else {
            std::copy_n(o->value.ptr() + (static_cast<std::size_t>(b) * len + tp) * h, h, hp);
          }
        }
        for (int b = 0; b < bsz; ++b) {
          const std::size_t row = static_cast<std::size_t>(b) * len + t;
          const T* cr = cache->ptr() + row * 4 * h;
          const T* hp = hp_buf.ptr() + static_cast<std::size_t>(b) * h;
          const T* go = o->grad.ptr() + row * h;
          T* dn_ = dh_next.ptr() + static_cast<std::size_t>(b) * h;
          T* dgir = dgi.ptr() + row * h3;
          T* dghr = dgh.ptr() + static_cast<std::size_t>(b) * h3;
          for (int k = 0; k < h; ++k) {
            const T r = cr[k], z = cr[h + k], n = cr[2 * h + k], ghn = cr[3 * h + k];
            const T dh = go[k] + dn_[k];
            const T dnv = dh * (T(1) - z);
            const T dz = dh * (hp[k] - n);
            const T dan = dnv * (T(1) - n * n);
            const T dr = dan * ghn;
            const T dar = dr * r * (T(1) - r);
            const T daz = dz * z * (T(1) - z);
            dgir[k] = dar;
            dgir[h + k] = daz;
            dgir[2 * h + k] = dan;
            dghr[k] = dar;
            dghr[h + k] = daz;
            dghr[2 * h + k] = dan * r;
            dn_[k] = dh * z;
          }
        }
        matmul_nn_acc(dgh.ptr(), w.w_hh->value.ptr(), dh_next.ptr(), bsz, h3, h);
        if (dwhh) matmul_tn_acc(dgh.ptr(), hp_buf.ptr(), dwhh->ptr(), bsz, h3, h);
        if (dbhh) {
          for (int b = 0; b < bsz; ++b) {
            for (int k = 0; k < h3; ++k) (*dbhh)[k] += dgh[static_cast<std::size_t>(b) * h3 + k];
          }
        }
      }
      if (needs(w.w_ih)) {
        matmul_tn_acc(dgi.ptr(), x->value.ptr(), w.w_ih->ensure_grad().ptr(), static_cast<int>(rows), h3, d);
      }
      if (needs(w.b_ih)) {
        Tensor<T>& bg = w.b_ih->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (int k = 0; k < h3; ++k) bg[k] += dgi[r * h3 + k];
        }
      }
      if (needs(x)) {
        Tensor<T> dx(x->value.shape());
        matmul_nn_acc(dgi.ptr(), w.w_ih->value.ptr(), dx.ptr(), static_cast<int>(rows), h3, d);
        accumulate(x, dx);
      }
      if (needs(h0)) accumulate(h0, dh_next);
    };
  }
  return outv;
}

template <typename T>
Var<T> apply_complex_mask(Graph<T>& g, const Var<T>& mask_residual, const Var<T>& x) {
  require_same(mask_residual, x, "apply_complex_mask");
  const int c = x->value.dim(0);
  if (c % 2 != 0) throw ValidationError("apply_complex_mask: channel count must be even (re/im pairs)");
  const std::size_t plane = x->value.size() / static_cast<std::size_t>(c);
  Tensor<T> v(x->value.shape());
  for (int p = 0; p < c / 2; ++p) {
    const std::size_t re = static_cast<std::size_t>(2 * p) * plane, im = re + plane;
    for (std::size_t k = 0; k < plane; ++k) {
      const T mr = T(1) + mask_residual->value[re + k], mi = mask_residual->value[im + k];
      const T xr = x->value[re + k], xi = x->value[im + k];
      v[re + k] = mr * xr - mi * xi;
      v[im + k] = mr * xi + mi * xr;
    }
  }
  auto out = g.record(std::move(v), needs(mask_residual) || needs(x));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    out->backward_fn = [o, mask_residual, x, c, plane] {
      Tensor<T> dm(x->value.shape()), dx(x->value.shape());
      for (int p = 0; p < c / 2; ++p) {
        const std::size_t re = static_cast<std::size_t>(2 * p) * plane, im = re + plane;
        for (std::size_t k = 0; k < plane; ++k) {
          const T mr = T(1) + mask_residual->value[re + k], mi = mask_residual->value[im + k];
          const T xr = x->value[re + k], xi = x->value[im + k];
          const T gr = o->grad[re + k], gim = o->grad[im + k];
          dm[re + k] = gr * xr + gim * xi;
          dm[im + k] = -gr * xi + gim * xr;
          dx[re + k] = gr * mr + gim * mi;
          dx[im + k] = -gr * mi + gim * mr;
        }
      }
      accumulate(mask_residual, dm);
      accumulate(x, dx);
    };
  }
  return out;
}

template <typename T>
Var<T> apply_linear(Graph<T>& g, const Var<T>& x, const LinearOperator<T>& op) {
  Tensor<T> v = op.forward(x->value);
  auto out = g.record(std::move(v), needs(x));
  if (out->requires_grad) {
    Node<T>* o = out.get();
    auto adj = op.adjoint;
    out->backward_fn = [o, x, adj] { accumulate(x, adj(o->grad)); };
  }
  return out;
}

template <typename T>
Var<T> mse(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  auto d = sub(g, a, b);
  return mean(g, mul(g, d, d));
}

#define MBTF_INSTANTIATE(T)                                                                                       \
  template Var<T> add(Graph<T>&, const Var<T>&, const Var<T>&);                                                 \
  template Var<T> sub(Graph<T>&, const Var<T>&, const Var<T>&);                                                 \
  template Var<T> mul(Graph<T>&, const Var<T>&, const Var<T>&);                                                 \
  template Var<T> scale(Graph<T>&, const Var<T>&, T);                                                           \
  template Var<T> sum(Graph<T>&, const Var<T>&);                                                                \
  template Var<T> mean(Graph<T>&, const Var<T>&);                                                               \
  template Var<T> sigmoid(Graph<T>&, const Var<T>&);                                                            \
  template Var<T> tanh(Graph<T>&, const Var<T>&);                                                               \
  template Var<T> prelu(Graph<T>&, const Var<T>&, const Var<T>&);                                               \
  template Var<T> reshape(Graph<T>&, const Var<T>&, Shape);                                                     \
  template Var<T> permute3(Graph<T>&, const Var<T>&, std::array<int, 3>);                                       \
  template Var<T> concat0(Graph<T>&, const std::vector<Var<T>>&);                                               \
  template Var<T> slice0(Graph<T>&, const Var<T>&, int, int);                                                   \
  template Var<T> concat_last(Graph<T>&, const std::vector<Var<T>>&);                                           \
  template Var<T> slice_last(Graph<T>&, const Var<T>&, int, int);                                               \
  template Var<T> mul_broadcast_last(Graph<T>&, const Var<T>&, const Var<T>&);                                  \
  template Var<T> conv2d(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&, const ConvGeometry&);          \
  template Var<T> conv_transpose2d(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&, const ConvGeometry&, \
                                   int, int);                                                                   \
  template Var<T> batch_norm(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&,    \
                             const BatchNormOptions&);                                                          \
  template Var<T> linear(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&);                               \
  template Var<T> gru(Graph<T>&, const Var<T>&, const GruWeights<T>&, const Var<T>&, bool);                     \
  template Var<T> apply_complex_mask(Graph<T>&, const Var<T>&, const Var<T>&);                                  \
  template Var<T> apply_linear(Graph<T>&, const Var<T>&, const LinearOperator<T>&);                             \
  template Var<T> mse(Graph<T>&, const Var<T>&, const Var<T>&);

MBTF_INSTANTIATE(float)
MBTF_INSTANTIATE(double)
#undef MBTF_INSTANTIATE

}  // namespace mbtf::nn
