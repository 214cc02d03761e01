#include "mbtf/nn/conv.hpp"

#include <algorithm>
#include <sstream>

namespace mbtf::nn {

void ConvGeometry::validate() const {
  if (kf < 1 || kt < 1 || sf < 1 || st < 1 || df < 1 || dt < 1 || groups < 1) {
    throw ValidationError("conv geometry: kernel/stride/dilation/groups must be positive (" + str() + ")");
  }
  if (pf_lo < 0 || pf_hi < 0 || pt_lo < 0 || pt_hi < 0) {
    throw ValidationError("conv geometry: negative padding (" + str() + ")");
  }
}

std::string ConvGeometry::str() const {
  std::ostringstream os;
  os << "k=(" << kf << ',' << kt << ") s=(" << sf << ',' << st << ") d=(" << df << ',' << dt << ") pf=(" << pf_lo
     << ',' << pf_hi << ") pt=(" << pt_lo << ',' << pt_hi << ") g=" << groups;
  return os.str();
}

ConvGeometry ConvGeometry::same(int kf, int kt, int sf, int df, int dt, bool causal, int groups) {
  ConvGeometry g;
  g.kf = kf;
  g.kt = kt;
  g.sf = sf;
  g.df = df;
  g.dt = dt;
  g.groups = groups;
  const int pad_f = df * (kf - 1);
  g.pf_lo = pad_f / 2;
  g.pf_hi = pad_f - g.pf_lo;
  const int pad_t = dt * (kt - 1);
  if (causal) {
    g.pt_lo = pad_t;
    g.pt_hi = 0;
  } else {
    g.pt_lo = pad_t / 2;
    g.pt_hi = pad_t - g.pt_lo;
  }
  g.validate();
  return g;
}

ConvGeometry ConvGeometry::transposed_same(int kf, int kt, int sf, int df, int dt, bool causal) {
  ConvGeometry g = same(kf, kt, sf, df, dt, causal);
  std::swap(g.pt_lo, g.pt_hi);
  return g;
}

bool operator==(const ConvGeometry& a, const ConvGeometry& b) {
  return a.kf == b.kf && a.kt == b.kt && a.sf == b.sf && a.st == b.st && a.df == b.df && a.dt == b.dt &&
         a.pf_lo == b.pf_lo && a.pf_hi == b.pf_hi && a.pt_lo == b.pt_lo && a.pt_hi == b.pt_hi &&
         a.groups == b.groups;
}

namespace {

struct Dims {
  int ci, f, t, co, fo, to, cig, cog;
};

template <typename T>
Dims check_dims(const Tensor<T>& x, const Tensor<T>& w, const ConvGeometry& g) {
  g.validate();
  require_rank(x, 3, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  Dims d{};
  d.ci = x.dim(0);
  d.f = x.dim(1);
  d.t = x.dim(2);
  d.co = w.dim(0);
  d.cig = w.dim(1);
  if (d.ci % g.groups != 0 || d.co % g.groups != 0) {
    throw ValidationError("conv2d: channels (" + std::to_string(d.ci) + " in, " + std::to_string(d.co) +
                          " out) not divisible by groups " + std::to_string(g.groups));
  }
  if (d.cig * g.groups != d.ci) {
    throw ValidationError("conv2d: input channel dimension " + std::to_string(d.ci) + " does not match weight (" +
                          std::to_string(d.cig) + " per group x " + std::to_string(g.groups) + ")");
  }
  if (w.dim(2) != g.kf || w.dim(3) != g.kt) {
    throw ValidationError("conv2d: kernel dimension mismatch, weight " + shape_str(w.shape()) + " vs " + g.str());
  }
  d.cog = d.co / g.groups;
  d.fo = g.out_f(d.f);
  d.to = g.out_t(d.t);
  if (d.fo < 1) throw ValidationError("conv2d: frequency dimension " + std::to_string(d.f) + " too small");
  if (d.to < 1) throw ValidationError("conv2d: time dimension " + std::to_string(d.t) + " too small");
  return d;
}

// Range of output time indices `to` whose input index to*st + off lies in [0, t).
inline void valid_range(int off, int st, int t, int to, int& lo, int& hi) {
  // need to*st + off >= 0 and to*st + off <= t-1
  lo = off >= 0 ? 0 : (-off + st - 1) / st;
  const int top = t - 1 - off;
  hi = top < 0 ? 0 : std::min(to, top / st + 1);
  if (lo > hi) lo = hi;
}

// Visits every (output row, input row, weight) triple with the time offset.
template <typename T, typename Fn>
void for_each_tap(const Dims& d, const ConvGeometry& g, Fn&& fn) {
  for (int co = 0; co < d.co; ++co) {
    const int grp = co / d.cog;
    for (int cl = 0; cl < d.cig; ++cl) {
      const int ci = grp * d.cig + cl;
      for (int i = 0; i < g.kf; ++i) {
        for (int fo = 0; fo < d.fo; ++fo) {
          const int fi = fo * g.sf + i * g.df - g.pf_lo;
          if (fi < 0 || fi >= d.f) continue;
          for (int j = 0; j < g.kt; ++j) {
            const int off = j * g.dt - g.pt_lo;
            int lo, hi;
            valid_range(off, g.st, d.t, d.to, lo, hi);
            if (lo >= hi) continue;
            const std::size_t widx = ((static_cast<std::size_t>(co) * d.cig + cl) * g.kf + i) * g.kt + j;
            const std::size_t orow = (static_cast<std::size_t>(co) * d.fo + fo) * d.to;
            const std::size_t irow = (static_cast<std::size_t>(ci) * d.f + fi) * d.t;
            fn(widx, orow, irow, off, lo, hi);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const std::type_identity_t<Tensor<T>>* bias,
                         const ConvGeometry& g) {
  const Dims d = check_dims(x, w, g);
  Tensor<T> out({d.co, d.fo, d.to});
  if (bias && !bias->empty()) {
    require_shape(*bias, {d.co}, "conv2d bias");
    for (int co = 0; co < d.co; ++co) {
      std::fill_n(out.ptr() + static_cast<std::size_t>(co) * d.fo * d.to, static_cast<std::size_t>(d.fo) * d.to,
                  (*bias)[co]);
    }
  }
  const T* xp = x.ptr();
  const T* wp = w.ptr();
  T* op = out.ptr();
  const int st = g.st;
  for_each_tap<T>(d, g, [&](std::size_t widx, std::size_t orow, std::size_t irow, int off, int lo, int hi) {
    const T wv = wp[widx];
    if (wv == T(0)) return;
    T* o = op + orow;
    const T* in = xp + irow + off;
    if (st == 1) {
      for (int to = lo; to < hi; ++to) o[to] += wv * in[to];
    } else {
      for (int to = lo; to < hi; ++to) o[to] += wv * in[to * st];
    }
  });
  return out;
}

template <typename T>
Tensor<T> conv2d_input_adjoint(const Tensor<T>& gout, const Tensor<T>& w, const ConvGeometry& g, int c_in, int f,
                               int t) {
  Tensor<T> probe({c_in, f, t});
  const Dims d = check_dims(probe, w, g);
  require_shape(gout, {d.co, d.fo, d.to}, "transposed conv input");
  Tensor<T> gin({c_in, f, t});
  const T* gp = gout.ptr();
  const T* wp = w.ptr();
  T* ip = gin.ptr();
  const int st = g.st;
  for_each_tap<T>(d, g, [&](std::size_t widx, std::size_t orow, std::size_t irow, int off, int lo, int hi) {
    const T wv = wp[widx];
    const T* o = gp + orow;
    T* in = ip + irow + off;
    if (st == 1) {
      for (int to = lo; to < hi; ++to) in[to] += wv * o[to];
    } else {
      for (int to = lo; to < hi; ++to) in[to * st] += wv * o[to];
    }
  });
  return gin;
}

template <typename T>
void conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& gout, const ConvGeometry& g, Tensor<T>& wgrad) {
  const Dims d = check_dims(x, wgrad, g);
  require_shape(gout, {d.co, d.fo, d.to}, "conv2d output gradient");
  const T* xp = x.ptr();
  const T* gp = gout.ptr();
  T* wp = wgrad.ptr();
  const int st = g.st;
  for_each_tap<T>(d, g, [&](std::size_t widx, std::size_t orow, std::size_t irow, int off, int lo, int hi) {
    const T* o = gp + orow;
    const T* in = xp + irow + off;
    T acc = 0;
    if (st == 1) {
      for (int to = lo; to < hi; ++to) acc += o[to] * in[to];
    } else {
      for (int to = lo; to < hi; ++to) acc += o[to] * in[to * st];
    }
    wp[widx] += acc;
  });
}

template <typename T>
void bias_grad(const Tensor<T>& gout, Tensor<T>& bgrad) {
  const int c = gout.dim(0);
  const std::size_t plane = gout.size() / static_cast<std::size_t>(c);
  for (int i = 0; i < c; ++i) {
    T acc = 0;
    const T* p = gout.ptr() + static_cast<std::size_t>(i) * plane;
    for (std::size_t k = 0; k < plane; ++k) acc += p[k];
    bgrad[static_cast<std::size_t>(i)] += acc;
  }
}

#define MBTF_INSTANTIATE(T)                                                                                        \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvGeometry&);   \
  template Tensor<T> conv2d_input_adjoint(const Tensor<T>&, const Tensor<T>&, const ConvGeometry&, int, int, int); \
  template void conv2d_weight_grad(const Tensor<T>&, const Tensor<T>&, const ConvGeometry&, Tensor<T>&);          \
  template void bias_grad(const Tensor<T>&, Tensor<T>&);

MBTF_INSTANTIATE(float)
MBTF_INSTANTIATE(double)
#undef MBTF_INSTANTIATE

}  // namespace mbtf::nn
