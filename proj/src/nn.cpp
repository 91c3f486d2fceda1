#include "shapepoint/nn.hpp"

#include <cmath>

#include "shapepoint/errors.hpp"
#include "shapepoint/kernels.hpp"

namespace shapepoint::nn {

template <typename T>
void xavier_uniform(Param<T>& p, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : p.value.data) v = static_cast<T>(rng.uniform(-limit, limit));
}

// -- Conv3d -------------------------------------------------------------------------------

template <typename T>
Conv3d<T>::Conv3d(const std::string& name, int cin_, int cout_, int k_)
    : cin(cin_), cout(cout_), k(k_), weight(name + ".weight", {cout_, cin_, k_, k_, k_}), bias(name + ".bias", {cout_}) {}

template <typename T>
void Conv3d<T>::init(Rng& rng) {
  const int taps = k * k * k;
  xavier_uniform(weight, cin * taps, cout * taps, rng);
  bias.value.fill(T(0));
}

template <typename T>
Tensor<T> Conv3d<T>::forward(const Tensor<T>& x) {
  if (x.shape.size() != 4 || x.channels() != cin)
    throw ShapeError(weight.name + ": expected " + std::to_string(cin) + " input channels");
  input_ = x;
  const Dims d = x.spatial();
  Tensor<T> y = feature_map<T>(cout, d);
  kernels::conv3d_forward<T>({cin, cout, k, d}, x.ptr(), weight.value.ptr(), bias.value.ptr(), y.ptr());
  return y;
}

template <typename T>
Tensor<T> Conv3d<T>::backward(const Tensor<T>& dy, bool need_dx) {
  const Dims d = input_.spatial();
  Tensor<T> dx;
  if (need_dx) dx = feature_map<T>(cin, d);
  kernels::conv3d_backward<T>({cin, cout, k, d}, input_.ptr(), weight.value.ptr(), dy.ptr(),
                              need_dx ? dx.ptr() : nullptr, weight.grad.ptr(), bias.grad.ptr());
  return dx;
}

// -- ConvTranspose3d ------------------------------------------------------------------------

template <typename T>
ConvTranspose3d<T>::ConvTranspose3d(const std::string& name, int cin_, int cout_)
    : cin(cin_), cout(cout_), weight(name + ".weight", {cin_, cout_, 2, 2, 2}), bias(name + ".bias", {cout_}) {}

template <typename T>
void ConvTranspose3d<T>::init(Rng& rng) {
  xavier_uniform(weight, cin * 8, cout * 8, rng);
  bias.value.fill(T(0));
}

template <typename T>
Tensor<T> ConvTranspose3d<T>::forward(const Tensor<T>& x) {
  if (x.shape.size() != 4 || x.channels() != cin) throw ShapeError(weight.name + ": bad input channels");
  input_ = x;
  const Dims d = x.spatial();
  const Dims o{2 * d.d, 2 * d.h, 2 * d.w};
  Tensor<T> y = feature_map<T>(cout, o);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    T* out = y.ptr() + co * o.voxels();
    for (std::size_t i = 0; i < o.voxels(); ++i) out[i] = bias.value[co];
    for (int ci = 0; ci < cin; ++ci) {
      const T* in = x.ptr() + ci * d.voxels();
      const T* w = weight.value.ptr() + (static_cast<std::size_t>(ci) * cout + co) * 8;
      for (int z = 0; z < d.d; ++z)
        for (int yy = 0; yy < d.h; ++yy)
          for (int xx = 0; xx < d.w; ++xx) {
            const T v = in[d.index(z, yy, xx)];
            for (int t = 0; t < 8; ++t)
              out[o.index(2 * z + (t >> 2), 2 * yy + ((t >> 1) & 1), 2 * xx + (t & 1))] += v * w[t];
          }
    }
  }
  return y;
}

template <typename T>
Tensor<T> ConvTranspose3d<T>::backward(const Tensor<T>& dy) {
  const Dims d = input_.spatial();
  const Dims o{2 * d.d, 2 * d.h, 2 * d.w};
  Tensor<T> dx = feature_map<T>(cin, d);
  for (int co = 0; co < cout; ++co) {
    const T* g = dy.ptr() + co * o.voxels();
    T s = T(0);
    for (std::size_t i = 0; i < o.voxels(); ++i) s += g[i];
    bias.grad[co] += s;
  }
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci) {
    const T* in = input_.ptr() + ci * d.voxels();
    T* gx = dx.ptr() + ci * d.voxels();
    for (int co = 0; co < cout; ++co) {
      const T* g = dy.ptr() + co * o.voxels();
      const T* w = weight.value.ptr() + (static_cast<std::size_t>(ci) * cout + co) * 8;
      T* gw = weight.grad.ptr() + (static_cast<std::size_t>(ci) * cout + co) * 8;
      for (int z = 0; z < d.d; ++z)
        for (int yy = 0; yy < d.h; ++yy)
          for (int xx = 0; xx < d.w; ++xx) {
            const std::size_t i = d.index(z, yy, xx);
            for (int t = 0; t < 8; ++t) {
              const T gv = g[o.index(2 * z + (t >> 2), 2 * yy + ((t >> 1) & 1), 2 * xx + (t & 1))];
              gx[i] += gv * w[t];
              gw[t] += gv * in[i];
            }
          }
    }
  }
  return dx;
}

// -- InstanceNorm ---------------------------------------------------------------------------

template <typename T>
InstanceNorm<T>::InstanceNorm(const std::string& name, int channels, T eps)
    : gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}), eps_(eps) {
  gamma.value.fill(T(1));
}

template <typename T>
Tensor<T> InstanceNorm<T>::forward(const Tensor<T>& x) {
  const int c = x.channels();
  if (c != static_cast<int>(gamma.value.size())) throw ShapeError(gamma.name + ": channel mismatch");
  const std::size_t n = x.spatial().voxels();
  xhat_ = x;
  inv_std_.assign(c, T(0));
  Tensor<T> y(x.shape);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const T* in = x.ptr() + ch * n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += in[i];
    const double mean = s / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (in[i] - mean) * (in[i] - mean);
    const double inv = 1.0 / std::sqrt(ss / n + static_cast<double>(eps_));
    inv_std_[ch] = static_cast<T>(inv);
    T* xh = xhat_.ptr() + ch * n;
    T* out = y.ptr() + ch * n;
    const T g = gamma.value[ch], b = beta.value[ch];
    for (std::size_t i = 0; i < n; ++i) {
      xh[i] = static_cast<T>((in[i] - mean) * inv);
      out[i] = g * xh[i] + b;
    }
  }
  return y;
}

template <typename T>
Tensor<T> InstanceNorm<T>::backward(const Tensor<T>& dy) {
  const int c = xhat_.channels();
  const std::size_t n = xhat_.spatial().voxels();
  Tensor<T> dx(xhat_.shape);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const T* g = dy.ptr() + ch * n;
    const T* xh = xhat_.ptr() + ch * n;
    double sg = 0.0, sgx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sg += g[i];
      sgx += g[i] * xh[i];
    }
    gamma.grad[ch] += static_cast<T>(sgx);
    beta.grad[ch] += static_cast<T>(sg);
    // with dxhat = gamma * dy
    const double gm = gamma.value[ch];
    const double scale = gm * static_cast<double>(inv_std_[ch]) / static_cast<double>(n);
    T* out = dx.ptr() + ch * n;
    for (std::size_t i = 0; i < n; ++i)
      out[i] = static_cast<T>(scale * (static_cast<double>(n) * g[i] - sg - xh[i] * sgx));
  }
  return dx;
}

// -- Linear ----------------------------------------------------------------------------------

template <typename T>
Linear<T>::Linear(const std::string& name, int in_, int out_)
    : in(in_), out(out_), weight(name + ".weight", {out_, in_}), bias(name + ".bias", {out_}) {}

template <typename T>
void Linear<T>::init(Rng& rng) {
  xavier_uniform(weight, in, out, rng);
  bias.value.fill(T(0));
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  if (x.shape.size() != 2 || x.shape[1] != in)
    throw ShapeError(weight.name + ": expected rows of width " + std::to_string(in));
  input_ = x;
  const int rows = x.shape[0];
  Tensor<T> y({rows, out});
  const T* w = weight.value.ptr();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + static_cast<std::size_t>(r) * in;
    T* yr = y.ptr() + static_cast<std::size_t>(r) * out;
    for (int o = 0; o < out; ++o) {
      const T* wo = w + static_cast<std::size_t>(o) * in;
      T s = T(0);
#pragma omp simd reduction(+ : s)
      for (int i = 0; i < in; ++i) s += wo[i] * xr[i];
      yr[o] = s + bias.value[o];
    }
  }
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy, bool accumulate_params) {
  const int rows = input_.shape[0];
  Tensor<T> dx({rows, in});
  const T* w = weight.value.ptr();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const T* g = dy.ptr() + static_cast<std::size_t>(r) * out;
    T* dxr = dx.ptr() + static_cast<std::size_t>(r) * in;
    for (int o = 0; o < out; ++o) {
      const T go = g[o];
      if (go == T(0)) continue;
      const T* wo = w + static_cast<std::size_t>(o) * in;
#pragma omp simd
      for (int i = 0; i < in; ++i) dxr[i] += go * wo[i];
    }
  }
  if (accumulate_params) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out; ++o) {
      T* gw = weight.grad.ptr() + static_cast<std::size_t>(o) * in;
      T gb = T(0);
      for (int r = 0; r < rows; ++r) {
        const T go = dy[static_cast<std::size_t>(r) * out + o];
        gb += go;
        if (go == T(0)) continue;
        const T* xr = input_.ptr() + static_cast<std::size_t>(r) * in;
#pragma omp simd
        for (int i = 0; i < in; ++i) gw[i] += go * xr[i];
      }
      bias.grad[o] += gb;
    }
  }
  return dx;
}

// -- pooling, activations, resampling ---------------------------------------------------------

template <typename T>
Tensor<T> MaxPool<T>::forward(const Tensor<T>& x) {
  const Dims d = x.spatial();
  if (d.d % 2 || d.h % 2 || d.w % 2) throw ShapeError("max pool: spatial dims must be even, got " + d.str());
  const int c = x.channels();
  const Dims o{d.d / 2, d.h / 2, d.w / 2};
  in_shape_ = x.shape;
  Tensor<T> y = feature_map<T>(c, o);
  argmax_.assign(y.size(), 0);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch)
    for (int z = 0; z < o.d; ++z)
      for (int yy = 0; yy < o.h; ++yy)
        for (int xx = 0; xx < o.w; ++xx) {
          std::size_t best = ch * d.voxels() + d.index(2 * z, 2 * yy, 2 * xx);
          for (int t = 1; t < 8; ++t) {
            const std::size_t i = ch * d.voxels() + d.index(2 * z + (t >> 2), 2 * yy + ((t >> 1) & 1), 2 * xx + (t & 1));
            if (x[i] > x[best]) best = i;
          }
          const std::size_t oi = ch * o.voxels() + o.index(z, yy, xx);
          y[oi] = x[best];
          argmax_[oi] = best;
        }
  return y;
}

template <typename T>
Tensor<T> MaxPool<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(in_shape_);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax_[i]] += dy[i];
  return dx;
}

template <typename T>
void ReLU<T>::forward_inplace(Tensor<T>& x) {
  for (auto& v : x.data) v = v > T(0) ? v : T(0);
  out_ = x;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy) const {
  Tensor<T> dx(dy.shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = out_[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  const Dims d = x.spatial();
  const Dims o{2 * d.d, 2 * d.h, 2 * d.w};
  const int c = x.channels();
  Tensor<T> y = feature_map<T>(c, o);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch)
    for (int z = 0; z < o.d; ++z)
      for (int yy = 0; yy < o.h; ++yy)
        for (int xx = 0; xx < o.w; ++xx)
          y[ch * o.voxels() + o.index(z, yy, xx)] = x[ch * d.voxels() + d.index(z / 2, yy / 2, xx / 2)];
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2_backward(const Tensor<T>& dy) {
  const Dims o = dy.spatial();
  const Dims d{o.d / 2, o.h / 2, o.w / 2};
  const int c = dy.channels();
  Tensor<T> dx = feature_map<T>(c, d);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch)
    for (int z = 0; z < d.d; ++z)
      for (int yy = 0; yy < d.h; ++yy)
        for (int xx = 0; xx < d.w; ++xx) {
          T s = T(0);
          for (int t = 0; t < 8; ++t)
            s += dy[ch * o.voxels() + o.index(2 * z + (t >> 2), 2 * yy + ((t >> 1) & 1), 2 * xx + (t & 1))];
          dx[ch * d.voxels() + d.index(z, yy, xx)] = s;
        }
  return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.spatial() == b.spatial())) throw ShapeError("concat: spatial dims differ");
  Tensor<T> y = feature_map<T>(a.channels() + b.channels(), a.spatial());
  std::copy(a.data.begin(), a.data.end(), y.data.begin());
  std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return y;
}

template <typename T>
void split_channels(const Tensor<T>& d, int ca, Tensor<T>& da, Tensor<T>& db) {
  const Dims s = d.spatial();
  da = feature_map<T>(ca, s);
  db = feature_map<T>(d.channels() - ca, s);
  std::copy(d.data.begin(), d.data.begin() + static_cast<std::ptrdiff_t>(da.size()), da.data.begin());
  std::copy(d.data.begin() + static_cast<std::ptrdiff_t>(da.size()), d.data.end(), db.data.begin());
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  if (a.size() != b.size()) throw ShapeError("add: size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

// -- Adam -----------------------------------------------------------------------------------------

template <typename T>
Adam<T>::Adam(ParamList<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double step = cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      p.value[i] = static_cast<T>(p.value[i] - step);
    }
  }
}

#define SHAPEPOINT_NN_INSTANTIATE(T)                                                 \
  template void xavier_uniform<T>(Param<T>&, int, int, Rng&);                        \
  template class Conv3d<T>;                                                          \
  template class ConvTranspose3d<T>;                                                 \
  template class InstanceNorm<T>;                                                    \
  template class Linear<T>;                                                          \
  template class MaxPool<T>;                                                         \
  template class ReLU<T>;                                                            \
  template class Adam<T>;                                                            \
  template Tensor<T> upsample_nearest2<T>(const Tensor<T>&);                         \
  template Tensor<T> upsample_nearest2_backward<T>(const Tensor<T>&);                \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);         \
  template void split_channels<T>(const Tensor<T>&, int, Tensor<T>&, Tensor<T>&);    \
  template void add_inplace<T>(Tensor<T>&, const Tensor<T>&);

SHAPEPOINT_NN_INSTANTIATE(float)
SHAPEPOINT_NN_INSTANTIATE(double)

}  // namespace shapepoint::nn
