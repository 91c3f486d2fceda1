#pragma once

// Minimal layer library with explicit forward/backward passes. Layers cache
// what their backward pass needs from the most recent forward call; a
// backward call must follow the matching forward. Scalar type T is float
// for training and double for gradient checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "shapepoint/rng.hpp"
#include "shapepoint/volume.hpp"

namespace shapepoint::nn {

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(numel(shape), fill);
  }

  static std::size_t numel(const std::vector<int>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](std::size_t i) { return data[i]; }
  T operator[](std::size_t i) const { return data[i]; }

  // Feature-map view: shape {C, D, H, W}.
  int channels() const { return shape.at(0); }
  Dims spatial() const { return {shape.at(1), shape.at(2), shape.at(3)}; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

template <typename T>
Tensor<T> feature_map(int c, Dims d, T fill = T(0)) {
  return Tensor<T>({c, d.d, d.h, d.w}, fill);
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  Tensor<To> out;
  out.shape = t.shape;
  out.data.assign(t.data.begin(), t.data.end());
  return out;
}

// Named trainable tensor with its accumulated gradient.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, std::vector<int> shape) : name(std::move(n)), value(shape), grad(shape) {}
  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

// Uniform Xavier/Glorot initialization.
template <typename T>
void xavier_uniform(Param<T>& p, int fan_in, int fan_out, Rng& rng);

// -- layers -------------------------------------------------------------------------------

template <typename T>
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(const std::string& name, int cin, int cout, int k);

  Tensor<T> forward(const Tensor<T>& x);
  // Accumulates weight/bias gradients; returns dL/dx unless need_dx is false.
  Tensor<T> backward(const Tensor<T>& dy, bool need_dx = true);
  void init(Rng& rng);
  void params(ParamList<T>& out) { out.push_back(&weight); out.push_back(&bias); }

  int cin = 0, cout = 0, k = 3;
  Param<T> weight, bias;

 private:
  Tensor<T> input_;
};

// Stride-2, kernel-2 transposed convolution (exact 2x upsampling).
template <typename T>
class ConvTranspose3d {
 public:
  ConvTranspose3d() = default;
  ConvTranspose3d(const std::string& name, int cin, int cout);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  void init(Rng& rng);
  void params(ParamList<T>& out) { out.push_back(&weight); out.push_back(&bias); }

  int cin = 0, cout = 0;
  Param<T> weight, bias;  // weight [cin][cout][2][2][2]

 private:
  Tensor<T> input_;
};

// Per-channel normalization over the spatial extent of one sample with an
// affine transform; identical in training and inference.
template <typename T>
class InstanceNorm {
 public:
  InstanceNorm() = default;
  InstanceNorm(const std::string& name, int channels, T eps = T(1e-5));

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  void params(ParamList<T>& out) { out.push_back(&gamma); out.push_back(&beta); }

  Param<T> gamma, beta;

 private:
  T eps_ = T(1e-5);
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

// y = x W^T + b over rows; x is [N][in].
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy, bool accumulate_params = true);
  void init(Rng& rng);
  void zero_init() { weight.value.fill(T(0)); bias.value.fill(T(0)); }
  void params(ParamList<T>& out) { out.push_back(&weight); out.push_back(&bias); }

  int in = 0, out = 0;
  Param<T> weight, bias;  // weight [out][in]

 private:
  Tensor<T> input_;
};

// 2x2x2 max pooling, stride 2.
template <typename T>
class MaxPool {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  std::vector<std::size_t> argmax_;
  std::vector<int> in_shape_;
};

// In-place rectifier; backward uses the stored output.
template <typename T>
class ReLU {
 public:
  void forward_inplace(Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy) const;

 private:
  Tensor<T> out_;
};

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample_nearest2_backward(const Tensor<T>& dy);

// Channel concatenation of two maps with equal spatial dims.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
void split_channels(const Tensor<T>& d, int ca, Tensor<T>& da, Tensor<T>& db);

template <typename T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

// In-place add: a += b.
template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);

// -- optimizer ------------------------------------------------------------------------------

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(ParamList<T> params, AdamConfig cfg);
  void step();
  void zero_grad();
  std::int64_t steps() const { return t_; }

 private:
  ParamList<T> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace shapepoint::nn
