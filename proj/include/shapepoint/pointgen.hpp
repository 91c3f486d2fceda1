#pragma once

// Surface point generators driven by the backbone's feature pyramid. Point
// sets travel through the networks as {N, 3} tensors in normalized (z, y, x)
// coordinates.

#include <memory>
#include <string>

#include "shapepoint/backbone.hpp"
#include "shapepoint/nn.hpp"
#include "shapepoint/surface.hpp"

namespace shapepoint::pointgen {

template <typename T>
nn::Tensor<T> to_tensor(const PointSet& p);
template <typename T>
PointSet to_pointset(const nn::Tensor<T>& t);

template <typename T>
struct PyramidGrad {
  nn::Tensor<T> d_xc;
  nn::Tensor<T> d_xf;
};

template <typename T>
class PointGenerator {
 public:
  virtual ~PointGenerator() = default;
  virtual nn::Tensor<T> forward(const backbone::FeaturePyramid<T>& pyr) = 0;
  // Gradient of the loss w.r.t. the last forward's output; accumulates
  // parameter gradients and returns pyramid gradients (empty when unused).
  virtual PyramidGrad<T> backward(const nn::Tensor<T>& d_points) = 0;
  virtual void init(Rng& rng) = 0;
  virtual void params(nn::ParamList<T>& out) = 0;
  virtual int n_points() const = 0;
};

// P = sigmoid(MLP(global average pool of X_C)), reshaped to {N, 3}.
template <typename T>
class InitPoints {
 public:
  InitPoints() = default;
  InitPoints(int coarse_channels, int n_points, int hidden1 = 256, int hidden2 = 256);

  nn::Tensor<T> forward(const nn::Tensor<T>& x_c);
  nn::Tensor<T> backward(const nn::Tensor<T>& d_points);  // returns dL/dX_C
  void init(Rng& rng);
  void params(nn::ParamList<T>& out);

  nn::Linear<T> fc1, fc2, fc3;

 private:
  int n_ = 0;
  std::vector<int> xc_shape_;
  nn::ReLU<T> relu1_, relu2_;
  nn::Tensor<T> out_;
};

// Parameter-free gather of the 3x3x3 neighbourhood around the nearest voxel
// of every point; features are laid out f[c * 27 + k] with
// k = 9 (dz + 1) + 3 (dy + 1) + (dx + 1). Cells outside the grid are zero.
template <typename T>
class FeatureIndex {
 public:
  nn::Tensor<T> forward(const nn::Tensor<T>& x_f, const nn::Tensor<T>& points);
  // Scatter-adds into a zero map shaped like X_F; no coordinate gradient.
  nn::Tensor<T> backward(const nn::Tensor<T>& d_features) const;

 private:
  std::vector<int> xf_shape_;
  std::vector<std::array<int, 3>> centers_;
};

// Nearest voxel index for a normalized coordinate on an axis of length n.
int nearest_index(double coord, int n);

// P <- clamp(P + F_r(feature_index(X_F, P)), 0, 1) with a zero-initialized
// output layer.
template <typename T>
class Refiner {
 public:
  Refiner() = default;
  Refiner(const std::string& name, int fine_channels, int hidden1 = 128, int hidden2 = 64);

  nn::Tensor<T> forward(const nn::Tensor<T>& x_f, const nn::Tensor<T>& points);
  // Returns dL/dP_in; adds dL/dX_F into d_xf (allocated on first use).
  nn::Tensor<T> backward(const nn::Tensor<T>& d_out, nn::Tensor<T>& d_xf);
  void init(Rng& rng);
  void params(nn::ParamList<T>& out);

  nn::Linear<T> fc1, fc2, fc3;

 private:
  FeatureIndex<T> index_;
  nn::ReLU<T> relu1_, relu2_;
  std::vector<std::uint8_t> pass_;  // 1 where the clamp was inactive
};

struct PointNetConfig {
  int n_points = static_cast<int>(surface::kDefaultPoints);
  int init_hidden1 = 256;
  int init_hidden2 = 256;
  int refine_hidden1 = 128;
  int refine_hidden2 = 64;
};

// Initialization followed by two residual refinements.
template <typename T>
class PointNetwork final : public PointGenerator<T> {
 public:
  PointNetwork(int coarse_channels, int fine_channels, PointNetConfig cfg = {});

  nn::Tensor<T> forward(const backbone::FeaturePyramid<T>& pyr) override;
  PyramidGrad<T> backward(const nn::Tensor<T>& d_points) override;
  void init(Rng& rng) override;
  void params(nn::ParamList<T>& out) override;
  int n_points() const override { return cfg_.n_points; }

  nn::Tensor<T> init_output() const { return p0_; }

  InitPoints<T> init_points;
  Refiner<T> r1, r2;

 private:
  PointNetConfig cfg_;
  nn::Tensor<T> p0_;
};

// Global-information-only baseline. Branch 1 is a fully connected path on
// flattened X_C emitting N/2 points; branch 2 upsamples X_C with a stride-2
// transposed convolution and a 1x1 convolution whose 3m output channels give
// m points per cell, keeping the first N/2 in cell-major order.
template <typename T>
class TwoBranch final : public PointGenerator<T> {
 public:
  TwoBranch(int coarse_channels, Dims coarse_dims, int n_points, int hidden = 256, int deconv_channels = 16);

  nn::Tensor<T> forward(const backbone::FeaturePyramid<T>& pyr) override;
  PyramidGrad<T> backward(const nn::Tensor<T>& d_points) override;
  void init(Rng& rng) override;
  void params(nn::ParamList<T>& out) override;
  int n_points() const override { return n_; }

 private:
  int n_ = 0;
  int per_cell_ = 1;
  Dims coarse_;
  nn::Linear<T> fc1_, fc2_;
  nn::ReLU<T> relu_fc_;
  nn::ConvTranspose3d<T> deconv_;
  nn::ReLU<T> relu_deconv_;
  nn::Conv3d<T> proj_;
  std::vector<int> xc_shape_;
  std::vector<int> grid_shape_;
  nn::Tensor<T> out_;
};

}  // namespace shapepoint::pointgen
