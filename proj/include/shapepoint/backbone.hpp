#pragma once

// 3D encoder-decoder segmentation network: three max-pool downsamplings,
// nearest upsamplings, skip connections by channel concatenation.

#include <string>

#include "shapepoint/nn.hpp"
#include "shapepoint/volume.hpp"

namespace shapepoint::backbone {

inline constexpr int kDepth = 3;

struct UNetConfig {
  int base_channels = 8;
  int growth = 2;

  // Channels at level l (0 = full resolution, kDepth = bottleneck).
  int channels(int level) const;
  void validate() const;
};

// Throws ShapeError naming the first axis not divisible by 2^kDepth.
void check_input_dims(Dims d);

template <typename T>
struct FeaturePyramid {
  nn::Tensor<T> x_c;  // bottleneck, dims / 8
  nn::Tensor<T> x_f;  // last decoder map, full resolution
};

template <typename T>
struct UNetOutput {
  FeaturePyramid<T> pyramid;
  nn::Tensor<T> logits;  // {1, D, H, W}
  nn::Tensor<T> prob;    // sigmoid(logits)
};

template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const std::string& name, int cin, int cout);
  nn::Tensor<T> forward(const nn::Tensor<T>& x);
  nn::Tensor<T> backward(const nn::Tensor<T>& dy, bool need_dx = true);
  void init(Rng& rng);
  void params(nn::ParamList<T>& out);

 private:
  nn::Conv3d<T> conv1_, conv2_;
  nn::InstanceNorm<T> norm1_, norm2_;
  nn::ReLU<T> relu1_, relu2_;
};

template <typename T>
class UNet3D {
 public:
  explicit UNet3D(UNetConfig cfg = {});

  void init(Rng& rng);
  UNetOutput<T> forward(const nn::Tensor<T>& input);
  // Gradients w.r.t. X_C, X_F (either may be empty) and the logits.
  // Returns dL/d input when need_dinput is set.
  nn::Tensor<T> backward(const nn::Tensor<T>& d_xc, const nn::Tensor<T>& d_xf, const nn::Tensor<T>& d_logits,
                         bool need_dinput = false);
  void params(nn::ParamList<T>& out);

  const UNetConfig& config() const { return cfg_; }
  int coarse_channels() const { return cfg_.channels(kDepth); }
  int fine_channels() const { return cfg_.channels(0); }

 private:
  UNetConfig cfg_;
  ConvBlock<T> enc_[kDepth];
  nn::MaxPool<T> pool_[kDepth];
  ConvBlock<T> bottleneck_;
  ConvBlock<T> dec_[kDepth];  // dec_[l] produces level l
  nn::Conv3d<T> head_;
};

// Single-channel volume as a {1, D, H, W} tensor.
template <typename T>
nn::Tensor<T> volume_tensor(const VoxelVolume& v);

enum class SegLossKind { kBce, kSoftDice };

template <typename T>
struct SegLoss {
  double value = 0.0;
  nn::Tensor<T> d_prob;
  nn::Tensor<T> d_logits;  // exact logit gradient (zero where the clamp is active)
};

inline constexpr double kProbEps = 1e-7;

// Mean voxel-wise binary cross-entropy with probabilities clamped to
// [eps, 1 - eps]; the soft Dice variant is 1 - (2 sum py + 1) / (sum p + sum y + 1).
template <typename T>
SegLoss<T> seg_loss(const nn::Tensor<T>& prob, const MaskVolume& mask, SegLossKind kind = SegLossKind::kBce);

// Threshold at 0.5.
template <typename T>
MaskVolume threshold(const nn::Tensor<T>& prob, Dims dims);

}  // namespace shapepoint::backbone
