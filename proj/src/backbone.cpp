#include "shapepoint/backbone.hpp"

#include <cmath>

#include "shapepoint/errors.hpp"

namespace shapepoint::backbone {

int UNetConfig::channels(int level) const {
  int c = base_channels;
  for (int i = 0; i < level; ++i) c *= growth;
  return c;
}

void UNetConfig::validate() const {
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (growth < 1) throw ConfigError("growth must be >= 1");
}

void check_input_dims(Dims d) {
  constexpr int f = 1 << kDepth;
  const char* names[3] = {"D", "H", "W"};
  for (int a = 0; a < 3; ++a)
    if (d.axis(a) % f != 0 || d.axis(a) < f)
      throw ShapeError(std::string("input axis ") + names[a] + " = " + std::to_string(d.axis(a)) +
                       " is not a positive multiple of " + std::to_string(f));
}

// -- ConvBlock --------------------------------------------------------------------------

template <typename T>
ConvBlock<T>::ConvBlock(const std::string& name, int cin, int cout)
    : conv1_(name + ".conv1", cin, cout, 3),
      conv2_(name + ".conv2", cout, cout, 3),
      norm1_(name + ".norm1", cout),
      norm2_(name + ".norm2", cout) {}

template <typename T>
nn::Tensor<T> ConvBlock<T>::forward(const nn::Tensor<T>& x) {
  nn::Tensor<T> h = norm1_.forward(conv1_.forward(x));
  relu1_.forward_inplace(h);
  nn::Tensor<T> y = norm2_.forward(conv2_.forward(h));
  relu2_.forward_inplace(y);
  return y;
}

template <typename T>
nn::Tensor<T> ConvBlock<T>::backward(const nn::Tensor<T>& dy, bool need_dx) {
  nn::Tensor<T> g = conv2_.backward(norm2_.backward(relu2_.backward(dy)));
  return conv1_.backward(norm1_.backward(relu1_.backward(g)), need_dx);
}

template <typename T>
void ConvBlock<T>::init(Rng& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
}

template <typename T>
void ConvBlock<T>::params(nn::ParamList<T>& out) {
  conv1_.params(out);
  norm1_.params(out);
  conv2_.params(out);
  norm2_.params(out);
}

// -- UNet3D -------------------------------------------------------------------------------

template <typename T>
UNet3D<T>::UNet3D(UNetConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  int cin = 1;
  for (int l = 0; l < kDepth; ++l) {
    enc_[l] = ConvBlock<T>("unet.enc" + std::to_string(l), cin, cfg_.channels(l));
    cin = cfg_.channels(l);
  }
  bottleneck_ = ConvBlock<T>("unet.bottleneck", cin, cfg_.channels(kDepth));
  for (int l = kDepth - 1; l >= 0; --l)
    dec_[l] = ConvBlock<T>("unet.dec" + std::to_string(l), cfg_.channels(l + 1) + cfg_.channels(l), cfg_.channels(l));
  head_ = nn::Conv3d<T>("unet.head", cfg_.channels(0), 1, 1);
}

template <typename T>
void UNet3D<T>::init(Rng& rng) {
  for (auto& b : enc_) b.init(rng);
  bottleneck_.init(rng);
  for (int l = kDepth - 1; l >= 0; --l) dec_[l].init(rng);
  head_.init(rng);
}

template <typename T>
UNetOutput<T> UNet3D<T>::forward(const nn::Tensor<T>& input) {
  if (input.shape.size() != 4 || input.channels() != 1) throw ShapeError("unet: expected a {1,D,H,W} input");
  check_input_dims(input.spatial());
  nn::Tensor<T> skips[kDepth];
  nn::Tensor<T> h = input;
  for (int l = 0; l < kDepth; ++l) {
    skips[l] = enc_[l].forward(h);
    h = pool_[l].forward(skips[l]);
  }
  UNetOutput<T> out;
  out.pyramid.x_c = bottleneck_.forward(h);
  h = out.pyramid.x_c;
  for (int l = kDepth - 1; l >= 0; --l) h = dec_[l].forward(nn::concat_channels(nn::upsample_nearest2(h), skips[l]));
  out.pyramid.x_f = h;
  out.logits = head_.forward(h);
  out.prob = nn::Tensor<T>(out.logits.shape);
  for (std::size_t i = 0; i < out.logits.size(); ++i) out.prob[i] = nn::sigmoid(out.logits[i]);
  return out;
}

template <typename T>
nn::Tensor<T> UNet3D<T>::backward(const nn::Tensor<T>& d_xc, const nn::Tensor<T>& d_xf,
                                  const nn::Tensor<T>& d_logits, bool need_dinput) {
  nn::Tensor<T> g = head_.backward(d_logits);
  if (!d_xf.empty()) nn::add_inplace(g, d_xf);
  nn::Tensor<T> d_skip[kDepth];
  for (int l = 0; l < kDepth; ++l) {
    nn::Tensor<T> d_cat = dec_[l].backward(g);
    nn::Tensor<T> d_up;
    nn::split_channels(d_cat, cfg_.channels(l + 1), d_up, d_skip[l]);
    g = nn::upsample_nearest2_backward(d_up);
  }
  if (!d_xc.empty()) nn::add_inplace(g, d_xc);
  g = bottleneck_.backward(g);
  for (int l = kDepth - 1; l >= 0; --l) {
    nn::Tensor<T> d = pool_[l].backward(g);
    nn::add_inplace(d, d_skip[l]);
    g = enc_[l].backward(d, l > 0 || need_dinput);
  }
  return need_dinput ? g : nn::Tensor<T>{};
}

template <typename T>
void UNet3D<T>::params(nn::ParamList<T>& out) {
  for (auto& b : enc_) b.params(out);
  bottleneck_.params(out);
  for (int l = kDepth - 1; l >= 0; --l) dec_[l].params(out);
  head_.params(out);
}

template <typename T>
nn::Tensor<T> volume_tensor(const VoxelVolume& v) {
  nn::Tensor<T> t = nn::feature_map<T>(1, v.dims);
  for (std::size_t i = 0; i < v.data.size(); ++i) t[i] = static_cast<T>(v.data[i]);
  return t;
}

template <typename T>
SegLoss<T> seg_loss(const nn::Tensor<T>& prob, const MaskVolume& mask, SegLossKind kind) {
  if (prob.size() != mask.data.size() || (prob.shape.size() == 4 && !(prob.spatial() == mask.dims)))
    throw ShapeError("seg_loss: prediction has " + std::to_string(prob.size()) + " voxels, mask " +
                     mask.dims.str());
  const std::size_t n = prob.size();
  SegLoss<T> out;
  out.d_prob = nn::Tensor<T>(prob.shape);
  out.d_logits = nn::Tensor<T>(prob.shape);
  if (kind == SegLossKind::kBce) {
    const double lo = kProbEps, hi = 1.0 - kProbEps;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = static_cast<double>(prob[i]);
      const double pc = std::clamp(p, lo, hi);
      const bool y = mask.data[i] != 0;
      sum += y ? -std::log(pc) : -std::log(1.0 - pc);
      if (p > lo && p < hi) {
        out.d_prob[i] = static_cast<T>((y ? -1.0 / pc : 1.0 / (1.0 - pc)) / static_cast<double>(n));
        out.d_logits[i] = static_cast<T>((p - (y ? 1.0 : 0.0)) / static_cast<double>(n));
      }
    }
    out.value = sum / static_cast<double>(n);
  } else {
    double spy = 0.0, sp = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = prob[i], y = mask.data[i];
      spy += p * y;
      sp += p;
      sy += y;
    }
    const double num = 2.0 * spy + 1.0, den = sp + sy + 1.0;
    out.value = 1.0 - num / den;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = prob[i], y = mask.data[i];
      const double g = -(2.0 * y * den - num) / (den * den);
      out.d_prob[i] = static_cast<T>(g);
      out.d_logits[i] = static_cast<T>(g * p * (1.0 - p));
    }
  }
  return out;
}

template <typename T>
MaskVolume threshold(const nn::Tensor<T>& prob, Dims dims) {
  MaskVolume m(dims);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = prob[i] > T(0.5) ? 1 : 0;
  return m;
}

template class ConvBlock<float>;
template class ConvBlock<double>;
template class UNet3D<float>;
template class UNet3D<double>;
template nn::Tensor<float> volume_tensor<float>(const VoxelVolume&);
template nn::Tensor<double> volume_tensor<double>(const VoxelVolume&);
template SegLoss<float> seg_loss<float>(const nn::Tensor<float>&, const MaskVolume&, SegLossKind);
template SegLoss<double> seg_loss<double>(const nn::Tensor<double>&, const MaskVolume&, SegLossKind);
template MaskVolume threshold<float>(const nn::Tensor<float>&, Dims);
template MaskVolume threshold<double>(const nn::Tensor<double>&, Dims);

}  // namespace shapepoint::backbone
