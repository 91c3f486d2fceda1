#include "shapepoint/adversary.hpp"

#include <algorithm>
#include <cmath>

#include "shapepoint/errors.hpp"

namespace shapepoint::adversary {

namespace {
template <typename T>
constexpr T kInputScale = T(2);
}  // namespace

template <typename T>
nn::Tensor<T> RowMaxPool<T>::forward(const nn::Tensor<T>& x) {
  shape_ = x.shape;
  const int n = x.shape.at(0), c = x.shape.at(1);
  if (n < 1) throw ShapeError("row max pool: empty input");
  nn::Tensor<T> y({1, c});
  argmax_.assign(c, 0);
  for (int j = 0; j < c; ++j) y[j] = x[j];
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const T v = x[static_cast<std::size_t>(i) * c + j];
      if (v > y[j]) {
        y[j] = v;
        argmax_[j] = i;
      }
    }
  return y;
}

template <typename T>
nn::Tensor<T> RowMaxPool<T>::backward(const nn::Tensor<T>& dy) const {
  nn::Tensor<T> dx(shape_);
  const int c = shape_[1];
  for (int j = 0; j < c; ++j) dx[static_cast<std::size_t>(argmax_[j]) * c + j] = dy[j];
  return dx;
}

template <typename T>
PointClassifier<T>::PointClassifier(ClassifierConfig cfg)
    : t1_("classifier.tnet.fc1", 3, cfg.tnet_widths[0]),
      t2_("classifier.tnet.fc2", cfg.tnet_widths[0], cfg.tnet_widths[1]),
      t3_("classifier.tnet.fc3", cfg.tnet_widths[1], cfg.tnet_head),
      t4_("classifier.tnet.fc4", cfg.tnet_head, 9),
      e1_("classifier.enc.fc1", 3, cfg.encoder_widths[0]),
      e2_("classifier.enc.fc2", cfg.encoder_widths[0], cfg.encoder_widths[1]),
      h1_("classifier.head.fc1", cfg.encoder_widths[1], cfg.head_hidden),
      h2_("classifier.head.fc2", cfg.head_hidden, 1) {}

template <typename T>
void PointClassifier<T>::init(Rng& rng) {
  t1_.init(rng);
  t2_.init(rng);
  t3_.init(rng);
  t4_.zero_init();
  e1_.init(rng);
  e2_.init(rng);
  h1_.init(rng);
  h2_.zero_init();
}

template <typename T>
void PointClassifier<T>::params(nn::ParamList<T>& out) {
  for (auto* l : {&t1_, &t2_, &t3_, &t4_, &e1_, &e2_, &h1_, &h2_}) l->params(out);
}

template <typename T>
T PointClassifier<T>::forward(const nn::Tensor<T>& points) {
  if (points.shape.size() != 2 || points.shape[1] != 3) throw ShapeError("classifier: expected {N,3} points");
  // Unit-cube coordinates are all positive; centring them gives the ReLU
  // encoder features of both signs to work with.
  points_ = points;
  for (auto& v : points_.data) v = kInputScale<T> * (v - T(0.5));
  const int n = points.shape[0];

  nn::Tensor<T> h = t1_.forward(points_);
  tr1_.forward_inplace(h);
  h = t2_.forward(h);
  tr2_.forward_inplace(h);
  h = t3_.forward(tpool_.forward(h));
  tr3_.forward_inplace(h);
  const nn::Tensor<T> m = t4_.forward(h);
  for (int i = 0; i < 9; ++i) transform_[i] = m[i] + (i % 4 == 0 ? T(1) : T(0));

  nn::Tensor<T> q({n, 3});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      T s = T(0);
      for (int r = 0; r < 3; ++r) s += points_[3 * i + r] * transform_[3 * r + c];
      q[3 * i + c] = s;
    }
  h = e1_.forward(q);
  er1_.forward_inplace(h);
  h = e2_.forward(h);
  er2_.forward_inplace(h);
  h = h1_.forward(pool_.forward(h));
  hr1_.forward_inplace(h);
  logit_ = h2_.forward(h)[0];
  return nn::sigmoid(logit_);
}

template <typename T>
nn::Tensor<T> PointClassifier<T>::backward(T d_logit, bool acc) {
  const int n = points_.shape[0];
  nn::Tensor<T> g({1, 1}, d_logit);
  g = h2_.backward(g, acc);
  g = h1_.backward(hr1_.backward(g), acc);
  g = pool_.backward(g);
  g = e2_.backward(er2_.backward(g), acc);
  const nn::Tensor<T> dq = e1_.backward(er1_.backward(g), acc);

  nn::Tensor<T> dp({n, 3});
  nn::Tensor<T> dm({1, 9});
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < 3; ++r) {
      T s = T(0);
      for (int c = 0; c < 3; ++c) {
        s += dq[3 * i + c] * transform_[3 * r + c];
        dm[3 * r + c] += points_[3 * i + r] * dq[3 * i + c];
      }
      dp[3 * i + r] = s;
    }
  g = t4_.backward(dm, acc);
  g = t3_.backward(tr3_.backward(g), acc);
  g = tpool_.backward(g);
  g = t2_.backward(tr2_.backward(g), acc);
  nn::add_inplace(dp, t1_.backward(tr1_.backward(g), acc));
  for (auto& v : dp.data) v *= kInputScale<T>;
  return dp;
}

double bce(double d, double label) {
  const double dc = std::clamp(d, kProbEps, 1.0 - kProbEps);
  return -(label * std::log(dc) + (1.0 - label) * std::log(1.0 - dc));
}

double bce_logit_grad(double d, double label) {
  if (!(d > kProbEps && d < 1.0 - kProbEps)) return 0.0;
  return d - label;
}

template <typename T>
AdversarialLosses adversarial_losses(PointClassifier<T>& d, const nn::Tensor<T>& p_gen, const nn::Tensor<T>& p_gt_hat) {
  AdversarialLosses out;
  out.d_gen = d.forward(p_gen);
  out.d_gt = d.forward(p_gt_hat);
  out.loss_d = bce(out.d_gen, 0.0) + bce(out.d_gt, 1.0);
  out.loss_g = bce(out.d_gen, 1.0);
  return out;
}

template <typename T>
AdversarialLosses discriminator_backward(PointClassifier<T>& d, const nn::Tensor<T>& p_gen,
                                         const nn::Tensor<T>& p_gt_hat) {
  AdversarialLosses out;
  out.d_gen = d.forward(p_gen);
  d.backward(static_cast<T>(bce_logit_grad(out.d_gen, 0.0)), true);
  out.d_gt = d.forward(p_gt_hat);
  d.backward(static_cast<T>(bce_logit_grad(out.d_gt, 1.0)), true);
  out.loss_d = bce(out.d_gen, 0.0) + bce(out.d_gt, 1.0);
  out.loss_g = bce(out.d_gen, 1.0);
  return out;
}

template <typename T>
nn::Tensor<T> generator_backward(PointClassifier<T>& d, const nn::Tensor<T>& p_gen, double* loss_g) {
  const double prob = d.forward(p_gen);
  if (loss_g) *loss_g = bce(prob, 1.0);
  return d.backward(static_cast<T>(bce_logit_grad(prob, 1.0)), false);
}

template class RowMaxPool<float>;
template class RowMaxPool<double>;
template class PointClassifier<float>;
template class PointClassifier<double>;
template AdversarialLosses adversarial_losses<float>(PointClassifier<float>&, const nn::Tensor<float>&,
                                                     const nn::Tensor<float>&);
template AdversarialLosses adversarial_losses<double>(PointClassifier<double>&, const nn::Tensor<double>&,
                                                      const nn::Tensor<double>&);
template AdversarialLosses discriminator_backward<float>(PointClassifier<float>&, const nn::Tensor<float>&,
                                                         const nn::Tensor<float>&);
template AdversarialLosses discriminator_backward<double>(PointClassifier<double>&, const nn::Tensor<double>&,
                                                          const nn::Tensor<double>&);
template nn::Tensor<float> generator_backward<float>(PointClassifier<float>&, const nn::Tensor<float>&, double*);
template nn::Tensor<double> generator_backward<double>(PointClassifier<double>&, const nn::Tensor<double>&, double*);

}  // namespace shapepoint::adversary
