#pragma once

// Point-set classifier with a learned 3x3 input transform, a shared per-point
// encoder and a symmetric max-pool, plus the adversarial losses built on it.

#include <array>

#include "shapepoint/nn.hpp"

namespace shapepoint::adversary {

// Max over rows of an {N, C} tensor; argmax keeps the first row on ties.
template <typename T>
class RowMaxPool {
 public:
  nn::Tensor<T> forward(const nn::Tensor<T>& x);
  nn::Tensor<T> backward(const nn::Tensor<T>& dy) const;

 private:
  std::vector<int> shape_;
  std::vector<int> argmax_;
};

struct ClassifierConfig {
  int tnet_widths[2] = {64, 128};
  int tnet_head = 64;
  int encoder_widths[2] = {64, 128};
  int head_hidden = 64;
};

template <typename T>
class PointClassifier {
 public:
  explicit PointClassifier(ClassifierConfig cfg = {});

  void init(Rng& rng);
  void params(nn::ParamList<T>& out);

  // Probability that the {N, 3} input is a (perturbed) ground-truth set.
  T forward(const nn::Tensor<T>& points);
  T logit() const { return logit_; }
  // Input-transform matrix of the last forward, row-major.
  const std::array<T, 9>& transform() const { return transform_; }

  // Backward from dL/dlogit. Accumulates parameter gradients only when
  // accumulate_params is set; returns dL/dpoints.
  nn::Tensor<T> backward(T d_logit, bool accumulate_params);

 private:
  nn::Linear<T> t1_, t2_, t3_, t4_;
  nn::ReLU<T> tr1_, tr2_, tr3_;
  RowMaxPool<T> tpool_;
  nn::Linear<T> e1_, e2_;
  nn::ReLU<T> er1_, er2_;
  RowMaxPool<T> pool_;
  nn::Linear<T> h1_, h2_;
  nn::ReLU<T> hr1_;

  nn::Tensor<T> points_;
  std::array<T, 9> transform_{};
  T logit_ = T(0);
};

inline constexpr double kProbEps = 1e-7;

// Cross-entropy H(d, y) of a probability against label y in {0, 1}, with d
// clamped to [eps, 1 - eps].
double bce(double d, double label);
// dH/dlogit for d = sigmoid(logit); zero where the clamp is active.
double bce_logit_grad(double d, double label);

struct AdversarialLosses {
  double loss_d = 0.0;  // H(D(P), 0) + H(D(P_hat), 1)
  double loss_g = 0.0;  // H(D(P), 1)
  double d_gen = 0.5;   // D(P)
  double d_gt = 0.5;    // D(P_hat)
};

// Values only.
template <typename T>
AdversarialLosses adversarial_losses(PointClassifier<T>& d, const nn::Tensor<T>& p_gen, const nn::Tensor<T>& p_gt_hat);

// Accumulates dloss_D/dtheta_D; generated points are treated as constants.
template <typename T>
AdversarialLosses discriminator_backward(PointClassifier<T>& d, const nn::Tensor<T>& p_gen,
                                         const nn::Tensor<T>& p_gt_hat);

// dloss_G/dP with theta_D frozen (no parameter gradients are touched).
template <typename T>
nn::Tensor<T> generator_backward(PointClassifier<T>& d, const nn::Tensor<T>& p_gen, double* loss_g = nullptr);

}  // namespace shapepoint::adversary
