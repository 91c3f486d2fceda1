#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "shapepoint/adversary.hpp"
#include "shapepoint/errors.hpp"

using namespace shapepoint;
using namespace shapepoint::adversary;
using gradcheck::random_tensor;

TEST_CASE("classifier is exactly neutral at init") {
  Rng rng(1);
  PointClassifier<float> d;
  d.init(rng);
  const auto p = nn::cast<float>(random_tensor(rng, {64, 3}, 0, 1));
  const auto q = nn::cast<float>(random_tensor(rng, {64, 3}, 0, 1));
  CHECK(d.forward(p) == 0.5f);
  CHECK(d.logit() == 0.0f);
  for (int i = 0; i < 9; ++i) CHECK(d.transform()[i] == (i % 4 == 0 ? 1.0f : 0.0f));
  const auto l = adversarial_losses(d, p, q);
  CHECK(std::abs(l.loss_d - 2.0 * std::numbers::ln2) <= 1e-9);
  CHECK(std::abs(l.loss_g - std::numbers::ln2) <= 1e-9);
}

TEST_CASE("cross-entropy on hand-built probabilities") {
  CHECK(std::abs(bce(0.5, 0) + bce(0.5, 1) - 2.0 * std::numbers::ln2) <= 1e-12);
  CHECK(std::abs(bce(0.8, 1) - (-std::log(0.8))) <= 1e-12);
  CHECK(std::abs(bce(0.8, 0) - (-std::log(0.2))) <= 1e-12);
  CHECK(std::abs(bce(0.3, 0) + bce(0.9, 1) - (-std::log(0.7) - std::log(0.9))) <= 1e-12);
  CHECK(std::abs(bce(0.0, 1) - (-std::log(kProbEps))) <= 1e-9);
  CHECK(std::isfinite(bce(1.0, 0)));
  CHECK(bce_logit_grad(0.8, 1) == doctest::Approx(-0.2));
  CHECK(bce_logit_grad(0.8, 0) == doctest::Approx(0.8));
  CHECK(bce_logit_grad(1.0, 0) == 0.0);
}

TEST_CASE("classifier is permutation invariant") {
  Rng rng(2);
  PointClassifier<double> d;
  d.init(rng);
  nn::ParamList<double> ps;
  d.params(ps);
  gradcheck::randomize(ps, rng, 0.2);
  auto p = random_tensor(rng, {20, 3}, 0, 1);
  const double a = d.forward(p);
  auto q = p;
  for (int i = 0; i < 20; ++i)
    for (int k = 0; k < 3; ++k) q[3 * i + k] = p[3 * (19 - i) + k];
  CHECK(d.forward(q) == a);
  CHECK_THROWS_AS(d.forward(random_tensor(rng, {4, 2})), ShapeError);
}

TEST_CASE("discriminator gradient w.r.t. its parameters and both inputs") {
  Rng rng(3);
  PointClassifier<double> d({.tnet_widths = {8, 12}, .tnet_head = 8, .encoder_widths = {8, 12}, .head_hidden = 8});
  d.init(rng);
  nn::ParamList<double> ps;
  d.params(ps);
  gradcheck::randomize(ps, rng, 0.4);
  auto gen = random_tensor(rng, {8, 3}, 0, 1);
  const auto gt = random_tensor(rng, {8, 3}, 0, 1);
  gradcheck::zero_grads(ps);
  discriminator_backward(d, gen, gt);
  auto loss_d = [&] { return adversarial_losses(d, gen, gt).loss_d; };
  CHECK(gradcheck::check(gradcheck::param_slots(ps), loss_d, rng).max_rel_err <= gradcheck::kTolerance);

  // classifier input gradient through the generator objective
  double lg = 0.0;
  const auto dp = generator_backward(d, gen, &lg);
  CHECK(lg == doctest::Approx(adversarial_losses(d, gen, gt).loss_g).epsilon(1e-12));
  auto loss_g = [&] { return adversarial_losses(d, gen, gt).loss_g; };
  CHECK(gradcheck::check({{&gen.data, dp.data}}, loss_g, rng).max_rel_err <= gradcheck::kTolerance);
}

TEST_CASE("raw logit gradient w.r.t. points and parameters") {
  Rng rng(4);
  PointClassifier<double> d({.tnet_widths = {6, 10}, .tnet_head = 6, .encoder_widths = {6, 10}, .head_hidden = 6});
  d.init(rng);
  nn::ParamList<double> ps;
  d.params(ps);
  gradcheck::randomize(ps, rng, 0.4);
  auto p = random_tensor(rng, {7, 3}, 0, 1);
  gradcheck::zero_grads(ps);
  d.forward(p);
  const auto dp = d.backward(1.0, true);
  auto slots = gradcheck::param_slots(ps);
  slots.push_back({&p.data, dp.data});
  auto logit = [&] {
    d.forward(p);
    return d.logit();
  };
  CHECK(gradcheck::check(slots, logit, rng).max_rel_err <= gradcheck::kTolerance);
}

TEST_CASE("gradient partition is exact") {
  Rng rng(5);
  PointClassifier<float> d;
  d.init(rng);
  nn::ParamList<float> ps;
  d.params(ps);
  for (auto* p : ps)
    for (auto& v : p->value.data) v = static_cast<float>(rng.uniform(-0.1, 0.1));
  const auto gen = nn::cast<float>(random_tensor(rng, {32, 3}, 0, 1));
  const auto gt = nn::cast<float>(random_tensor(rng, {32, 3}, 0, 1));
  for (auto* p : ps) p->zero_grad();
  const auto dp = generator_backward(d, gen);
  for (auto* p : ps)
    for (float g : p->grad.data) CHECK(g == 0.0f);
  bool any = false;
  for (float g : dp.data) any |= g != 0.0f;
  CHECK(any);

  // the discriminator step touches every classifier tensor and nothing else
  for (auto* p : ps) p->zero_grad();
  const auto gen_copy = gen;
  discriminator_backward(d, gen, gt);
  CHECK(gen.data == gen_copy.data);
  std::size_t touched = 0;
  for (auto* p : ps)
    for (float g : p->grad.data)
      if (g != 0.0f) {
        ++touched;
        break;
      }
  CHECK(touched == ps.size());
}

TEST_CASE("classifier learns to separate distinct shapes") {
  Rng rng(6);
  PointClassifier<float> d;
  d.init(rng);
  nn::ParamList<float> ps;
  d.params(ps);
  nn::Adam<float> opt(ps, {.lr = 1e-3});
  auto sphere = [&] {
    nn::Tensor<float> t({128, 3});
    for (int i = 0; i < 128; ++i) {
      double v[3] = {rng.normal(), rng.normal(), rng.normal()};
      const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      for (int k = 0; k < 3; ++k) t[3 * i + k] = static_cast<float>(0.5 + 0.3 * v[k] / n);
    }
    return t;
  };
  auto blob = [&] { return nn::cast<float>(random_tensor(rng, {128, 3}, 0.35, 0.65)); };
  AdversarialLosses l;
  for (int step = 0; step < 150; ++step) {
    opt.zero_grad();
    l = discriminator_backward(d, blob(), sphere());
    opt.step();
  }
  MESSAGE("after training D(gen) " << l.d_gen << " D(gt) " << l.d_gt);
  CHECK(d.forward(sphere()) > 0.9f);
  CHECK(d.forward(blob()) < 0.1f);
}
