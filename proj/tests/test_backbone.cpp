#include <doctest.h>

#include "gradcheck.hpp"
#include "shapepoint/backbone.hpp"
#include "shapepoint/errors.hpp"
#include "shapepoint/shapemetrics.hpp"
#include "test_util.hpp"

using namespace shapepoint;
using namespace shapepoint::backbone;
using gradcheck::random_tensor;

TEST_CASE("seg_loss gradients w.r.t. probabilities and logits") {
  Rng rng(1);
  const Dims d{4, 4, 4};
  const auto mask = testutil::random_mask(rng, d, 0.4);
  for (auto kind : {SegLossKind::kBce, SegLossKind::kSoftDice}) {
    auto logits = random_tensor(rng, {1, 4, 4, 4}, -3, 3);
    auto prob_of = [&] {
      nn::Tensor<double> p(logits.shape);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = nn::sigmoid(logits[i]);
      return p;
    };
    auto prob = prob_of();
    const auto l = seg_loss(prob, mask, kind);
    CHECK(gradcheck::check({{&prob.data, l.d_prob.data}}, [&] { return seg_loss(prob, mask, kind).value; }, rng)
              .max_rel_err <= gradcheck::kTolerance);
    CHECK(gradcheck::check({{&logits.data, l.d_logits.data}},
                           [&] { return seg_loss(prob_of(), mask, kind).value; }, rng)
              .max_rel_err <= gradcheck::kTolerance);
  }
}

TEST_CASE("seg_loss values") {
  MaskVolume m({1, 1, 2});
  m.data = {1, 0};
  nn::Tensor<double> p({1, 1, 1, 2});
  p.data = {0.5, 0.5};
  CHECK(seg_loss(p, m).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  p.data = {1.0, 0.0};
  CHECK(seg_loss(p, m).value == doctest::Approx(-std::log(1.0 - kProbEps)).epsilon(1e-9));
  CHECK(seg_loss(p, m, SegLossKind::kSoftDice).value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(seg_loss(nn::Tensor<double>({1, 1, 1, 3}), m), ShapeError);
}

TEST_CASE("input dims must divide by the pooling factor") {
  CHECK_NOTHROW(check_input_dims({32, 16, 8}));
  CHECK_THROWS_WITH_AS(check_input_dims({32, 20, 32}), doctest::Contains("H"), ShapeError);
  UNet3D<float> net;
  CHECK_THROWS_AS(net.forward(nn::Tensor<float>({1, 12, 16, 16})), ShapeError);
}

TEST_CASE("U-Net output shapes") {
  Rng rng(2);
  UNet3D<float> net({.base_channels = 4});
  net.init(rng);
  const auto out = net.forward(nn::cast<float>(random_tensor(rng, {1, 16, 8, 16})));
  CHECK(out.pyramid.x_c.shape == std::vector<int>{32, 2, 1, 2});
  CHECK(out.pyramid.x_f.shape == std::vector<int>{4, 16, 8, 16});
  CHECK(out.logits.shape == std::vector<int>{1, 16, 8, 16});
  for (std::size_t i = 0; i < out.prob.size(); ++i) CHECK(out.prob[i] == nn::sigmoid(out.logits[i]));
}

TEST_CASE("U-Net end-to-end gradients") {
  Rng rng(3);
  UNet3D<double> net({.base_channels = 2});
  net.init(rng);
  auto x = random_tensor(rng, {1, 8, 8, 8});
  const auto first = net.forward(x);
  const auto wc = random_tensor(rng, first.pyramid.x_c.shape);
  const auto wf = random_tensor(rng, first.pyramid.x_f.shape);
  const auto wl = random_tensor(rng, first.logits.shape);
  auto loss = [&] {
    const auto o = net.forward(x);
    return gradcheck::dot(o.pyramid.x_c, wc) + gradcheck::dot(o.pyramid.x_f, wf) + gradcheck::dot(o.logits, wl);
  };
  nn::ParamList<double> ps;
  net.params(ps);
  gradcheck::zero_grads(ps);
  net.forward(x);
  const auto dx = net.backward(wc, wf, wl, true);
  auto slots = gradcheck::param_slots(ps);
  slots.push_back({&x.data, dx.data});
  CHECK(gradcheck::check(slots, loss, rng).max_rel_err <= gradcheck::kTolerance);
}

TEST_CASE("U-Net overfits a single case") {
  const Dims d{16, 16, 16};
  const auto mask = testutil::ball(d, 7.2, 8.1, 7.6, 4.5);
  Rng rng(4);
  VoxelVolume v(d);
  for (std::size_t i = 0; i < v.data.size(); ++i)
    v.data[i] = static_cast<float>(mask.data[i] + 0.3 * rng.normal());
  UNet3D<float> net({.base_channels = 4});
  net.init(rng);
  nn::ParamList<float> ps;
  net.params(ps);
  nn::Adam<float> opt(ps, {.lr = 5e-3});
  const auto input = volume_tensor<float>(v);
  double dsc = 0.0;
  int steps = 0;
  for (; steps < 500 && dsc <= 0.95; ++steps) {
    opt.zero_grad();
    const auto out = net.forward(input);
    const auto l = seg_loss(out.prob, mask);
    net.backward({}, {}, l.d_logits);
    opt.step();
    dsc = shapemetrics::dice(threshold(net.forward(input).prob, d), mask);
  }
  MESSAGE("overfit Dice " << dsc << " after " << steps << " steps");
  CHECK(dsc > 0.95);
}
