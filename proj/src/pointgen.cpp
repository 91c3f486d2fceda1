#include "shapepoint/pointgen.hpp"

#include <cmath>

#include "shapepoint/errors.hpp"

namespace shapepoint::pointgen {

template <typename T>
nn::Tensor<T> to_tensor(const PointSet& p) {
  nn::Tensor<T> t({static_cast<int>(p.points.size()), 3});
  for (std::size_t i = 0; i < p.points.size(); ++i)
    for (int a = 0; a < 3; ++a) t[3 * i + a] = static_cast<T>(p.points[i][a]);
  return t;
}

template <typename T>
PointSet to_pointset(const nn::Tensor<T>& t) {
  PointSet p;
  p.points.resize(t.size() / 3);
  for (std::size_t i = 0; i < p.points.size(); ++i)
    for (int a = 0; a < 3; ++a) p.points[i][a] = static_cast<double>(t[3 * i + a]);
  return p;
}

namespace {

template <typename T>
void sigmoid_inplace(nn::Tensor<T>& t) {
  for (auto& v : t.data) v = nn::sigmoid(v);
}

// d/dz of sigmoid given its output s.
template <typename T>
nn::Tensor<T> sigmoid_backward(const nn::Tensor<T>& s, const nn::Tensor<T>& dy) {
  nn::Tensor<T> dz(dy.shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dz[i] = dy[i] * s[i] * (T(1) - s[i]);
  return dz;
}

}  // namespace

// -- InitPoints ------------------------------------------------------------------------------

template <typename T>
InitPoints<T>::InitPoints(int coarse_channels, int n_points, int hidden1, int hidden2)
    : fc1("pointnet.init.fc1", coarse_channels, hidden1),
      fc2("pointnet.init.fc2", hidden1, hidden2),
      fc3("pointnet.init.fc3", hidden2, 3 * n_points),
      n_(n_points) {
  if (n_points < 1) throw ConfigError("n_points must be >= 1");
}

template <typename T>
nn::Tensor<T> InitPoints<T>::forward(const nn::Tensor<T>& x_c) {
  const int c = x_c.channels();
  if (c != fc1.in) throw ShapeError("init_points: expected " + std::to_string(fc1.in) + " coarse channels");
  xc_shape_ = x_c.shape;
  const std::size_t v = x_c.spatial().voxels();
  nn::Tensor<T> g({1, c});
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < v; ++i) s += x_c[ch * v + i];
    g[ch] = static_cast<T>(s / static_cast<double>(v));
  }
  nn::Tensor<T> h = fc1.forward(g);
  relu1_.forward_inplace(h);
  h = fc2.forward(h);
  relu2_.forward_inplace(h);
  out_ = fc3.forward(h);
  sigmoid_inplace(out_);
  out_.shape = {n_, 3};
  return out_;
}

template <typename T>
nn::Tensor<T> InitPoints<T>::backward(const nn::Tensor<T>& d_points) {
  nn::Tensor<T> d = sigmoid_backward(out_, d_points);
  d.shape = {1, 3 * n_};
  d = fc1.backward(relu1_.backward(fc2.backward(relu2_.backward(fc3.backward(d)))));
  nn::Tensor<T> dx(xc_shape_);
  const int c = xc_shape_[0];
  const std::size_t v = dx.size() / static_cast<std::size_t>(c);
  for (int ch = 0; ch < c; ++ch) {
    const T g = d[ch] / static_cast<T>(v);
    for (std::size_t i = 0; i < v; ++i) dx[ch * v + i] = g;
  }
  return dx;
}

template <typename T>
void InitPoints<T>::init(Rng& rng) {
  fc1.init(rng);
  fc2.init(rng);
  fc3.init(rng);
}

template <typename T>
void InitPoints<T>::params(nn::ParamList<T>& out) {
  fc1.params(out);
  fc2.params(out);
  fc3.params(out);
}

// -- FeatureIndex -----------------------------------------------------------------------------

int nearest_index(double coord, int n) {
  const int i = static_cast<int>(std::floor(coord * n + 0.5));
  return std::clamp(i, 0, n - 1);
}

template <typename T>
nn::Tensor<T> FeatureIndex<T>::forward(const nn::Tensor<T>& x_f, const nn::Tensor<T>& points) {
  const int c = x_f.channels();
  const Dims d = x_f.spatial();
  const int n = points.shape.at(0);
  xf_shape_ = x_f.shape;
  centers_.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      const double v = static_cast<double>(points[3 * i + a]);
      if (!(v >= 0.0 && v <= 1.0))
        throw ContractError("feature_index: point " + std::to_string(i) + " coordinate " + std::to_string(a) +
                            " = " + std::to_string(v) + " is outside [0,1]");
      centers_[i][a] = nearest_index(v, d.axis(a));
    }
  }
  nn::Tensor<T> f({n, 27 * c});
  const std::size_t vox = d.voxels();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    T* row = f.ptr() + static_cast<std::size_t>(i) * 27 * c;
    const auto [cz, cy, cx] = centers_[i];
    for (int k = 0; k < 27; ++k) {
      const int z = cz + k / 9 - 1, y = cy + (k / 3) % 3 - 1, x = cx + k % 3 - 1;
      if (!d.contains(z, y, x)) continue;
      const std::size_t at = d.index(z, y, x);
      for (int ch = 0; ch < c; ++ch) row[ch * 27 + k] = x_f[ch * vox + at];
    }
  }
  return f;
}

template <typename T>
nn::Tensor<T> FeatureIndex<T>::backward(const nn::Tensor<T>& d_features) const {
  nn::Tensor<T> dx(xf_shape_);
  const int c = xf_shape_[0];
  const Dims d{xf_shape_[1], xf_shape_[2], xf_shape_[3]};
  const std::size_t vox = d.voxels();
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    const T* row = d_features.ptr() + i * 27 * c;
    const auto [cz, cy, cx] = centers_[i];
    for (int k = 0; k < 27; ++k) {
      const int z = cz + k / 9 - 1, y = cy + (k / 3) % 3 - 1, x = cx + k % 3 - 1;
      if (!d.contains(z, y, x)) continue;
      const std::size_t at = d.index(z, y, x);
      for (int ch = 0; ch < c; ++ch) dx[ch * vox + at] += row[ch * 27 + k];
    }
  }
  return dx;
}

// -- Refiner ------------------------------------------------------------------------------------

template <typename T>
Refiner<T>::Refiner(const std::string& name, int fine_channels, int hidden1, int hidden2)
    : fc1(name + ".fc1", 27 * fine_channels, hidden1), fc2(name + ".fc2", hidden1, hidden2), fc3(name + ".fc3", hidden2, 3) {}

template <typename T>
nn::Tensor<T> Refiner<T>::forward(const nn::Tensor<T>& x_f, const nn::Tensor<T>& points) {
  nn::Tensor<T> h = fc1.forward(index_.forward(x_f, points));
  relu1_.forward_inplace(h);
  h = fc2.forward(h);
  relu2_.forward_inplace(h);
  const nn::Tensor<T> delta = fc3.forward(h);
  nn::Tensor<T> out(points.shape);
  pass_.assign(points.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const T v = points[i] + delta[i];
    pass_[i] = v >= T(0) && v <= T(1);
    out[i] = std::clamp(v, T(0), T(1));
  }
  return out;
}

template <typename T>
nn::Tensor<T> Refiner<T>::backward(const nn::Tensor<T>& d_out, nn::Tensor<T>& d_xf) {
  nn::Tensor<T> d(d_out.shape);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = pass_[i] ? d_out[i] : T(0);
  const nn::Tensor<T> d_feat = fc1.backward(relu1_.backward(fc2.backward(relu2_.backward(fc3.backward(d)))));
  const nn::Tensor<T> g = index_.backward(d_feat);
  if (d_xf.empty())
    d_xf = g;
  else
    nn::add_inplace(d_xf, g);
  return d;
}

template <typename T>
void Refiner<T>::init(Rng& rng) {
  fc1.init(rng);
  fc2.init(rng);
  fc3.zero_init();
}

template <typename T>
void Refiner<T>::params(nn::ParamList<T>& out) {
  fc1.params(out);
  fc2.params(out);
  fc3.params(out);
}

// -- PointNetwork ---------------------------------------------------------------------------------

template <typename T>
PointNetwork<T>::PointNetwork(int coarse_channels, int fine_channels, PointNetConfig cfg)
    : init_points(coarse_channels, cfg.n_points, cfg.init_hidden1, cfg.init_hidden2),
      r1("pointnet.refine1", fine_channels, cfg.refine_hidden1, cfg.refine_hidden2),
      r2("pointnet.refine2", fine_channels, cfg.refine_hidden1, cfg.refine_hidden2),
      cfg_(cfg) {}

template <typename T>
nn::Tensor<T> PointNetwork<T>::forward(const backbone::FeaturePyramid<T>& pyr) {
  p0_ = init_points.forward(pyr.x_c);
  return r2.forward(pyr.x_f, r1.forward(pyr.x_f, p0_));
}

template <typename T>
PyramidGrad<T> PointNetwork<T>::backward(const nn::Tensor<T>& d_points) {
  PyramidGrad<T> g;
  const nn::Tensor<T> d1 = r2.backward(d_points, g.d_xf);
  const nn::Tensor<T> d0 = r1.backward(d1, g.d_xf);
  g.d_xc = init_points.backward(d0);
  return g;
}

template <typename T>
void PointNetwork<T>::init(Rng& rng) {
  init_points.init(rng);
  r1.init(rng);
  r2.init(rng);
}

template <typename T>
void PointNetwork<T>::params(nn::ParamList<T>& out) {
  init_points.params(out);
  r1.params(out);
  r2.params(out);
}

// -- TwoBranch --------------------------------------------------------------------------------------

template <typename T>
TwoBranch<T>::TwoBranch(int coarse_channels, Dims coarse_dims, int n_points, int hidden, int deconv_channels)
    : n_(n_points), coarse_(coarse_dims) {
  if (n_points < 2 || n_points % 2 != 0)
    throw ConfigError("two_branch: n_points must be even, got " + std::to_string(n_points));
  const int half = n_points / 2;
  const int flat = coarse_channels * static_cast<int>(coarse_dims.voxels());
  fc1_ = nn::Linear<T>("twobranch.fc1", flat, hidden);
  fc2_ = nn::Linear<T>("twobranch.fc2", hidden, 3 * half);
  const int cells = 8 * static_cast<int>(coarse_dims.voxels());
  per_cell_ = (half + cells - 1) / cells;
  deconv_ = nn::ConvTranspose3d<T>("twobranch.deconv", coarse_channels, deconv_channels);
  proj_ = nn::Conv3d<T>("twobranch.proj", deconv_channels, 3 * per_cell_, 1);
}

template <typename T>
nn::Tensor<T> TwoBranch<T>::forward(const backbone::FeaturePyramid<T>& pyr) {
  if (!(pyr.x_c.spatial() == coarse_))
    throw ShapeError("two_branch: coarse map is " + pyr.x_c.spatial().str() + ", configured for " + coarse_.str());
  xc_shape_ = pyr.x_c.shape;
  const int half = n_ / 2;
  nn::Tensor<T> flat = pyr.x_c;
  flat.shape = {1, static_cast<int>(flat.size())};
  nn::Tensor<T> h = fc1_.forward(flat);
  relu_fc_.forward_inplace(h);
  const nn::Tensor<T> a = fc2_.forward(h);

  nn::Tensor<T> grid = deconv_.forward(pyr.x_c);
  relu_deconv_.forward_inplace(grid);
  const nn::Tensor<T> b = proj_.forward(grid);  // {3m, D', H', W'}
  grid_shape_ = b.shape;
  const std::size_t cells = b.spatial().voxels();

  out_ = nn::Tensor<T>({n_, 3});
  for (int i = 0; i < 3 * half; ++i) out_[i] = a[i];
  for (int j = 0; j < half; ++j) {
    const std::size_t cell = static_cast<std::size_t>(j) / per_cell_;
    const int slot = j % per_cell_;
    for (int ax = 0; ax < 3; ++ax) out_[3 * (half + j) + ax] = b[(3 * slot + ax) * cells + cell];
  }
  sigmoid_inplace(out_);
  return out_;
}

template <typename T>
PyramidGrad<T> TwoBranch<T>::backward(const nn::Tensor<T>& d_points) {
  const int half = n_ / 2;
  const nn::Tensor<T> dz = sigmoid_backward(out_, d_points);
  nn::Tensor<T> da({1, 3 * half});
  for (int i = 0; i < 3 * half; ++i) da[i] = dz[i];
  nn::Tensor<T> db(grid_shape_);
  const std::size_t cells = db.spatial().voxels();
  for (int j = 0; j < half; ++j) {
    const std::size_t cell = static_cast<std::size_t>(j) / per_cell_;
    const int slot = j % per_cell_;
    for (int ax = 0; ax < 3; ++ax) db[(3 * slot + ax) * cells + cell] = dz[3 * (half + j) + ax];
  }
  PyramidGrad<T> g;
  g.d_xc = fc1_.backward(relu_fc_.backward(fc2_.backward(da)));
  g.d_xc.shape = xc_shape_;
  nn::add_inplace(g.d_xc, deconv_.backward(relu_deconv_.backward(proj_.backward(db))));
  return g;
}

template <typename T>
void TwoBranch<T>::init(Rng& rng) {
  fc1_.init(rng);
  fc2_.init(rng);
  deconv_.init(rng);
  proj_.init(rng);
}

template <typename T>
void TwoBranch<T>::params(nn::ParamList<T>& out) {
  fc1_.params(out);
  fc2_.params(out);
  deconv_.params(out);
  proj_.params(out);
}

template nn::Tensor<float> to_tensor<float>(const PointSet&);
template nn::Tensor<double> to_tensor<double>(const PointSet&);
template PointSet to_pointset<float>(const nn::Tensor<float>&);
template PointSet to_pointset<double>(const nn::Tensor<double>&);
template class InitPoints<float>;
template class InitPoints<double>;
template class FeatureIndex<float>;
template class FeatureIndex<double>;
template class Refiner<float>;
template class Refiner<double>;
template class PointNetwork<float>;
template class PointNetwork<double>;
template class TwoBranch<float>;
template class TwoBranch<double>;

}  // namespace shapepoint::pointgen
