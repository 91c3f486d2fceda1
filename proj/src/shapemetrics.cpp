#include "shapepoint/shapemetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "shapepoint/errors.hpp"
#include "shapepoint/kernels.hpp"

namespace shapepoint::shapemetrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dist(const Point3& a, const Point3& b) {
  const double dz = a[0] - b[0], dy = a[1] - b[1], dx = a[2] - b[2];
  return std::sqrt(dz * dz + dy * dy + dx * dx);
}

void require_nonempty(const PointSet& p, const PointSet& q, const char* who) {
  if (p.empty() || q.empty()) throw MetricError(std::string(who) + ": point sets must be non-empty");
}

}  // namespace

// -- Chamfer ----------------------------------------------------------------------

ChamferGrad chamfer_with_grad(const PointSet& p, const PointSet& q) {
  require_nonempty(p, q, "chamfer");
  const std::size_t np = p.size(), nq = q.size();
  std::vector<std::size_t> p2q(np), q2p(nq);
  std::vector<double> dp(np), dq(nq);
  kernels::nearest_neighbors(p.points, q.points, p2q, dp);
  kernels::nearest_neighbors(q.points, p.points, q2p, dq);

  ChamferGrad g;
  g.grad_p.assign(np, {0.0, 0.0, 0.0});
  g.grad_q.assign(nq, {0.0, 0.0, 0.0});
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < np; ++i) {
    sp += dp[i];
    const auto& a = p.points[i];
    const auto& b = q.points[p2q[i]];
    for (int c = 0; c < 3; ++c) {
      const double d = 2.0 * (a[c] - b[c]) / np;
      g.grad_p[i][c] += d;
      g.grad_q[p2q[i]][c] -= d;
    }
  }
  for (std::size_t j = 0; j < nq; ++j) {
    sq += dq[j];
    const auto& b = q.points[j];
    const auto& a = p.points[q2p[j]];
    for (int c = 0; c < 3; ++c) {
      const double d = 2.0 * (b[c] - a[c]) / nq;
      g.grad_q[j][c] += d;
      g.grad_p[q2p[j]][c] -= d;
    }
  }
  g.value = sp / np + sq / nq;
  return g;
}

double chamfer(const PointSet& p, const PointSet& q) {
  require_nonempty(p, q, "chamfer");
  std::vector<std::size_t> p2q(p.size()), q2p(q.size());
  std::vector<double> dp(p.size()), dq(q.size());
  kernels::nearest_neighbors(p.points, q.points, p2q, dp);
  kernels::nearest_neighbors(q.points, p.points, q2p, dq);
  double sp = 0.0, sq = 0.0;
  for (double v : dp) sp += v;
  for (double v : dq) sq += v;
  return sp / p.size() + sq / q.size();
}

// -- assignment solvers ---------------------------------------------------------------

std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw ShapeError("solve_assignment: cost matrix must be n x n");
  if (n == 0) return {};
  // Potentials u (rows, 1-based) and v (columns, 1-based; column 0 is the
  // virtual root). Column reduction gives feasible potentials and an initial
  // tight partial matching.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> row_of(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  std::vector<char> row_matched(n + 1, 0);
  auto c = [&](std::size_t i, std::size_t j) { return cost[(i - 1) * n + (j - 1)]; };

  for (std::size_t j = 1; j <= n; ++j) {
    std::size_t best = 1;
    for (std::size_t i = 2; i <= n; ++i)
      if (c(i, j) < c(best, j)) best = i;
    v[j] = c(best, j);
    if (!row_matched[best]) {
      row_matched[best] = 1;
      row_of[j] = best;
    }
  }

  for (std::size_t i = 1; i <= n; ++i) {
    if (row_matched[i]) continue;
    row_of[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = row_of[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      const double ui = u[i0];
      const double* row = cost.data() + (i0 - 1) * n - 1;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j] - ui - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[row_of[j] - 1] = j - 1;
  return assignment;
}

AuctionResult solve_assignment_auction(std::span<const double> cost, std::size_t n, double rel_gap,
                                       std::size_t max_bids) {
  if (cost.size() != n * n) throw ShapeError("auction: cost matrix must be n x n");
  AuctionResult r;
  if (n == 0) return r;
  if (max_bids == 0) max_bids = 400 * n * n + 10000;
  const double cmax = *std::max_element(cost.begin(), cost.end());
  const double cmin = *std::min_element(cost.begin(), cost.end());
  const double range = std::max(cmax - cmin, 1e-300);
  const double abs_tol = 1e-12 * std::max(1.0, std::abs(cmax)) * static_cast<double>(n);

  std::vector<double> price(n, 0.0);
  std::vector<std::size_t> owner(n), assigned(n);
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  double eps = range / 4.0;
  std::size_t bids = 0;
  double gap = kInf;
  while (true) {
    std::fill(owner.begin(), owner.end(), kNone);
    std::fill(assigned.begin(), assigned.end(), kNone);
    std::vector<std::size_t> queue(n);
    std::iota(queue.begin(), queue.end(), 0);
    std::size_t head = 0;
    while (head < queue.size()) {
      const std::size_t i = queue[head++];
      const double* row = cost.data() + i * n;
      // value of object j to bidder i is -(c_ij + p_j)
      double best = kInf, second = kInf;
      std::size_t bj = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double t = row[j] + price[j];
        if (t < best) {
          second = best;
          best = t;
          bj = j;
        } else if (t < second) {
          second = t;
        }
      }
      const double increment = (n == 1 ? 0.0 : second - best) + eps;
      price[bj] += increment;
      if (owner[bj] != kNone) {
        assigned[owner[bj]] = kNone;
        queue.push_back(owner[bj]);
      }
      owner[bj] = i;
      assigned[i] = bj;
      if (++bids > max_bids)
        throw SolverError("auction: bid budget exhausted with certified relative gap " +
                          (std::isfinite(gap) ? std::to_string(gap) : std::string("unknown")));
    }
    double primal = 0.0, dual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      primal += cost[i * n + assigned[i]];
      const double* row = cost.data() + i * n;
      double m = kInf;
      for (std::size_t j = 0; j < n; ++j) m = std::min(m, row[j] + price[j]);
      dual += m;
    }
    for (double p : price) dual -= p;
    r.assignment = assigned;
    r.primal = primal;
    r.dual = std::min(dual, primal);
    gap = primal > 0.0 ? (primal - r.dual) / primal : 0.0;
    if (primal - r.dual <= rel_gap * primal || primal - r.dual <= abs_tol) return r;
    eps /= 5.0;
  }
}

double matched_cost(const PointSet& p, const PointSet& q, std::span<const std::size_t> assignment) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += dist(p.points[i], q.points[assignment[i]]);
  return s / static_cast<double>(p.size());
}

std::vector<Point3> emd_grad(const PointSet& p, const PointSet& q, std::span<const std::size_t> assignment) {
  std::vector<Point3> g(p.size(), {0.0, 0.0, 0.0});
  const double n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& a = p.points[i];
    const auto& b = q.points[assignment[i]];
    const double d = dist(a, b);
    if (d == 0.0) continue;  // subgradient 0 at coincident points
    for (int c = 0; c < 3; ++c) g[i][c] = (a[c] - b[c]) / (d * n);
  }
  return g;
}

EmdResult emd(const PointSet& p, const PointSet& q, EmdMode mode) {
  if (p.size() != q.size())
    throw MetricError("emd: size mismatch (" + std::to_string(p.size()) + " vs " + std::to_string(q.size()) + ")");
  require_nonempty(p, q, "emd");
  const std::size_t n = p.size();
  std::vector<double> cost(n * n);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(n); ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = dist(p.points[i], q.points[j]);

  EmdResult r;
  if (mode == EmdMode::kExact) {
    r.match.assignment = solve_assignment(cost, n);
  } else {
    const auto a = solve_assignment_auction(cost, n, kAuctionGap);
    r.match.assignment = a.assignment;
    r.relative_gap = a.primal > 0.0 ? (a.primal - a.dual) / a.primal : 0.0;
  }
  r.match.cost = matched_cost(p, q, r.match.assignment);
  r.value = r.match.cost;
  return r;
}

EmdResult emd(const PointSet& p, const PointSet& q) {
  return emd(p, q, p.size() <= kExactEmdLimit ? EmdMode::kExact : EmdMode::kApprox);
}

double outlier_fraction(const PointSet& p, const PointSet& gt, double threshold) {
  require_nonempty(p, gt, "outlier_fraction");
  std::vector<std::size_t> idx(p.size());
  std::vector<double> d2(p.size());
  kernels::nearest_neighbors(p.points, gt.points, idx, d2);
  std::size_t out = 0;
  for (double v : d2)
    if (std::sqrt(v) > threshold) ++out;
  return static_cast<double>(out) / static_cast<double>(p.size());
}

// -- masks ---------------------------------------------------------------------------------

double dice(const MaskVolume& a, const MaskVolume& b) {
  if (!(a.dims == b.dims)) throw MetricError("dice: dims mismatch " + a.dims.str() + " vs " + b.dims.str());
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    na += a.data[i];
    nb += b.data[i];
    both += a.data[i] & b.data[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<std::array<int, 3>> boundary_voxels(const MaskVolume& m) {
  std::vector<std::array<int, 3>> out;
  const Dims d = m.dims;
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        if (!m.at(z, y, x)) continue;
        if (!m.get(z - 1, y, x) || !m.get(z + 1, y, x) || !m.get(z, y - 1, x) || !m.get(z, y + 1, x) ||
            !m.get(z, y, x - 1) || !m.get(z, y, x + 1))
          out.push_back({z, y, x});
      }
  return out;
}

SurfaceDistances surface_distances(const MaskVolume& a, const MaskVolume& b) {
  if (!(a.dims == b.dims)) throw MetricError("surface distance: dims mismatch " + a.dims.str() + " vs " + b.dims.str());
  const auto sa = boundary_voxels(a), sb = boundary_voxels(b);
  if (sa.empty() || sb.empty()) throw MetricError("surface distance: empty mask");
  const Dims d = a.dims;
  auto seeds = [&](const std::vector<std::array<int, 3>>& s) {
    std::vector<std::uint8_t> m(d.voxels(), 0);
    for (const auto& v : s) m[d.index(v[0], v[1], v[2])] = 1;
    return m;
  };
  const auto edt_a = kernels::squared_edt(seeds(sa), d);
  const auto edt_b = kernels::squared_edt(seeds(sb), d);
  SurfaceDistances r;
  r.a_to_b.reserve(sa.size());
  r.b_to_a.reserve(sb.size());
  for (const auto& v : sa) r.a_to_b.push_back(std::sqrt(edt_b[d.index(v[0], v[1], v[2])]));
  for (const auto& v : sb) r.b_to_a.push_back(std::sqrt(edt_a[d.index(v[0], v[1], v[2])]));
  return r;
}

double hausdorff(const MaskVolume& a, const MaskVolume& b) {
  const auto s = surface_distances(a, b);
  return std::max(*std::max_element(s.a_to_b.begin(), s.a_to_b.end()),
                  *std::max_element(s.b_to_a.begin(), s.b_to_a.end()));
}

double avg_surface_distance(const MaskVolume& a, const MaskVolume& b) {
  const auto s = surface_distances(a, b);
  const double total = std::accumulate(s.a_to_b.begin(), s.a_to_b.end(), 0.0) +
                       std::accumulate(s.b_to_a.begin(), s.b_to_a.end(), 0.0);
  return total / static_cast<double>(s.a_to_b.size() + s.b_to_a.size());
}

// -- Wilcoxon ---------------------------------------------------------------------------

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw MetricError("wilcoxon: samples must be paired (equal length)");
  std::vector<double> diff;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (!std::isfinite(d)) throw MetricError("wilcoxon: non-finite difference");
    if (d != 0.0) diff.push_back(d);
  }
  WilcoxonResult r;
  r.n = diff.size();
  if (r.n == 0) return r;  // degenerate: p = 1
  if (r.n < kWilcoxonMinPairs)
    throw MetricError("wilcoxon: need at least " + std::to_string(kWilcoxonMinPairs) +
                      " non-zero differences, got " + std::to_string(r.n));

  const std::size_t n = r.n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(diff[a]) < std::abs(diff[b]); });
  std::vector<double> rank(n);
  double tie_term = 0.0;
  for (std::size_t s = 0; s < n;) {
    std::size_t e = s;
    while (e + 1 < n && std::abs(diff[order[e + 1]]) == std::abs(diff[order[s]])) ++e;
    const double avg = (static_cast<double>(s + 1) + static_cast<double>(e + 1)) / 2.0;
    for (std::size_t k = s; k <= e; ++k) rank[order[k]] = avg;
    const double t = static_cast<double>(e - s + 1);
    tie_term += t * t * t - t;
    s = e + 1;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (diff[i] > 0) r.w_plus += rank[i];

  if (n <= kWilcoxonExactLimit) {
    // Doubled ranks are integers; count sign patterns by doubled rank sum.
    std::vector<int> r2(n);
    int total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r2[i] = static_cast<int>(std::lround(2.0 * rank[i]));
      total += r2[i];
    }
    std::vector<double> count(total + 1, 0.0);
    count[0] = 1.0;
    int reach = 0;
    for (int v : r2) {
      for (int s = reach; s >= 0; --s)
        if (count[s] != 0.0) count[s + v] += count[s];
      reach += v;
    }
    const int w2 = static_cast<int>(std::lround(2.0 * r.w_plus));
    double le = 0.0, ge = 0.0;
    for (int s = 0; s <= total; ++s) {
      if (s <= w2) le += count[s];
      if (s >= w2) ge += count[s];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    r.p_value = std::min(1.0, 2.0 * std::min(le, ge) / all);
    r.exact = true;
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double z = var > 0.0 ? (r.w_plus - mean) / std::sqrt(var) : 0.0;
    r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
    r.exact = false;
  }
  return r;
}

// -- reports -------------------------------------------------------------------------------

bool higher_is_better(const std::string& metric) { return metric == "dice"; }

std::optional<double> CaseRecord::get(const std::string& metric) const {
  auto it = values.find(metric);
  if (it == values.end()) return std::nullopt;
  return it->second;
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  a.n = values.size();
  if (a.n == 0) return a;
  double s = 0.0;
  for (double v : values) s += v;
  a.mean = s / static_cast<double>(a.n);
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.sd = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

void MetricsReport::recompute_aggregates() {
  aggregates.clear();
  for (const auto& m : metric_names()) {
    std::vector<double> v;
    for (const auto& c : cases)
      if (auto x = c.get(m)) v.push_back(*x);
    if (!v.empty()) aggregates[m] = aggregate(v);
  }
}

std::string MetricsReport::to_json() const {
  using nlohmann::json;
  json j;
  j["name"] = name;
  j["cases"] = json::array();
  for (const auto& c : cases) {
    json r{{"id", c.id}, {"split", c.split}, {"missing_prediction", c.missing_prediction}};
    for (const auto& m : metric_names()) {
      auto v = c.get(m);
      r[m] = v ? json(*v) : json(nullptr);
    }
    j["cases"].push_back(r);
  }
  j["aggregates"] = json::object();
  for (const auto& [m, a] : aggregates) j["aggregates"][m] = {{"mean", a.mean}, {"sd", a.sd}, {"n", a.n}};
  j["p_values"] = json::array();
  for (const auto& p : p_values)
    j["p_values"].push_back({{"baseline", p.baseline}, {"variant", p.variant}, {"metric", p.metric}, {"p_value", p.p_value}});
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  using nlohmann::json;
  MetricsReport r;
  try {
    const json j = json::parse(text);
    r.name = j.value("name", std::string{});
    for (const auto& c : j.at("cases")) {
      CaseRecord rec;
      rec.id = c.at("id").get<std::string>();
      rec.split = c.value("split", std::string{});
      rec.missing_prediction = c.value("missing_prediction", false);
      for (const auto& m : metric_names())
        if (c.contains(m) && !c[m].is_null()) rec.values[m] = c[m].get<double>();
      r.cases.push_back(std::move(rec));
    }
    if (j.contains("aggregates"))
      for (const auto& [m, a] : j["aggregates"].items())
        r.aggregates[m] = {a.at("mean").get<double>(), a.at("sd").get<double>(), a.at("n").get<std::size_t>()};
    if (j.contains("p_values"))
      for (const auto& p : j["p_values"])
        r.p_values.push_back({p.at("baseline").get<std::string>(), p.at("variant").get<std::string>(),
                              p.at("metric").get<std::string>(), p.at("p_value").get<double>()});
  } catch (const json::exception& e) {
    throw FormatError(std::string("metrics report: ") + e.what());
  }
  return r;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "id,split";
  for (const auto& m : metric_names()) os << ',' << m;
  os << ",missing_prediction\n";
  char buf[64];
  for (const auto& c : cases) {
    os << c.id << ',' << c.split;
    for (const auto& m : metric_names()) {
      os << ',';
      if (auto v = c.get(m)) {
        std::snprintf(buf, sizeof buf, "%.17g", *v);
        os << buf;
      }
    }
    os << ',' << (c.missing_prediction ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace shapepoint::shapemetrics
