#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shapepoint/surface.hpp"
#include "shapepoint/volume.hpp"

namespace shapepoint::shapemetrics {

// -- point-set distances -------------------------------------------------------

// Symmetric squared-distance Chamfer:
// mean_p min_q |p-q|^2 + mean_q min_p |p-q|^2.
double chamfer(const PointSet& p, const PointSet& q);

struct ChamferGrad {
  double value = 0.0;
  std::vector<Point3> grad_p;
  std::vector<Point3> grad_q;
};

// Gradient through the nearest neighbours (lowest index on ties).
ChamferGrad chamfer_with_grad(const PointSet& p, const PointSet& q);

// Bijection p[i] -> q[assignment[i]].
struct MatchResult {
  std::vector<std::size_t> assignment;
  double cost = 0.0;  // mean matched Euclidean distance
};

enum class EmdMode { kExact, kApprox };

struct EmdResult {
  double value = 0.0;
  MatchResult match;
  double relative_gap = 0.0;  // certified (primal - dual) / primal; 0 for exact
};

// Largest size the exact solver is required for; larger sets default to
// the auction solver.
inline constexpr std::size_t kExactEmdLimit = 512;
inline constexpr double kAuctionGap = 0.01;

// min over bijections of the mean matched Euclidean distance.
EmdResult emd(const PointSet& p, const PointSet& q, EmdMode mode);
// Exact up to kExactEmdLimit points, auction beyond.
EmdResult emd(const PointSet& p, const PointSet& q);

// Mean distance under a fixed assignment.
double matched_cost(const PointSet& p, const PointSet& q, std::span<const std::size_t> assignment);

// Gradient of matched_cost w.r.t. p with the assignment held fixed.
std::vector<Point3> emd_grad(const PointSet& p, const PointSet& q, std::span<const std::size_t> assignment);

// Dense linear assignment (shortest augmenting path with potentials).
// cost is n x n row-major; returns row -> column.
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

struct AuctionResult {
  std::vector<std::size_t> assignment;
  double primal = 0.0;  // total cost
  double dual = 0.0;    // certified lower bound on the optimal total cost
};

// Epsilon-scaling forward auction; stops once (primal - dual) <= rel_gap * primal.
// Throws SolverError when the iteration budget runs out.
AuctionResult solve_assignment_auction(std::span<const double> cost, std::size_t n, double rel_gap,
                                       std::size_t max_bids = 0);

// Fraction of points whose nearest-neighbour distance to `gt` exceeds threshold.
inline constexpr double kOutlierThreshold = 0.05;
double outlier_fraction(const PointSet& p, const PointSet& gt, double threshold = kOutlierThreshold);

// -- mask overlap and surface distances ------------------------------------------

double dice(const MaskVolume& a, const MaskVolume& b);

// Foreground voxels with at least one 6-neighbour in the background
// (outside the grid counts as background).
std::vector<std::array<int, 3>> boundary_voxels(const MaskVolume& m);

struct SurfaceDistances {
  std::vector<double> a_to_b;  // per boundary voxel of a, distance to the boundary of b
  std::vector<double> b_to_a;
};

// Exact Euclidean distances in voxel units; throws MetricError on an empty mask.
SurfaceDistances surface_distances(const MaskVolume& a, const MaskVolume& b);

double hausdorff(const MaskVolume& a, const MaskVolume& b);
double avg_surface_distance(const MaskVolume& a, const MaskVolume& b);

// -- paired test ---------------------------------------------------------------------

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;  // sum of ranks of positive differences
  std::size_t n = 0;    // pairs with non-zero difference
  bool exact = true;
};

inline constexpr std::size_t kWilcoxonExactLimit = 25;
inline constexpr std::size_t kWilcoxonMinPairs = 6;

// Two-sided signed-rank test on x - y. Zero differences are dropped; exact
// null distribution up to 25 pairs, normal approximation with tie
// correction above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

// -- reports ---------------------------------------------------------------------------

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"emd", "cd", "dice", "hd", "avgd", "outlier"};
  return names;
}

// True when larger values are better.
bool higher_is_better(const std::string& metric);

struct CaseRecord {
  std::string id;
  std::string split;
  std::map<std::string, double> values;  // missing metrics are absent
  bool missing_prediction = false;       // empty predicted mask

  std::optional<double> get(const std::string& metric) const;
};

struct Aggregate {
  double mean = 0.0;
  double sd = 0.0;  // sample (n - 1) convention, 0 when n < 2
  std::size_t n = 0;
};

struct PairwiseP {
  std::string baseline;
  std::string variant;
  std::string metric;
  double p_value = 1.0;
};

struct MetricsReport {
  std::string name;
  std::vector<CaseRecord> cases;
  std::map<std::string, Aggregate> aggregates;
  std::vector<PairwiseP> p_values;

  void recompute_aggregates();
  std::string to_json() const;
  std::string to_csv() const;
  static MetricsReport from_json(const std::string& text);
};

Aggregate aggregate(std::span<const double> values);

}  // namespace shapepoint::shapemetrics
