// Sampling-based certification of Lipschitz deviations ||f - Id||_L, plus
// the near-identity property suite (two-sided isometry sandwich, inverse
// deviation bound, pointwise composition-derivative bound).
//
// Certificates are honest one-sided estimates: the pair bound is a lower
// bound on the true seminorm by definition of the sup; the Jacobian-grid
// value is a heuristic upper estimate (max over sampled points, not a proof).
#pragma once

#include "nearid/map.hpp"
#include "nearid/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nearid {

// Certification domain: either the ball B_R(R^d) or a finite point cloud
// (used for the pushforward domains of decomposition layers).
class Domain {
 public:
  static Domain ball(int d, double R);
  static Domain cloud(std::vector<Vec> points);

  bool is_ball() const { return is_ball_; }
  int dim() const { return d_; }
  double radius() const { return R_; }  // ball radius, or max cloud norm
  const std::vector<Vec>& points() const { return points_; }

  // One domain sample: uniform in the ball, or a uniformly chosen cloud point.
  Vec draw(Rng& rng) const;

 private:
  Domain() = default;
  bool is_ball_ = true;
  int d_ = 0;
  double R_ = 0.0;
  std::vector<Vec> points_;
};

struct LipschitzCertificate {
  double pair_lower_bound = 0.0;   // max sampled quotient of f - Id (lower bound)
  double jac_grid_estimate = 0.0;  // max ||Df(x) - I||_2 over the grid
  bool analytic_jacobian = false;  // grid estimate used an analytic Jacobian
  int n_pairs = 0;
  int n_grid = 0;
  std::uint64_t seed = 0;
  // max(0, pair_lower_bound - jac_grid_estimate): how far the sampled pairs
  // exceeded the grid estimate.  Reported, never assumed to be zero.
  double grid_gap_slack = 0.0;
  std::string domain_kind;  // "ball" or "cloud"

  // Best available deviation estimate: the larger of the two one-sided
  // values (the true seminorm is >= pair_lower_bound and is usually tracked
  // closely by the Jacobian grid).
  double deviation() const {
    return pair_lower_bound > jac_grid_estimate ? pair_lower_bound
                                                : jac_grid_estimate;
  }
};

// Estimate ||f - Id||_L over the domain from n_pairs sampled pairs plus a
// Jacobian grid.  Pair k of a run with larger n_pairs reuses the exact same
// draws (nested sampling), so the bound is non-decreasing in n_pairs.
LipschitzCertificate certify_deviation(const DifferentiableMap& f,
                                       const Domain& domain, int n_pairs,
                                       std::uint64_t seed);

// Near-identity property suite for a map with ||f - Id||_L <= alpha < 1:
//   part 1: (1-alpha)||x-y|| <= ||f(x)-f(y)|| <= (1+alpha)||x-y||,
//   part 2: Newton inversion converges and
//           ||(f^{-1}(u)-u) - (f^{-1}(v)-v)|| <= alpha/(1-alpha) ||u-v||,
//   part 3: ||(f(y+D) - (y+D)) - (f(y) - y)|| <= alpha ||D|| pointwise for
//           sampled perturbations D (the composition-derivative bound
//           instantiated at sample points).
// Margins are the worst slack (bound minus observed); a part passes when its
// worst margin stays above -1e-10 * scale (floating-point noise allowance).
struct NearIdentityReport {
  bool part1_pass = true;
  bool part2_pass = true;
  bool part3_pass = true;
  double part1_worst_lower_margin = 0.0;
  double part1_worst_upper_margin = 0.0;
  double part2_worst_margin = 0.0;
  double part3_worst_margin = 0.0;
  int n = 0;
  int newton_failures = 0;
  bool all_pass() const { return part1_pass && part2_pass && part3_pass; }
};

NearIdentityReport near_identity_suite(const DifferentiableMap& f, double alpha,
                                 const Domain& domain, int n,
                                 std::uint64_t seed);

}  // namespace nearid
