#include "nearid/lipschitz_cert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nearid {

Domain Domain::ball(int d, double R) {
  if (d <= 0) throw std::invalid_argument("Domain::ball: d must be positive");
  if (R <= 0.0) throw std::invalid_argument("Domain::ball: R must be positive");
  Domain dom;
  dom.is_ball_ = true;
  dom.d_ = d;
  dom.R_ = R;
  return dom;
}

Domain Domain::cloud(std::vector<Vec> points) {
  if (points.empty()) throw std::invalid_argument("Domain::cloud: empty cloud");
  Domain dom;
  dom.is_ball_ = false;
  dom.d_ = static_cast<int>(points.front().size());
  for (const Vec& p : points) {
    if (p.size() != dom.d_)
      throw std::invalid_argument("Domain::cloud: inconsistent dimensions");
  }
  dom.R_ = max_norm(points);
  dom.points_ = std::move(points);
  return dom;
}

Vec Domain::draw(Rng& rng) const {
  if (is_ball_) return rng.in_ball(d_, R_);
  return points_[static_cast<std::size_t>(rng.below(points_.size()))];
}

namespace {

// Difference quotient of f - Id on one pair.
double deviation_quotient(const DifferentiableMap& f, const Vec& x, const Vec& y) {
  const double dxy = (x - y).norm();
  if (dxy < 1e-14) return 0.0;
  return ((f.eval(x) - x) - (f.eval(y) - y)).norm() / dxy;
}

// Index of the nearest distinct neighbor of points[i] (linear scan; clouds
// here are at most a few thousand points).
std::size_t nearest_neighbor(const std::vector<Vec>& points, std::size_t i) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_j = i;
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (j == i) continue;
    const double d = (points[j] - points[i]).norm();
    if (d < best && d > 0.0) {
      best = d;
      best_j = j;
    }
  }
  return best_j;
}

}  // namespace

LipschitzCertificate certify_deviation(const DifferentiableMap& f,
                                       const Domain& domain, int n_pairs,
                                       std::uint64_t seed) {
  if (n_pairs < 1)
    throw std::invalid_argument("certify_deviation: n_pairs must be >= 1");
  LipschitzCertificate cert;
  cert.seed = seed;
  cert.n_pairs = n_pairs;
  cert.domain_kind = domain.is_ball() ? "ball" : "cloud";
  cert.analytic_jacobian = f.has_analytic_jacobian();

  const double scale = std::max(domain.radius(), 1e-8);

  // Pair stream.  Consumption per pair depends only on earlier draws, so a
  // run with larger n_pairs extends this one (nested-sample monotonicity).
  Rng rng(derive_seed(seed, "certify_deviation/pairs"));
  double best = 0.0;
  for (int k = 0; k < n_pairs; ++k) {
    Vec x = domain.draw(rng);
    Vec y;
    const int kind = k % 3;
    if (kind == 0) {
      y = domain.draw(rng);
    } else if (kind == 1) {
      // Short-range pair: probes the derivative limit of the seminorm.
      y = x + 1e-4 * scale * rng.on_sphere(domain.dim());
    } else {
      // Cloud: nearest-neighbor pair; ball: medium-range pair.
      if (domain.is_ball()) {
        y = x + 1e-2 * scale * rng.on_sphere(domain.dim());
      } else {
        const std::size_t i = static_cast<std::size_t>(rng.below(domain.points().size()));
        x = domain.points()[i];
        y = domain.points()[nearest_neighbor(domain.points(), i)];
      }
    }
    best = std::max(best, deviation_quotient(f, x, y));
  }
  cert.pair_lower_bound = best;

  // Jacobian grid: for a ball, seeded samples plus the center (deviations of
  // the built-in families peak there); for a cloud, the cloud points
  // themselves (strided down to a cap).
  Rng grid_rng(derive_seed(seed, "certify_deviation/grid"));
  const Mat I = Mat::Identity(domain.dim(), domain.dim());
  double jac_best = 0.0;
  int n_grid = 0;
  if (domain.is_ball()) {
    const int n = 256;
    jac_best = spectral_norm(f.jacobian(Vec::Zero(domain.dim())) - I);
    ++n_grid;
    for (int k = 0; k < n; ++k) {
      const Vec x = grid_rng.in_ball(domain.dim(), domain.radius());
      jac_best = std::max(jac_best, spectral_norm(f.jacobian(x) - I));
      ++n_grid;
    }
  } else {
    const std::size_t cap = 1024;
    const std::size_t n = domain.points().size();
    const std::size_t stride = n <= cap ? 1 : (n + cap - 1) / cap;
    for (std::size_t i = 0; i < n; i += stride) {
      jac_best = std::max(jac_best, spectral_norm(f.jacobian(domain.points()[i]) - I));
      ++n_grid;
    }
  }
  cert.jac_grid_estimate = jac_best;
  cert.n_grid = n_grid;
  cert.grid_gap_slack = std::max(0.0, cert.pair_lower_bound - cert.jac_grid_estimate);
  return cert;
}

NearIdentityReport near_identity_suite(const DifferentiableMap& f, double alpha,
                                 const Domain& domain, int n,
                                 std::uint64_t seed) {
  if (alpha >= 1.0)
    throw std::invalid_argument("near_identity_suite: requires alpha < 1");
  if (alpha < 0.0)
    throw std::invalid_argument("near_identity_suite: alpha must be >= 0");
  if (n < 1) throw std::invalid_argument("near_identity_suite: n must be >= 1");

  NearIdentityReport report;
  report.n = n;
  const double scale = std::max(domain.radius(), 1e-8);
  // Floating-point noise allowance for the margin comparisons: the bounds
  // hold with equality for e.g. linear maps, where roundoff can push the
  // computed margin a few ulps negative.
  const double slack = 1e-10;

  double p1_lo = std::numeric_limits<double>::infinity();
  double p1_hi = std::numeric_limits<double>::infinity();
  double p2 = std::numeric_limits<double>::infinity();
  double p3 = std::numeric_limits<double>::infinity();

  Rng rng(derive_seed(seed, "near_identity_suite"));
  for (int k = 0; k < n; ++k) {
    // --- part 1: two-sided sandwich on a domain pair.
    const Vec x = domain.draw(rng);
    Vec y = (k % 2 == 0) ? domain.draw(rng)
                         : Vec(x + 1e-3 * scale * rng.on_sphere(domain.dim()));
    const double dxy = (x - y).norm();
    if (dxy > 1e-14) {
      const double dfxy = (f.eval(x) - f.eval(y)).norm();
      p1_lo = std::min(p1_lo, dfxy - (1.0 - alpha) * dxy);
      p1_hi = std::min(p1_hi, (1.0 + alpha) * dxy - dfxy);
      if (dfxy - (1.0 - alpha) * dxy < -slack * std::max(1.0, dxy) ||
          (1.0 + alpha) * dxy - dfxy < -slack * std::max(1.0, dxy))
        report.part1_pass = false;
    }

    // --- part 2: inverse deviation bound on image points u = f(x), v = f(y).
    const Vec u = f.eval(x);
    const Vec v = f.eval(y);
    const double duv = (u - v).norm();
    if (duv > 1e-14) {
      bool ok = true;
      Vec fu, fv;
      try {
        // Plain damped Newton (not the family's closed form): part of the
        // property is that Newton converges for near-identity maps.
        fu = newton_invert(f, u, u, 1e-12);
        fv = newton_invert(f, v, v, 1e-12);
      } catch (const InversionError&) {
        ok = false;
        ++report.newton_failures;
        report.part2_pass = false;
      }
      if (ok) {
        const double dev = ((fu - u) - (fv - v)).norm();
        const double bound = alpha / (1.0 - alpha) * duv;
        p2 = std::min(p2, bound - dev);
        // Newton residual 1e-12 can perturb the deviation by M*tol; allow it.
        if (bound - dev < -(slack * std::max(1.0, duv) + 1e-10))
          report.part2_pass = false;
      }
    }

    // --- part 3: pointwise composition-derivative bound.  The functional
    // statement ||F(g+D) - F(g) - ...|| <= alpha ||D|| instantiates at each
    // sample point with y = g(x) a domain point and D a perturbation vector.
    const Vec base = domain.draw(rng);
    const double mag = (k % 3 == 0) ? 1e-3 * scale
                     : (k % 3 == 1) ? 1e-1 * scale
                                    : scale * rng.uniform01();
    const Vec delta = mag * rng.on_sphere(domain.dim());
    const Vec lhs = (f.eval(base + delta) - (base + delta)) - (f.eval(base) - base);
    const double dev3 = lhs.norm();
    const double bound3 = alpha * delta.norm();
    p3 = std::min(p3, bound3 - dev3);
    if (bound3 - dev3 < -slack * std::max(1.0, delta.norm()))
      report.part3_pass = false;
  }

  report.part1_worst_lower_margin = p1_lo;
  report.part1_worst_upper_margin = p1_hi;
  report.part2_worst_margin = p2;
  report.part3_worst_margin = p3;
  return report;
}

}  // namespace nearid
