#include "nearid/map.hpp"

#include <Eigen/LU>

#include <cmath>

namespace nearid {

void DifferentiableMap::check_dim(const Vec& x, const char* where) const {
  if (x.size() != dim()) {
    throw DimensionError(std::string(where) + ": expected dimension " +
                         std::to_string(dim()) + ", got " +
                         std::to_string(x.size()));
  }
}

Mat DifferentiableMap::jacobian(const Vec& x) const { return fd_jacobian(*this, x); }

Vec DifferentiableMap::invert(const Vec& y, double tol) const {
  return newton_invert(*this, y, y, tol);
}

Mat fd_jacobian(const DifferentiableMap& map, const Vec& x) {
  const int d = map.dim();
  const double step = 1e-6 * std::max(1.0, x.norm());
  Mat J(d, d);
  Vec xp = x, xm = x;
  for (int j = 0; j < d; ++j) {
    xp(j) = x(j) + step;
    xm(j) = x(j) - step;
    J.col(j) = (map.eval(xp) - map.eval(xm)) / (2.0 * step);
    xp(j) = x(j);
    xm(j) = x(j);
  }
  return J;
}

Vec newton_invert(const DifferentiableMap& map, const Vec& y, const Vec& x0,
                  double tol) {
  if (tol <= 0.0) throw std::invalid_argument("newton_invert: tol must be positive");
  Vec x = x0;
  Vec r = map.eval(x) - y;
  double rn = r.norm();
  for (int iter = 0; iter < kNewtonMaxIter; ++iter) {
    if (rn <= tol) return x;
    const Mat J = map.jacobian(x);
    const Vec dx = J.partialPivLu().solve(r);
    // Damping: halve the step until the residual actually decreases.
    double t = 1.0;
    for (;;) {
      Vec x_new = x - t * dx;
      Vec r_new = map.eval(x_new) - y;
      const double rn_new = r_new.norm();
      if (rn_new < rn || rn_new <= tol) {
        x = std::move(x_new);
        r = std::move(r_new);
        rn = rn_new;
        break;
      }
      t *= 0.5;
      if (t < 1e-12) {
        throw InversionError("newton_invert: stalled (no descent direction)", rn);
      }
    }
  }
  if (rn <= tol) return x;
  throw InversionError("newton_invert: no convergence after " +
                           std::to_string(kNewtonMaxIter) + " iterations",
                       rn);
}

Vec IdentityMap::eval(const Vec& x) const {
  check_dim(x, "IdentityMap::eval");
  return x;
}

Mat IdentityMap::jacobian(const Vec& x) const {
  check_dim(x, "IdentityMap::jacobian");
  return Mat::Identity(d_, d_);
}

Vec IdentityMap::invert(const Vec& y, double /*tol*/) const {
  check_dim(y, "IdentityMap::invert");
  return y;
}

}  // namespace nearid
