// Core interface for differentiable maps R^d -> R^d, plus generic
// finite-difference Jacobians and damped-Newton inversion.
#pragma once

#include "nearid/linalg.hpp"

#include <memory>
#include <stdexcept>
#include <string>

namespace nearid {

// Default residual tolerance for numeric inversion.
inline constexpr double kDefaultInvertTol = 1e-10;
// Iteration cap for Newton's method.
inline constexpr int kNewtonMaxIter = 100;

// Thrown when an inverse solve fails to reach tolerance within the
// iteration cap; carries the final residual for diagnostics.
class InversionError : public std::runtime_error {
 public:
  InversionError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a map or matrix fails the positive-orientation requirement
// (det <= 0 or numerically singular where positivity is needed).
class OrientationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A differentiable map R^d -> R^d.  Implementations must be immutable after
// construction; all methods are const and safe to call concurrently.
class DifferentiableMap {
 public:
  virtual ~DifferentiableMap() = default;

  virtual int dim() const = 0;

  // h(x).
  virtual Vec eval(const Vec& x) const = 0;

  // Jacobian J_{ij} = d h_i / d x_j.  Default: central finite differences.
  virtual Mat jacobian(const Vec& x) const;

  // True when jacobian() is analytic rather than the finite-difference
  // fallback; callers use this to decide whether a Jacobian-based estimate
  // is trustworthy at tight tolerances.
  virtual bool has_analytic_jacobian() const { return false; }

  // Solve h(x) = y.  Default: damped Newton started at y (near-identity maps
  // make y an excellent initial guess).  Implementations with closed-form
  // inverses override this.
  virtual Vec invert(const Vec& y, double tol = kDefaultInvertTol) const;

 protected:
  void check_dim(const Vec& x, const char* where) const;
};

// Central finite-difference Jacobian with step 1e-6 * max(1, ||x||).
Mat fd_jacobian(const DifferentiableMap& map, const Vec& x);

// Damped Newton for h(x) = y from initial guess x0: full steps while the
// residual decreases, otherwise halve.  Throws InversionError after
// kNewtonMaxIter iterations without reaching tol.
Vec newton_invert(const DifferentiableMap& map, const Vec& y, const Vec& x0,
                  double tol);

// The identity on R^d; handy as a base case in tests and stacks.
class IdentityMap final : public DifferentiableMap {
 public:
  explicit IdentityMap(int d) : d_(d) {}
  int dim() const override { return d_; }
  Vec eval(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  bool has_analytic_jacobian() const override { return true; }
  Vec invert(const Vec& y, double tol) const override;

 private:
  int d_;
};

}  // namespace nearid
