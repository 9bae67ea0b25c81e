// Smooth invertible maps on the ball B_R(R^d) with certified constants.
//
// A SmoothMap carries, next to evaluation/Jacobian/inverse rules, the three
// constants the decomposition machinery needs:
//   alpha — smoothness: ||(Dh(y)-Dh(x))u|| <= alpha ||y-x|| ||u||,
//   M     — Lipschitz constant of h^{-1},
//   R     — radius of the certified domain ball,
// plus an anchor point x0 at which the map is positively oriented.
//
// Built-in families are chosen so that inverses are exact (closed form or
// forward substitution) and alpha/M are analytic, which keeps every
// downstream bound checkable rather than merely plausible.
#pragma once

#include "nearid/map.hpp"
#include "nearid/rng.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace nearid {

// Maximum of |d/dz sech^2(z)| = |2 sech^2(z) tanh(z)|, attained at
// tanh(z) = 1/sqrt(3); enters the smoothness constants of the tanh families.
inline constexpr double kSechSqSlopeMax = 0.76980035891950105;  // 4/(3*sqrt(3))

struct MapConstants {
  double alpha = 0.0;      // smoothness: Lipschitz constant of x -> Dh(x)
  double M = 1.0;          // Lipschitz constant of the inverse map
  double R = 1.0;          // certified domain radius
  bool estimated = false;  // true when alpha/M are sampled estimates, not analytic
};

class SmoothMap : public DifferentiableMap {
 public:
  SmoothMap(int d, MapConstants constants, Vec x0);

  int dim() const override { return d_; }

  double alpha() const { return constants_.alpha; }
  double M() const { return constants_.M; }
  double R() const { return constants_.R; }
  bool constants_estimated() const { return constants_.estimated; }
  const MapConstants& constants() const { return constants_; }
  const Vec& x0() const { return x0_; }

  // Family-specific analytic upper bound on sup_{x} ||Dh(x)||_2 (global for
  // all built-in families).  Distinct from the 1 + alpha*R bound, which only
  // applies to maps normalized to Dh(0) = I.
  virtual double lipschitz_bound() const = 0;

  // Family tag used by the serialization layer.
  virtual std::string family() const = 0;

 protected:
  // Orientation invariant det(Dh(x0)) > 0; called by each concrete
  // constructor once its own state is ready.
  void check_orientation() const;

  MapConstants constants_;
  Vec x0_;

 private:
  int d_;
};

using SmoothMapPtr = std::shared_ptr<const SmoothMap>;

// --- Family (i): affine map x -> Dx + b with det(D) > 0. ---
class AffineMap final : public SmoothMap {
 public:
  AffineMap(Mat D, Vec b, double R, Vec x0);
  AffineMap(Mat D, Vec b, double R);  // x0 = 0

  Vec eval(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  bool has_analytic_jacobian() const override { return true; }
  Vec invert(const Vec& y, double tol) const override;
  double lipschitz_bound() const override;
  std::string family() const override { return "affine"; }

  const Mat& D() const { return D_; }
  const Vec& b() const { return b_; }

 private:
  Mat D_;
  Vec b_;
  Eigen::PartialPivLU<Mat> lu_;
  double sigma_max_;
};

// --- Family (iii): componentwise x -> x + beta * tanh(x), beta in (0,1). ---
class TanhDiagonalMap final : public SmoothMap {
 public:
  TanhDiagonalMap(int d, double beta, double R, Vec x0);
  TanhDiagonalMap(int d, double beta, double R);  // x0 = 0

  Vec eval(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  bool has_analytic_jacobian() const override { return true; }
  // Per-coordinate safeguarded Newton on the monotone scalar equation
  // u + beta*tanh(u) = y.
  Vec invert(const Vec& y, double tol) const override;
  double lipschitz_bound() const override { return 1.0 + beta_; }
  std::string family() const override { return "tanh_diagonal"; }

  double beta() const { return beta_; }

 private:
  double beta_;
};

// --- Family (ii): lower-triangular flow h(x)_j = x_j + beta*tanh(w_j . x_{<j}). ---
// W must be strictly lower triangular; the inverse is one forward-
// substitution pass and therefore exact.
class TriangularFlowMap final : public SmoothMap {
 public:
  TriangularFlowMap(Mat W, double beta, double R, Vec x0);
  TriangularFlowMap(Mat W, double beta, double R);  // x0 = 0

  Vec eval(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  bool has_analytic_jacobian() const override { return true; }
  Vec invert(const Vec& y, double tol) const override;
  double lipschitz_bound() const override { return 1.0 + beta_ * w_norm_; }
  std::string family() const override { return "triangular_flow"; }

  const Mat& W() const { return W_; }
  double beta() const { return beta_; }

 private:
  Mat W_;
  double beta_;
  double w_norm_;  // ||W||_2
};

// --- Family (iv): composition, applied components[0] first. ---
// Constants propagate analytically: alpha(f.g) <= alpha_f L_g^2 + L_f alpha_g,
// M = prod M_i, L = prod L_i.
class CompositeMap final : public SmoothMap {
 public:
  CompositeMap(std::vector<SmoothMapPtr> components, double R, Vec x0);
  CompositeMap(std::vector<SmoothMapPtr> components, double R);

  Vec eval(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  bool has_analytic_jacobian() const override;
  Vec invert(const Vec& y, double tol) const override;
  double lipschitz_bound() const override { return lip_; }
  std::string family() const override { return "composite"; }

  const std::vector<SmoothMapPtr>& components() const { return components_; }

 private:
  std::vector<SmoothMapPtr> components_;
  double lip_;
};

// --- Affine normalization (the reduction step). ---
// Wraps a base map as h~(x) = A^{-1}(h(x + x0) - h(x0)) with A = Dh(x0),
// so that h~(0) = 0 and Dh~(0) = I.  Constants transform as
// alpha~ = alpha*||A^{-1}||, M~ = M*||A||, R~ = R + ||x0||.
class NormalizedMap final : public SmoothMap {
 public:
  explicit NormalizedMap(SmoothMapPtr base);

  Vec eval(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  bool has_analytic_jacobian() const override { return base_->has_analytic_jacobian(); }
  Vec invert(const Vec& y, double tol) const override;
  double lipschitz_bound() const override;
  std::string family() const override { return "normalized"; }

  const SmoothMapPtr& base() const { return base_; }
  // A = Dh(x0) and h(x0): the data needed to reassemble the original map.
  const Mat& anchor_jacobian() const { return A_; }
  const Vec& anchor_value() const { return hx0_; }

 private:
  SmoothMapPtr base_;
  Mat A_;
  Eigen::PartialPivLU<Mat> A_lu_;
  Vec hx0_;
  double sigma_min_A_;
  double sigma_max_A_;
  double inv_norm_A_;  // ||A^{-1}||_2
};

// Conjugates the map by its anchor data so the result fixes the origin with
// identity Jacobian (verified to 1e-10 / 1e-8 by the caller's tests).
// Throws OrientationError when det(Dh(x0)) <= 0.
std::shared_ptr<const NormalizedMap> normalize(SmoothMapPtr map);

// Sampled estimates of the constants (lower bounds on the true values).
struct ConstantEstimates {
  double alpha_hat = 0.0;
  double M_hat = 0.0;
  double L_hat = 0.0;
  int n_samples = 0;
};

// Monte-Carlo difference/Jacobian quotients over B_R; degenerate pairs are
// skipped.  Estimates are reported as lower bounds, never as certificates.
ConstantEstimates estimate_constants(const SmoothMap& map, int n_samples,
                                     std::uint64_t seed);

// Round-trip and orientation spot check used when loading user-supplied map
// specs: samples points in B_R and requires invert(eval(x)) ~ x.
void validate_map(const SmoothMap& map, int n_samples, std::uint64_t seed);

}  // namespace nearid
