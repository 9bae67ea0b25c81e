// (m, d, k) tanh residual networks with exact analytic gradients:
//   z_0 = x,   z_i = A_i tanh(B_i z_{i-1}) + z_{i-1},   h_theta(x) = z_m,
// quadratic criterion on a finite sample, plain gradient descent, and the
// construction of datasets for which the all-zero parameter vector is a
// suboptimal critical point.
//
// No bias terms anywhere: the parameter deviation from the identity map is
// exactly the pair (A_i, B_i), with ||h_i - Id||_L <= ||A_i||_2 ||B_i||_2.
#pragma once

#include "nearid/map.hpp"
#include "nearid/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nearid {

struct ResNetParams {
  int d = 0;            // width (input/output dimension)
  int k = 0;            // hidden size
  std::vector<Mat> A;   // m matrices, d x k
  std::vector<Mat> B;   // m matrices, k x d

  int depth() const { return static_cast<int>(A.size()); }
  static ResNetParams zeros(int m, int d, int k);

  // Elementwise theta += s * other (same shapes); used by gradient descent.
  void axpy(double s, const ResNetParams& other);
  // Euclidean norm over all parameter entries.
  double norm() const;
  // Largest absolute entry (handy for exact-zero assertions).
  double max_abs() const;
};

struct Dataset {
  std::vector<Vec> x;
  std::vector<Vec> y;
  double R = 0.0;  // bounding radius of the inputs

  int size() const { return static_cast<int>(x.size()); }
};

// Backprop cache for one input.
struct ForwardTrace {
  std::vector<Vec> z;    // z_0..z_m
  std::vector<Vec> pre;  // u_i = B_i z_{i-1}
  std::vector<Vec> act;  // tanh(u_i)
};

// h_theta(x); fills the trace when given one.
Vec forward(const ResNetParams& theta, const Vec& x, ForwardTrace* trace = nullptr);

// (1/n) sum_j 1/2 ||h_theta(x_j) - y_j||^2.  Deterministic pairwise-summed.
double loss(const ResNetParams& theta, const Dataset& data);

// Exact analytic gradient (reverse accumulation), same shapes as theta.
// Per-sample contributions are combined by a fixed reduction tree, so the
// result is bit-identical regardless of the worker count.
ResNetParams grad(const ResNetParams& theta, const Dataset& data);

// ||A||_2 ||B||_2: an upper bound on ||h_i - Id||_L since tanh is
// 1-Lipschitz.
double layer_deviation_bound(const Mat& A, const Mat& B);

// Central finite-difference gradient, one loss pair per parameter entry.
// Slow by design; the cross-check reported next to the analytic gradient.
ResNetParams fd_grad(const ResNetParams& theta, const Dataset& data,
                     double step = 1e-5);

struct GdTrajectory {
  std::vector<double> loss;       // entry 0 is the initial loss
  std::vector<double> grad_norm;  // gradient norm before each step
  ResNetParams theta;             // final parameters
  bool diverged = false;
};

// Plain full-batch gradient descent; halts early (diverged = true) when the
// loss exceeds 1e12.
GdTrajectory train_gd(const ResNetParams& theta0, const Dataset& data,
                      double lr, int steps);

// Thrown by make_saddle_instance when theta_star computes the identity on
// every probe point (such parameters admit no suboptimal critical point).
class IdentityRejectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset on which the all-zero parameter vector is a suboptimal critical
// point: n/2 points uniform in B_R plus their negations (the empirical input
// mean is exactly zero by pairing), labels y_j = h_{theta_star}(x_j).
// Requires n even.  Throws IdentityRejectionError when theta_star acts as
// the identity on all probe points.
Dataset make_saddle_instance(const ResNetParams& theta_star, int n, double R,
                             std::uint64_t seed);

// One residual layer x -> A tanh(Bx) + x as a differentiable map (used for
// certification cross-checks and composition states).
class ResidualLayerMap final : public DifferentiableMap {
 public:
  ResidualLayerMap(Mat A, Mat B);
  int dim() const override { return static_cast<int>(A_.rows()); }
  Vec eval(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  bool has_analytic_jacobian() const override { return true; }
  const Mat& A() const { return A_; }
  const Mat& B() const { return B_; }

 private:
  Mat A_;
  Mat B_;
};

// Random parameters rescaled so every layer_deviation_bound(A_i, B_i) lands
// in (0.5, 1] * max_deviation; used by the test batteries.
ResNetParams random_near_identity_params(int m, int d, int k,
                                         double max_deviation,
                                         std::uint64_t seed);

// CSV with 2d columns per row: x then y (deterministic formatting).
std::string dataset_to_csv(const Dataset& data);

}  // namespace nearid
