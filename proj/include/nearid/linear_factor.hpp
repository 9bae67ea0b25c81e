// Factor a positive-determinant matrix D into near-identity linear factors
//   D = (I + A_1)(I + A_2) ... (I + A_m),   max_i ||A_i||_2 = O(gamma/m),
// where gamma = |log sigma_max(D)| + |log sigma_min(D)|.
//
// Route: D = U Sigma V^T by SVD with det(U) = det(V) = +1 after a paired
// sign fix; U and V^T are rotations with skew-symmetric real logarithms,
// Sigma is positive diagonal with elementwise log.  Each exponential block
// is split into equal fractional powers exp(X/k), which are exact for
// rotations (plane-angle scaling) and diagonals (elementwise powers) — no
// general matrix exponential is ever needed.  Special cases keep the
// factors canonical: orthogonal D becomes a single rotation block and
// symmetric positive-definite D a single eigendecomposition block.
#pragma once

#include "nearid/linalg.hpp"
#include "nearid/map.hpp"

#include <stdexcept>
#include <vector>

namespace nearid {

class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A rotation angle in the coordinate plane (i, j) of some orthonormal basis.
struct PlaneRotation {
  int i = 0;
  int j = 0;
  double angle = 0.0;
};

// Skew-symmetric logarithm of a rotation matrix Q, stored in factored form
// Q = Z exp(S_planes) Z^T so fractional powers are exact trigonometry.
struct SkewFactored {
  int d = 0;
  Mat Z;                              // orthogonal change of basis
  std::vector<PlaneRotation> planes;  // disjoint rotation planes

  // Assemble the skew-symmetric matrix S with exp(S) = Q.
  Mat matrix() const;
  // exp(t * S): each plane angle scales by t.
  Mat exp_scaled(double t) const;
  // ||S||_2 = max |angle|.
  double norm2() const;
};

// Real logarithm of a special orthogonal matrix via its real Schur form.
// The Schur "triangle" of an orthogonal matrix is block diagonal: 2x2
// rotation blocks give plane angles directly; -1 diagonal entries come in
// pairs (det = +1) and pair up into angle-pi planes.
// Throws FactorizationError when Q is not special orthogonal.
SkewFactored rotation_log(const Mat& Q);

// gamma(D) = |log sigma_max(D)| + |log sigma_min(D)|.
// Throws FactorizationError when D is numerically singular.
double gamma_of(const Mat& D);

struct LinearFactorization {
  std::vector<Mat> factors;           // the A_i, applied left to right in the
                                      // product (I+A_1)(I+A_2)...(I+A_m)
  double gamma = 0.0;                 // gamma_of(D)
  double max_factor_norm = 0.0;       // max_i ||A_i||_2
  double reconstruction_error = 0.0;  // ||prod - D||_F / ||D||_F
};

// The matrix product (I + A_1)(I + A_2) ... (I + A_m).
Mat compose_factors(const std::vector<Mat>& factors);

// Factor D (det > 0, sigma_min >= 1e-12) into exactly m near-identity
// factors.  Factors are allocated greedily across the exponential blocks,
// one at a time to the block whose current per-factor norm is largest; the
// allocation is nested in m, so max_i ||A_i||_2 is non-increasing in m.
// When m is smaller than the number of nonzero blocks, adjacent blocks are
// merged (reconstruction stays exact; the factors are no longer small).
LinearFactorization factor_near_identity(const Mat& D, int m);

}  // namespace nearid
