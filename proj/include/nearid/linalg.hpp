// Small linear-algebra helpers shared across the library.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nearid {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Largest singular value of A.  Eigen's JacobiSVD is slow for big matrices
// but bit-stable across runs, which matters more here than speed: every
// matrix we touch is tiny (d <= a few dozen).
double spectral_norm(const Mat& A);

// Smallest singular value of A.
double sigma_min(const Mat& A);

// Condition-checked determinant sign helper: true if det(A) > 0.
bool det_positive(const Mat& A);

// Sum of a list of doubles by pairwise (tree) reduction.  Summation order is
// fixed by the layout of `terms`, so results are reproducible regardless of
// how the terms were produced (including in parallel).
double pairwise_sum(const std::vector<double>& terms);

// Mean of `terms` via pairwise_sum; throws std::invalid_argument when empty.
double pairwise_mean(const std::vector<double>& terms);

// Frobenius-checked finiteness guard.
bool all_finite(const Mat& A);
bool all_finite(const Vec& v);

// Maximum Euclidean norm over a point cloud (0 for an empty cloud).
double max_norm(const std::vector<Vec>& points);

}  // namespace nearid
