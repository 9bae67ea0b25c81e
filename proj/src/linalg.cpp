#include "nearid/linalg.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace nearid {

double spectral_norm(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues()(0);
}

double sigma_min(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

bool det_positive(const Mat& A) {
  Eigen::PartialPivLU<Mat> lu(A);
  return lu.determinant() > 0.0;
}

namespace {

// Recursive halving keeps the reduction tree independent of chunking.
double pairwise_sum_range(const double* data, std::size_t n) {
  if (n == 0) return 0.0;
  if (n == 1) return data[0];
  if (n == 2) return data[0] + data[1];
  const std::size_t half = n / 2;
  return pairwise_sum_range(data, half) + pairwise_sum_range(data + half, n - half);
}

}  // namespace

double pairwise_sum(const std::vector<double>& terms) {
  return pairwise_sum_range(terms.data(), terms.size());
}

double pairwise_mean(const std::vector<double>& terms) {
  if (terms.empty()) throw std::invalid_argument("pairwise_mean: empty input");
  return pairwise_sum(terms) / static_cast<double>(terms.size());
}

bool all_finite(const Mat& A) { return A.allFinite(); }
bool all_finite(const Vec& v) { return v.allFinite(); }

double max_norm(const std::vector<Vec>& points) {
  double best = 0.0;
  for (const Vec& p : points) best = std::max(best, p.norm());
  return best;
}

}  // namespace nearid
