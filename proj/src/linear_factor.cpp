#include "nearid/linear_factor.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <limits>

namespace nearid {

Mat SkewFactored::matrix() const {
  Mat S = Mat::Zero(d, d);
  for (const PlaneRotation& p : planes) {
    S(p.i, p.j) = -p.angle;
    S(p.j, p.i) = p.angle;
  }
  return Z * S * Z.transpose();
}

Mat SkewFactored::exp_scaled(double t) const {
  Mat M = Mat::Identity(d, d);
  for (const PlaneRotation& p : planes) {
    const double c = std::cos(t * p.angle);
    const double s = std::sin(t * p.angle);
    M(p.i, p.i) = c;
    M(p.j, p.j) = c;
    M(p.i, p.j) = -s;
    M(p.j, p.i) = s;
  }
  return Z * M * Z.transpose();
}

double SkewFactored::norm2() const {
  double best = 0.0;
  for (const PlaneRotation& p : planes) best = std::max(best, std::abs(p.angle));
  return best;
}

SkewFactored rotation_log(const Mat& Q) {
  const int d = static_cast<int>(Q.rows());
  if (Q.cols() != d) throw FactorizationError("rotation_log: matrix not square");
  if (!all_finite(Q)) throw FactorizationError("rotation_log: non-finite input");
  const double ortho_err = (Q.transpose() * Q - Mat::Identity(d, d)).norm();
  if (ortho_err > 1e-8 * d)
    throw FactorizationError("rotation_log: input is not orthogonal");
  if (!det_positive(Q))
    throw FactorizationError("rotation_log: input has det <= 0");

  Eigen::RealSchur<Mat> schur(Q);
  if (schur.info() != Eigen::Success)
    throw FactorizationError("rotation_log: Schur decomposition failed");
  const Mat& T = schur.matrixT();

  SkewFactored log;
  log.d = d;
  log.Z = schur.matrixU();
  std::vector<int> negatives;
  for (int i = 0; i < d;) {
    if (i + 1 < d && std::abs(T(i + 1, i)) > 1e-14) {
      // 2x2 rotation block [[cos, -sin], [sin, cos]].
      log.planes.push_back({i, i + 1, std::atan2(T(i + 1, i), T(i, i))});
      i += 2;
    } else {
      if (T(i, i) < 0.0) negatives.push_back(i);
      i += 1;
    }
  }
  // det = +1 forces an even number of -1 eigenvalues; each pair is a
  // rotation by pi in the plane it spans.
  if (negatives.size() % 2 != 0)
    throw FactorizationError("rotation_log: odd count of negative eigenvalues");
  for (std::size_t k = 0; k + 1 < negatives.size(); k += 2)
    log.planes.push_back({negatives[k], negatives[k + 1], M_PI});

  const double recon = (log.exp_scaled(1.0) - Q).norm();
  if (recon > 1e-9 * d)
    throw FactorizationError("rotation_log: validation failed (exp(S) != Q)");
  return log;
}

double gamma_of(const Mat& D) {
  if (D.rows() != D.cols()) throw FactorizationError("gamma_of: matrix not square");
  Eigen::JacobiSVD<Mat> svd(D);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (smin < 1e-12) throw FactorizationError("gamma_of: matrix is (near-)singular");
  return std::abs(std::log(smax)) + std::abs(std::log(smin));
}

Mat compose_factors(const std::vector<Mat>& factors) {
  if (factors.empty())
    throw std::invalid_argument("compose_factors: empty factor list");
  const int d = static_cast<int>(factors.front().rows());
  Mat P = Mat::Identity(d, d);
  for (const Mat& A : factors) P = P * (Mat::Identity(d, d) + A);
  return P;
}

namespace {

// One exponential block of the factorization.  Fractional powers are exact:
// plane angles scale for rotations, logs scale elementwise for (eigen-)
// diagonals.
struct Block {
  enum class Kind { Rotation, Diagonal, Spd };
  Kind kind;
  SkewFactored skew;  // Rotation
  Vec log_diag;       // Diagonal
  Mat Q;              // Spd basis
  Vec log_lambda;     // Spd log-eigenvalues
  int d = 0;

  double weight() const {
    switch (kind) {
      case Kind::Rotation: return skew.norm2();
      case Kind::Diagonal: return log_diag.cwiseAbs().maxCoeff();
      case Kind::Spd: return log_lambda.cwiseAbs().maxCoeff();
    }
    return 0.0;
  }

  // exp(log / k).
  Mat fractional(int k) const {
    switch (kind) {
      case Kind::Rotation:
        return skew.exp_scaled(1.0 / k);
      case Kind::Diagonal:
        return (log_diag / k).array().exp().matrix().asDiagonal();
      case Kind::Spd:
        return Q * ((log_lambda / k).array().exp().matrix().asDiagonal()) *
               Q.transpose();
    }
    return Mat::Identity(d, d);
  }

  // ||fractional(k) - I||_2 in closed form (used by the greedy allocator).
  double factor_norm(int k) const {
    switch (kind) {
      case Kind::Rotation: {
        double best = 0.0;
        for (const PlaneRotation& p : skew.planes)
          best = std::max(best, 2.0 * std::abs(std::sin(p.angle / (2.0 * k))));
        return best;
      }
      case Kind::Diagonal: {
        double best = 0.0;
        for (int i = 0; i < log_diag.size(); ++i)
          best = std::max(best, std::abs(std::expm1(log_diag(i) / k)));
        return best;
      }
      case Kind::Spd: {
        double best = 0.0;
        for (int i = 0; i < log_lambda.size(); ++i)
          best = std::max(best, std::abs(std::expm1(log_lambda(i) / k)));
        return best;
      }
    }
    return 0.0;
  }
};

Block rotation_block(SkewFactored skew) {
  Block b;
  b.kind = Block::Kind::Rotation;
  b.d = skew.d;
  b.skew = std::move(skew);
  return b;
}

// Contiguous-partition merge for the m < #blocks corner: group adjacent
// whole-block matrices into m factors, minimizing the largest ||group - I||.
std::vector<Mat> merge_blocks(const std::vector<Block>& blocks, int m) {
  const int n = static_cast<int>(blocks.size());
  const int d = blocks.front().d;
  std::vector<Mat> wholes;
  wholes.reserve(n);
  for (const Block& b : blocks) wholes.push_back(b.fractional(1));

  // Enumerate contiguous partitions of n blocks into m groups (n <= 3 here,
  // so brute force over cut positions is fine).
  std::vector<int> cuts(m - 1);  // cut after block index cuts[g]
  std::vector<int> best_cuts;
  double best_cost = std::numeric_limits<double>::infinity();
  // Iterate over strictly increasing cut vectors in [0, n-2].
  std::function<void(int, int)> recur = [&](int g, int start) {
    if (g == m - 1) {
      // Evaluate this partition.
      double cost = 0.0;
      int lo = 0;
      for (int gi = 0; gi <= m - 1; ++gi) {
        const int hi = (gi < m - 1) ? cuts[gi] : n - 1;
        Mat P = Mat::Identity(d, d);
        for (int b = lo; b <= hi; ++b) P = P * wholes[b];
        cost = std::max(cost, spectral_norm(P - Mat::Identity(d, d)));
        lo = hi + 1;
      }
      if (cost < best_cost) {
        best_cost = cost;
        best_cuts = cuts;
      }
      return;
    }
    for (int c = start; c <= n - 2 - (m - 2 - g); ++c) {
      cuts[g] = c;
      recur(g + 1, c + 1);
    }
  };
  if (m == 1) {
    Mat P = Mat::Identity(d, d);
    for (const Mat& w : wholes) P = P * w;
    return {P - Mat::Identity(d, d)};
  }
  recur(0, 0);

  std::vector<Mat> factors;
  int lo = 0;
  for (int gi = 0; gi <= m - 1; ++gi) {
    const int hi = (gi < m - 1) ? best_cuts[gi] : n - 1;
    Mat P = Mat::Identity(d, d);
    for (int b = lo; b <= hi; ++b) P = P * wholes[b];
    factors.push_back(P - Mat::Identity(d, d));
    lo = hi + 1;
  }
  return factors;
}

}  // namespace

LinearFactorization factor_near_identity(const Mat& D, int m) {
  const int d = static_cast<int>(D.rows());
  if (D.cols() != d)
    throw FactorizationError("factor_near_identity: matrix not square");
  if (!all_finite(D))
    throw FactorizationError("factor_near_identity: non-finite input");
  if (m < 1) throw std::invalid_argument("factor_near_identity: m must be >= 1");

  Eigen::JacobiSVD<Mat> svd(D, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec sigma = svd.singularValues();
  const double smin = sigma(sigma.size() - 1);
  if (smin < 1e-12)
    throw FactorizationError("factor_near_identity: matrix is (near-)singular");
  if (!det_positive(D))
    throw OrientationError("factor_near_identity: matrix has det <= 0");

  LinearFactorization out;
  out.gamma = std::abs(std::log(sigma(0))) + std::abs(std::log(smin));

  // Build the exponential blocks, special-casing orthogonal and symmetric
  // positive-definite inputs so their factors stay canonical (a rotation
  // splits into equal smaller rotations, an SPD matrix into its m-th roots).
  std::vector<Block> blocks;
  const double dn = static_cast<double>(d);
  if ((D.transpose() * D - Mat::Identity(d, d)).norm() <= 1e-12 * dn) {
    Block b = rotation_block(rotation_log(D));
    if (b.weight() > 1e-14) blocks.push_back(std::move(b));
  } else if ((D - D.transpose()).norm() <= 1e-12 * D.norm()) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (D + D.transpose()));
    if (eig.eigenvalues().minCoeff() > 0.0) {
      Block b;
      b.kind = Block::Kind::Spd;
      b.d = d;
      b.Q = eig.eigenvectors();
      b.log_lambda = eig.eigenvalues().array().log().matrix();
      if (b.weight() > 1e-14) blocks.push_back(std::move(b));
    }
  }
  if (blocks.empty() &&
      (D - Mat::Identity(d, d)).norm() > 1e-12 * dn) {
    // General route: D = U Sigma V^T with det(U) = det(V) = +1.  Flipping the
    // last columns of both U and V together preserves the product.
    Mat U = svd.matrixU();
    Mat V = svd.matrixV();
    if (!det_positive(U)) {
      U.col(d - 1) *= -1.0;
      V.col(d - 1) *= -1.0;
    }
    Block bu = rotation_block(rotation_log(U));
    Block bs;
    bs.kind = Block::Kind::Diagonal;
    bs.d = d;
    bs.log_diag = sigma.array().log().matrix();
    Block bv = rotation_block(rotation_log(V.transpose()));
    if (bu.weight() > 1e-14) blocks.push_back(std::move(bu));
    if (bs.weight() > 1e-14) blocks.push_back(std::move(bs));
    if (bv.weight() > 1e-14) blocks.push_back(std::move(bv));
  }

  const int n_blocks = static_cast<int>(blocks.size());
  if (n_blocks == 0) {
    // D is (numerically) the identity.
    out.factors.assign(m, Mat::Zero(d, d));
  } else if (m < n_blocks) {
    out.factors = merge_blocks(blocks, m);
  } else {
    // Greedy allocation: hand each of the m - n_blocks spare factors to the
    // block whose current per-factor norm is largest.  Allocations are
    // nested in m, which makes max ||A_i|| non-increasing in m.
    std::vector<int> counts(n_blocks, 1);
    for (int extra = 0; extra < m - n_blocks; ++extra) {
      int best_b = 0;
      double best_norm = -1.0;
      for (int b = 0; b < n_blocks; ++b) {
        const double fn = blocks[b].factor_norm(counts[b]);
        if (fn > best_norm) {
          best_norm = fn;
          best_b = b;
        }
      }
      ++counts[best_b];
    }
    for (int b = 0; b < n_blocks; ++b) {
      const Mat F = blocks[b].fractional(counts[b]);
      const Mat A = F - Mat::Identity(d, d);
      for (int k = 0; k < counts[b]; ++k) out.factors.push_back(A);
    }
  }

  for (const Mat& A : out.factors)
    out.max_factor_norm = std::max(out.max_factor_norm, spectral_norm(A));
  out.reconstruction_error = (compose_factors(out.factors) - D).norm() / D.norm();
  if (out.reconstruction_error > 1e-9)
    throw FactorizationError(
        "factor_near_identity: reconstruction drifted past 1e-9 (internal)");
  return out;
}

}  // namespace nearid
