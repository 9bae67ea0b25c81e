#include "nearid/resnet.hpp"

#include "nearid/csv.hpp"
#include "nearid/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace nearid {

ResNetParams ResNetParams::zeros(int m, int d, int k) {
  if (m < 1 || d < 1 || k < 1)
    throw std::invalid_argument("ResNetParams::zeros: m, d, k must be positive");
  ResNetParams p;
  p.d = d;
  p.k = k;
  p.A.assign(m, Mat::Zero(d, k));
  p.B.assign(m, Mat::Zero(k, d));
  return p;
}

void ResNetParams::axpy(double s, const ResNetParams& other) {
  if (other.depth() != depth() || other.d != d || other.k != k)
    throw std::invalid_argument("ResNetParams::axpy: shape mismatch");
  for (int i = 0; i < depth(); ++i) {
    A[i] += s * other.A[i];
    B[i] += s * other.B[i];
  }
}

double ResNetParams::norm() const {
  double sq = 0.0;
  for (int i = 0; i < depth(); ++i) sq += A[i].squaredNorm() + B[i].squaredNorm();
  return std::sqrt(sq);
}

double ResNetParams::max_abs() const {
  double best = 0.0;
  for (int i = 0; i < depth(); ++i) {
    if (A[i].size()) best = std::max(best, A[i].cwiseAbs().maxCoeff());
    if (B[i].size()) best = std::max(best, B[i].cwiseAbs().maxCoeff());
  }
  return best;
}

Vec forward(const ResNetParams& theta, const Vec& x, ForwardTrace* trace) {
  if (x.size() != theta.d)
    throw std::invalid_argument("forward: input dimension mismatch");
  const int m = theta.depth();
  if (trace) {
    trace->z.assign(1, x);
    trace->pre.clear();
    trace->act.clear();
    trace->z.reserve(m + 1);
    trace->pre.reserve(m);
    trace->act.reserve(m);
  }
  Vec z = x;
  for (int i = 0; i < m; ++i) {
    const Vec u = theta.B[i] * z;
    const Vec t = u.array().tanh().matrix();
    z = theta.A[i] * t + z;
    if (trace) {
      trace->pre.push_back(u);
      trace->act.push_back(t);
      trace->z.push_back(z);
    }
  }
  return z;
}

namespace {

void check_dataset(const ResNetParams& theta, const Dataset& data, const char* who) {
  if (data.x.empty())
    throw std::invalid_argument(std::string(who) + ": empty dataset");
  if (data.x.size() != data.y.size())
    throw std::invalid_argument(std::string(who) + ": x/y size mismatch");
  for (const Vec& v : data.x)
    if (v.size() != theta.d)
      throw std::invalid_argument(std::string(who) + ": sample dimension mismatch");
}

// Fixed-tree reduction over per-sample parameter gradients.
ResNetParams reduce_params(std::vector<ResNetParams>& terms, std::size_t lo,
                           std::size_t hi) {
  if (hi - lo == 1) return std::move(terms[lo]);
  const std::size_t mid = lo + (hi - lo) / 2;
  ResNetParams left = reduce_params(terms, lo, mid);
  ResNetParams right = reduce_params(terms, mid, hi);
  left.axpy(1.0, right);
  return left;
}

}  // namespace

double loss(const ResNetParams& theta, const Dataset& data) {
  check_dataset(theta, data, "loss");
  const std::size_t n = data.x.size();
  std::vector<double> terms(n);
  parallel_for(n, [&](std::size_t j) {
    terms[j] = 0.5 * (forward(theta, data.x[j]) - data.y[j]).squaredNorm();
  });
  return pairwise_mean(terms);
}

ResNetParams grad(const ResNetParams& theta, const Dataset& data) {
  check_dataset(theta, data, "grad");
  const int m = theta.depth();
  const std::size_t n = data.x.size();
  std::vector<ResNetParams> per_sample(n);
  parallel_for(n, [&](std::size_t j) {
    ForwardTrace trace;
    const Vec out = forward(theta, data.x[j], &trace);
    ResNetParams g = ResNetParams::zeros(m, theta.d, theta.k);
    // Reverse accumulation through z_i = A_i tanh(B_i z_{i-1}) + z_{i-1}.
    Vec zbar = out - data.y[j];
    for (int i = m - 1; i >= 0; --i) {
      const Vec& t = trace.act[i];
      g.A[i] = zbar * t.transpose();
      const Vec ubar =
          (theta.A[i].transpose() * zbar).cwiseProduct(
              (1.0 - t.array() * t.array()).matrix());
      g.B[i] = ubar * trace.z[i].transpose();
      zbar = zbar + theta.B[i].transpose() * ubar;
    }
    per_sample[j] = std::move(g);
  });
  ResNetParams total = reduce_params(per_sample, 0, n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int i = 0; i < m; ++i) {
    total.A[i] *= inv_n;
    total.B[i] *= inv_n;
  }
  return total;
}

double layer_deviation_bound(const Mat& A, const Mat& B) {
  return spectral_norm(A) * spectral_norm(B);
}

ResNetParams fd_grad(const ResNetParams& theta, const Dataset& data,
                     double step) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_grad: step must be positive");
  ResNetParams work = theta;
  ResNetParams out = ResNetParams::zeros(theta.depth(), theta.d, theta.k);
  auto probe = [&](Mat& entry_mat, Mat& out_mat) {
    for (int r = 0; r < entry_mat.rows(); ++r) {
      for (int c = 0; c < entry_mat.cols(); ++c) {
        const double saved = entry_mat(r, c);
        entry_mat(r, c) = saved + step;
        const double up = loss(work, data);
        entry_mat(r, c) = saved - step;
        const double down = loss(work, data);
        entry_mat(r, c) = saved;
        out_mat(r, c) = (up - down) / (2.0 * step);
      }
    }
  };
  for (int i = 0; i < theta.depth(); ++i) {
    probe(work.A[i], out.A[i]);
    probe(work.B[i], out.B[i]);
  }
  return out;
}

GdTrajectory train_gd(const ResNetParams& theta0, const Dataset& data,
                      double lr, int steps) {
  if (lr <= 0.0) throw std::invalid_argument("train_gd: lr must be positive");
  if (steps < 0) throw std::invalid_argument("train_gd: steps must be >= 0");
  GdTrajectory traj;
  traj.theta = theta0;
  traj.loss.reserve(steps + 1);
  traj.grad_norm.reserve(steps);
  traj.loss.push_back(loss(traj.theta, data));
  for (int s = 0; s < steps; ++s) {
    if (traj.loss.back() > 1e12) {
      traj.diverged = true;
      break;
    }
    const ResNetParams g = grad(traj.theta, data);
    traj.grad_norm.push_back(g.norm());
    traj.theta.axpy(-lr, g);
    traj.loss.push_back(loss(traj.theta, data));
  }
  return traj;
}

Dataset make_saddle_instance(const ResNetParams& theta_star, int n, double R,
                             std::uint64_t seed) {
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument("make_saddle_instance: n must be even and >= 2");
  if (R <= 0.0)
    throw std::invalid_argument("make_saddle_instance: R must be positive");
  Rng rng(derive_seed(seed, "saddle_instance"));
  Dataset data;
  data.R = R;
  data.x.reserve(n);
  for (int j = 0; j < n / 2; ++j) {
    const Vec p = rng.in_ball(theta_star.d, R);
    data.x.push_back(p);
    data.x.push_back(-p);  // antithetic pair: empirical mean is exactly zero
  }
  data.y.reserve(n);
  double displacement = 0.0;
  for (const Vec& xj : data.x) {
    data.y.push_back(forward(theta_star, xj));
    displacement = std::max(displacement, (data.y.back() - xj).norm());
  }
  if (displacement == 0.0)
    throw IdentityRejectionError(
        "make_saddle_instance: theta_star computes the identity on every "
        "probe point");
  return data;
}

ResidualLayerMap::ResidualLayerMap(Mat A, Mat B)
    : A_(std::move(A)), B_(std::move(B)) {
  if (A_.cols() != B_.rows() || A_.rows() != B_.cols())
    throw std::invalid_argument("ResidualLayerMap: incompatible shapes");
}

Vec ResidualLayerMap::eval(const Vec& x) const {
  check_dim(x, "ResidualLayerMap::eval");
  return A_ * (B_ * x).array().tanh().matrix() + x;
}

Mat ResidualLayerMap::jacobian(const Vec& x) const {
  check_dim(x, "ResidualLayerMap::jacobian");
  const Eigen::ArrayXd t = (B_ * x).array().tanh();
  return Mat::Identity(dim(), dim()) +
         A_ * ((1.0 - t * t).matrix().asDiagonal()) * B_;
}

ResNetParams random_near_identity_params(int m, int d, int k,
                                         double max_deviation,
                                         std::uint64_t seed) {
  if (max_deviation <= 0.0)
    throw std::invalid_argument(
        "random_near_identity_params: max_deviation must be positive");
  Rng rng(derive_seed(seed, "resnet_params"));
  ResNetParams theta = ResNetParams::zeros(m, d, k);
  for (int i = 0; i < m; ++i) {
    Mat A(d, k), B(k, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < k; ++c) A(r, c) = rng.normal();
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < d; ++c) B(r, c) = rng.normal();
    const double bound = layer_deviation_bound(A, B);
    // Land the product norm in (0.5, 1] * max_deviation, split evenly.
    const double target = max_deviation * (0.5 + 0.5 * rng.uniform01());
    const double s = std::sqrt(target / bound);
    theta.A[i] = s * A;
    theta.B[i] = s * B;
  }
  return theta;
}

std::string dataset_to_csv(const Dataset& data) {
  if (data.x.empty()) throw std::invalid_argument("dataset_to_csv: empty dataset");
  const int d = static_cast<int>(data.x.front().size());
  std::vector<std::string> header;
  for (int i = 0; i < d; ++i) header.push_back("x" + std::to_string(i));
  for (int i = 0; i < d; ++i) header.push_back("y" + std::to_string(i));
  std::string out = csv_row(header);
  for (int j = 0; j < data.size(); ++j) {
    std::vector<std::string> cells;
    cells.reserve(2 * d);
    for (int i = 0; i < d; ++i) cells.push_back(format_double(data.x[j](i)));
    for (int i = 0; i < d; ++i) cells.push_back(format_double(data.y[j](i)));
    out += csv_row(cells);
  }
  return out;
}

}  // namespace nearid
