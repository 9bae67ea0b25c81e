#include "nearid/smooth_map.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <sstream>

namespace nearid {

namespace {

Vec zero_vec(int d) { return Vec::Zero(d); }

const SmoothMap& deref(const SmoothMapPtr& p, const char* where) {
  if (!p) throw std::invalid_argument(std::string(where) + ": null map");
  return *p;
}

}  // namespace

SmoothMap::SmoothMap(int d, MapConstants constants, Vec x0)
    : constants_(constants), x0_(std::move(x0)), d_(d) {
  if (d <= 0) throw std::invalid_argument("SmoothMap: dimension must be positive");
  if (constants_.alpha < 0.0)
    throw std::invalid_argument("SmoothMap: alpha must be nonnegative");
  if (constants_.M <= 0.0) throw std::invalid_argument("SmoothMap: M must be positive");
  if (constants_.R <= 0.0) throw std::invalid_argument("SmoothMap: R must be positive");
  if (x0_.size() == 0) x0_ = zero_vec(d);
  if (x0_.size() != d)
    throw std::invalid_argument("SmoothMap: anchor dimension mismatch");
  if (!all_finite(x0_)) throw std::invalid_argument("SmoothMap: anchor not finite");
}

void SmoothMap::check_orientation() const {
  const Mat J = jacobian(x0_);
  if (!all_finite(J) || !det_positive(J)) {
    throw OrientationError("map is not positively oriented at its anchor point");
  }
}

// ---------------------------------------------------------------- AffineMap

AffineMap::AffineMap(Mat D, Vec b, double R, Vec x0)
    : SmoothMap(static_cast<int>(D.rows()),
                MapConstants{0.0, 1.0, R, false}, std::move(x0)),
      D_(std::move(D)),
      b_(std::move(b)) {
  if (D_.rows() != D_.cols())
    throw std::invalid_argument("AffineMap: D must be square");
  if (b_.size() != D_.rows())
    throw std::invalid_argument("AffineMap: b dimension mismatch");
  if (!all_finite(D_) || !all_finite(b_))
    throw std::invalid_argument("AffineMap: non-finite parameters");
  Eigen::JacobiSVD<Mat> svd(D_);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  sigma_max_ = svd.singularValues()(0);
  if (smin < 1e-12) throw OrientationError("AffineMap: D is (near-)singular");
  lu_ = Eigen::PartialPivLU<Mat>(D_);
  // Exact constants for a linear map: alpha = 0, M = 1/sigma_min.
  constants_.alpha = 0.0;
  constants_.M = 1.0 / smin;
  check_orientation();
}

AffineMap::AffineMap(Mat D, Vec b, double R)
    : AffineMap(std::move(D), std::move(b), R, Vec()) {}

Vec AffineMap::eval(const Vec& x) const {
  check_dim(x, "AffineMap::eval");
  return D_ * x + b_;
}

Mat AffineMap::jacobian(const Vec& x) const {
  check_dim(x, "AffineMap::jacobian");
  return D_;
}

Vec AffineMap::invert(const Vec& y, double /*tol*/) const {
  check_dim(y, "AffineMap::invert");
  return lu_.solve(y - b_);
}

double AffineMap::lipschitz_bound() const { return sigma_max_; }

// ---------------------------------------------------------- TanhDiagonalMap

TanhDiagonalMap::TanhDiagonalMap(int d, double beta, double R, Vec x0)
    : SmoothMap(d, MapConstants{kSechSqSlopeMax * beta, 1.0, R, false},
                std::move(x0)),
      beta_(beta) {
  if (!(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("TanhDiagonalMap: beta must lie in (0,1)");
  check_orientation();
}

TanhDiagonalMap::TanhDiagonalMap(int d, double beta, double R)
    : TanhDiagonalMap(d, beta, R, Vec()) {}

Vec TanhDiagonalMap::eval(const Vec& x) const {
  check_dim(x, "TanhDiagonalMap::eval");
  return x + beta_ * x.array().tanh().matrix();
}

Mat TanhDiagonalMap::jacobian(const Vec& x) const {
  check_dim(x, "TanhDiagonalMap::jacobian");
  // Diagonal entries 1 + beta * sech^2(x_i) with sech^2 = 1 - tanh^2.
  const Eigen::ArrayXd t = x.array().tanh();
  return ((1.0 + beta_ * (1.0 - t * t)).matrix()).asDiagonal();
}

namespace {

// Solve u + beta*tanh(u) = y for the unique root; safeguarded Newton with a
// bisection bracket [y - beta, y + beta] (|beta*tanh| <= beta).
double invert_tanh_scalar(double y, double beta, double tol) {
  // Residuals below a few ulps of y are not reachable in double precision;
  // clamp so over-tight caller budgets cannot stall the iteration.
  tol = std::max(tol, 4.0 * std::numeric_limits<double>::epsilon() *
                          std::max(1.0, std::abs(y)));
  double lo = y - beta, hi = y + beta;
  double u = y;
  for (int iter = 0; iter < kNewtonMaxIter; ++iter) {
    const double t = std::tanh(u);
    const double f = u + beta * t - y;
    if (std::abs(f) <= tol) return u;
    if (f > 0.0) hi = u; else lo = u;
    const double fp = 1.0 + beta * (1.0 - t * t);  // >= 1: Newton is safe
    double u_next = u - f / fp;
    if (u_next <= lo || u_next >= hi) u_next = 0.5 * (lo + hi);
    u = u_next;
  }
  const double resid = std::abs(u + beta * std::tanh(u) - y);
  if (resid <= tol) return u;
  throw InversionError("TanhDiagonalMap: scalar Newton failed", resid);
}

}  // namespace

Vec TanhDiagonalMap::invert(const Vec& y, double tol) const {
  check_dim(y, "TanhDiagonalMap::invert");
  // Per-coordinate tolerance so the vector residual stays within tol.
  const double tol_c = tol / std::sqrt(static_cast<double>(dim()));
  Vec x(dim());
  for (int i = 0; i < dim(); ++i) x(i) = invert_tanh_scalar(y(i), beta_, tol_c);
  return x;
}

// -------------------------------------------------------- TriangularFlowMap

namespace {

MapConstants triangular_constants(const Mat& W, double beta, double R) {
  // alpha: rows perturb independently; summing the per-row bounds gives
  // alpha = beta * G2 * sqrt(sum_j ||w_j||^4) with G2 the sech^2 slope max.
  double sum4 = 0.0;
  for (int j = 0; j < W.rows(); ++j) {
    const double nj = W.row(j).norm();
    sum4 += nj * nj * nj * nj;
  }
  const double alpha = beta * kSechSqSlopeMax * std::sqrt(sum4);
  // M: J = I + N with N strictly lower triangular, ||N|| <= nu, N^d = 0, so
  // ||J^{-1}|| <= sum_{k<d} nu^k regardless of whether nu < 1.
  const double nu = beta * spectral_norm(W);
  double M = 0.0, p = 1.0;
  for (int k = 0; k < W.rows(); ++k) {
    M += p;
    p *= nu;
  }
  return MapConstants{alpha, M, R, false};
}

}  // namespace

TriangularFlowMap::TriangularFlowMap(Mat W, double beta, double R, Vec x0)
    : SmoothMap(static_cast<int>(W.rows()), triangular_constants(W, beta, R),
                std::move(x0)),
      W_(std::move(W)),
      beta_(beta) {
  if (W_.rows() != W_.cols())
    throw std::invalid_argument("TriangularFlowMap: W must be square");
  if (!(beta > 0.0))
    throw std::invalid_argument("TriangularFlowMap: beta must be positive");
  if (!all_finite(W_))
    throw std::invalid_argument("TriangularFlowMap: non-finite W");
  for (int i = 0; i < W_.rows(); ++i)
    for (int j = i; j < W_.cols(); ++j)
      if (W_(i, j) != 0.0)
        throw std::invalid_argument(
            "TriangularFlowMap: W must be strictly lower triangular");
  w_norm_ = spectral_norm(W_);
  check_orientation();
}

TriangularFlowMap::TriangularFlowMap(Mat W, double beta, double R)
    : TriangularFlowMap(std::move(W), beta, R, Vec()) {}

Vec TriangularFlowMap::eval(const Vec& x) const {
  check_dim(x, "TriangularFlowMap::eval");
  // Strict lower-triangularity makes W*x depend only on earlier coordinates.
  return x + beta_ * (W_ * x).array().tanh().matrix();
}

Mat TriangularFlowMap::jacobian(const Vec& x) const {
  check_dim(x, "TriangularFlowMap::jacobian");
  const Eigen::ArrayXd t = (W_ * x).array().tanh();
  const Eigen::ArrayXd s = 1.0 - t * t;  // sech^2 of the pre-activations
  return Mat::Identity(dim(), dim()) + beta_ * (s.matrix().asDiagonal() * W_);
}

Vec TriangularFlowMap::invert(const Vec& y, double /*tol*/) const {
  check_dim(y, "TriangularFlowMap::invert");
  // Forward substitution: coordinate j only needs x_1..x_{j-1}.
  Vec x(dim());
  for (int j = 0; j < dim(); ++j) {
    double s = 0.0;
    for (int k = 0; k < j; ++k) s += W_(j, k) * x(k);
    x(j) = y(j) - beta_ * std::tanh(s);
  }
  return x;
}

// ------------------------------------------------------------- CompositeMap

namespace {

MapConstants composite_constants(const std::vector<SmoothMapPtr>& comps, double R) {
  // Fold in application order: for h = f o g,
  //   alpha <= alpha_f * L_g^2 + L_f * alpha_g,  M = M_f * M_g,  L = L_f * L_g.
  double alpha = 0.0, L = 1.0, M = 1.0;
  bool estimated = false;
  for (const auto& c : comps) {
    const SmoothMap& f = deref(c, "CompositeMap");
    alpha = f.alpha() * L * L + f.lipschitz_bound() * alpha;
    L *= f.lipschitz_bound();
    M *= f.M();
    estimated = estimated || f.constants_estimated();
  }
  return MapConstants{alpha, M, R, estimated};
}

int composite_dim(const std::vector<SmoothMapPtr>& comps) {
  if (comps.empty())
    throw std::invalid_argument("CompositeMap: needs at least one component");
  return deref(comps.front(), "CompositeMap").dim();
}

}  // namespace

CompositeMap::CompositeMap(std::vector<SmoothMapPtr> components, double R, Vec x0)
    : SmoothMap(composite_dim(components), composite_constants(components, R),
                std::move(x0)),
      components_(std::move(components)) {
  lip_ = 1.0;
  for (const auto& c : components_) {
    if (deref(c, "CompositeMap").dim() != dim())
      throw std::invalid_argument("CompositeMap: component dimension mismatch");
    lip_ *= c->lipschitz_bound();
  }
  check_orientation();
}

CompositeMap::CompositeMap(std::vector<SmoothMapPtr> components, double R)
    : CompositeMap(std::move(components), R, Vec()) {}

Vec CompositeMap::eval(const Vec& x) const {
  check_dim(x, "CompositeMap::eval");
  Vec z = x;
  for (const auto& c : components_) z = c->eval(z);
  return z;
}

Mat CompositeMap::jacobian(const Vec& x) const {
  check_dim(x, "CompositeMap::jacobian");
  Vec z = x;
  Mat J = Mat::Identity(dim(), dim());
  for (const auto& c : components_) {
    J = c->jacobian(z) * J;
    z = c->eval(z);
  }
  return J;
}

bool CompositeMap::has_analytic_jacobian() const {
  for (const auto& c : components_)
    if (!c->has_analytic_jacobian()) return false;
  return true;
}

Vec CompositeMap::invert(const Vec& y, double tol) const {
  check_dim(y, "CompositeMap::invert");
  // Budget the tolerance: an inner residual is magnified by the Lipschitz
  // bounds of everything applied after that component.
  const std::size_t n = components_.size();
  std::vector<double> downstream(n, 1.0);
  for (std::size_t i = n; i-- > 1;) {
    downstream[i - 1] =
        downstream[i] * std::max(1.0, components_[i]->lipschitz_bound());
  }
  Vec z = y;
  for (std::size_t i = n; i-- > 0;) {
    const double budget = tol / (static_cast<double>(n) * downstream[i]);
    z = components_[i]->invert(z, budget);
  }
  return z;
}

// ------------------------------------------------------------ NormalizedMap

namespace {

Mat anchor_jacobian_of(const SmoothMapPtr& p) {
  const SmoothMap& m = deref(p, "NormalizedMap");
  return m.jacobian(m.x0());
}

Vec anchor_value_of(const SmoothMapPtr& p) {
  const SmoothMap& m = deref(p, "NormalizedMap");
  return m.eval(m.x0());
}

}  // namespace

NormalizedMap::NormalizedMap(SmoothMapPtr base)
    : SmoothMap(deref(base, "NormalizedMap").dim(), base->constants(),
                zero_vec(base->dim())),
      base_(base),
      A_(anchor_jacobian_of(base)),
      hx0_(anchor_value_of(base)) {
  if (!all_finite(A_))
    throw OrientationError("NormalizedMap: non-finite Jacobian at anchor");
  Eigen::JacobiSVD<Mat> svd(A_);
  sigma_max_A_ = svd.singularValues()(0);
  sigma_min_A_ = svd.singularValues()(svd.singularValues().size() - 1);
  if (sigma_min_A_ < 1e-12)
    throw OrientationError("NormalizedMap: anchor Jacobian is (near-)singular");
  if (!det_positive(A_))
    throw OrientationError("NormalizedMap: anchor Jacobian has det <= 0");
  A_lu_ = Eigen::PartialPivLU<Mat>(A_);
  inv_norm_A_ = 1.0 / sigma_min_A_;
  // Conjugation h~(x) = A^{-1}(h(x + x0) - h(x0)) rescales the constants:
  // the Jacobian-difference bound picks up ||A^{-1}||, the inverse Lipschitz
  // bound picks up ||A||, and the domain must cover B_R shifted by x0.
  constants_.alpha = base_->alpha() * inv_norm_A_;
  constants_.M = base_->M() * sigma_max_A_;
  constants_.R = base_->R() + base_->x0().norm();
}

Vec NormalizedMap::eval(const Vec& x) const {
  check_dim(x, "NormalizedMap::eval");
  return A_lu_.solve(base_->eval(x + base_->x0()) - hx0_);
}

Mat NormalizedMap::jacobian(const Vec& x) const {
  check_dim(x, "NormalizedMap::jacobian");
  return A_lu_.solve(base_->jacobian(x + base_->x0()));
}

Vec NormalizedMap::invert(const Vec& y, double tol) const {
  check_dim(y, "NormalizedMap::invert");
  // A residual r in base coordinates maps to A^{-1} r here, so shrink the
  // base tolerance by sigma_min(A).
  const double base_tol = tol * std::min(1.0, sigma_min_A_);
  return base_->invert(A_ * y + hx0_, base_tol) - base_->x0();
}

double NormalizedMap::lipschitz_bound() const {
  return base_->lipschitz_bound() * inv_norm_A_;
}

std::shared_ptr<const NormalizedMap> normalize(SmoothMapPtr map) {
  deref(map, "normalize");
  return std::make_shared<const NormalizedMap>(std::move(map));
}

// -------------------------------------------------------------- estimation

ConstantEstimates estimate_constants(const SmoothMap& map, int n_samples,
                                     std::uint64_t seed) {
  if (n_samples < 2)
    throw std::invalid_argument("estimate_constants: need n_samples >= 2");
  Rng rng(derive_seed(seed, "estimate_constants"));
  const int d = map.dim();
  const double R = map.R();
  ConstantEstimates est;
  for (int k = 0; k < n_samples; ++k) {
    Vec x = rng.in_ball(d, R);
    // Alternate global pairs with short-range pairs; the latter probe the
    // derivative limit of the difference quotients.
    Vec y = (k % 2 == 0) ? Vec(rng.in_ball(d, R))
                         : Vec(x + 1e-4 * R * rng.on_sphere(d));
    const double dxy = (y - x).norm();
    if (dxy < 1e-12) continue;  // coincident pair: skip, never crash
    const Vec u = rng.on_sphere(d);
    const double dj = ((map.jacobian(y) - map.jacobian(x)) * u).norm();
    est.alpha_hat = std::max(est.alpha_hat, dj / dxy);
    const double dh = (map.eval(x) - map.eval(y)).norm();
    if (dh > 1e-15) est.M_hat = std::max(est.M_hat, dxy / dh);
    est.L_hat = std::max(est.L_hat, dh / dxy);
    ++est.n_samples;
  }
  return est;
}

void validate_map(const SmoothMap& map, int n_samples, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "validate_map"));
  const double tol = kDefaultInvertTol;
  const double thresh = 10.0 * tol * std::max(1.0, map.M());
  for (int k = 0; k < n_samples; ++k) {
    const Vec x = rng.in_ball(map.dim(), map.R());
    const Vec back = map.invert(map.eval(x), tol);
    if (!all_finite(back) || (back - x).norm() > thresh) {
      std::ostringstream msg;
      msg << "validate_map: round trip failed at sample " << k << " (error "
          << (back - x).norm() << ", threshold " << thresh << ")";
      throw std::runtime_error(msg.str());
    }
  }
}

}  // namespace nearid
