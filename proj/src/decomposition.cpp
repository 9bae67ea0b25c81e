#include "nearid/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nearid {

double compute_B(double alpha, double R, double M) {
  if (alpha < 0.0)
    throw std::invalid_argument("compute_B: alpha must be nonnegative");
  if (R <= 0.0 || M <= 0.0)
    throw std::invalid_argument("compute_B: R and M must be positive");
  const double L = 1.0 + alpha * R;
  return std::max(alpha * M * (R + M), M * (L + 1.0 + 2.0 * R * alpha) + alpha * R * R);
}

double feasible_epsilon(double B, int m) {
  if (m < 2) throw std::invalid_argument("feasible_epsilon: m must be >= 2");
  return B * std::log(2.0 * m) / (m - 1);
}

int min_feasible_m(double B, double eps) {
  if (eps <= 0.0) return 0;
  // feasible_epsilon decreases in m; double until feasible, then bisect.
  int hi = 2;
  const int cap = 100000000;
  while (hi < cap && feasible_epsilon(B, hi) > eps) hi *= 2;
  if (feasible_epsilon(B, hi) > eps) return 0;
  int lo = std::max(2, hi / 2);
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    if (feasible_epsilon(B, mid) <= eps) hi = mid; else lo = mid + 1;
  }
  return hi;
}

Schedule build_schedule(int m, double epsilon, double alpha, double R, double M,
                        std::optional<double> forced_c) {
  if (m < 2) throw std::invalid_argument("build_schedule: m must be >= 2");
  if (epsilon <= 0.0)
    throw std::invalid_argument("build_schedule: epsilon must be positive");
  Schedule s;
  s.m = m;
  s.epsilon = epsilon;
  s.B = compute_B(alpha, R, M);
  s.near_identity_regime = epsilon < 1.0;

  double c;
  if (forced_c) {
    c = *forced_c;
  } else if (epsilon < s.B) {
    // Largest c the layer-ratio constraint allows; pushes a_1 down fastest.
    c = epsilon / s.B;
  } else {
    // The ratio constraint is slack for any c < 1; pin a_1 to the canonical
    // 1/(2m) unless the base-case constraint needs a_1 even smaller.
    const double c_cap = 1.0 - std::pow(2.0 * m, -1.0 / (m - 1));
    double c_floor = 0.0;
    if (alpha > 0.0 && epsilon < 2.0 * alpha * R)
      c_floor = 1.0 - std::pow(epsilon / (2.0 * alpha * R), 1.0 / (m - 1));
    c = std::max(c_cap, c_floor);
  }
  s.c = c;

  s.a.resize(m);
  for (int i = 1; i <= m; ++i) s.a[i - 1] = std::pow(1.0 - c, m - i);
  s.a[m - 1] = 1.0;  // exact, not pow(x, 0)

  // Feasibility: both proof constraints at the chosen c.
  const double a1 = s.a[0];
  const bool ratio_ok = c > 0.0 && c < 1.0 && c <= epsilon / s.B * (1.0 + 1e-12);
  const bool base_ok =
      alpha == 0.0 || epsilon >= 2.0 * alpha * R ||
      a1 <= epsilon / (2.0 * alpha * R) * (1.0 + 1e-12);
  s.feasible = ratio_ok && base_ok;
  if (!s.feasible) s.suggested_m = min_feasible_m(s.B, epsilon);
  return s;
}

// ------------------------------------------------------------ NonlinearLayer

NonlinearLayer::NonlinearLayer(SmoothMapPtr normalized_map, int index,
                               double a_prev, double a_cur, double tol)
    : map_(std::move(normalized_map)),
      index_(index),
      a_prev_(a_prev),
      a_cur_(a_cur),
      tol_(tol) {
  if (!map_) throw std::invalid_argument("NonlinearLayer: null map");
  if (index < 1) throw std::invalid_argument("NonlinearLayer: index must be >= 1");
  if (a_cur <= 0.0 || (index > 1 && a_prev <= 0.0))
    throw std::invalid_argument("NonlinearLayer: schedule values must be positive");
}

Vec NonlinearLayer::g_eval(double a, const Vec& x) const {
  return map_->eval(a * x) / a;
}

Vec NonlinearLayer::g_invert(double a, const Vec& y) const {
  // Residual transfers through the 1/a scaling, so tighten accordingly.
  const double inner_tol = std::max(1e-15, 0.01 * tol_ * std::min(1.0, a));
  return map_->invert(a * y, inner_tol) / a;
}

Vec NonlinearLayer::eval(const Vec& x) const {
  try {
    if (index_ == 1) return g_eval(a_cur_, x);
    return g_eval(a_cur_, g_invert(a_prev_, x));
  } catch (const InversionError& e) {
    throw InversionError("layer " + std::to_string(index_) + ": " + e.what(),
                         e.residual());
  }
}

Mat NonlinearLayer::jacobian(const Vec& x) const {
  // D(g_i o g_{i-1}^{-1})(x) = Dh(a_i u) Dh(a_{i-1} u)^{-1} at u = g_{i-1}^{-1}(x).
  if (index_ == 1) return map_->jacobian(a_cur_ * x);
  const Vec u = g_invert(a_prev_, x);
  const Mat Ji = map_->jacobian(a_cur_ * u);
  const Mat Jp = map_->jacobian(a_prev_ * u);
  return Jp.transpose().partialPivLu().solve(Ji.transpose()).transpose();
}

Vec NonlinearLayer::invert(const Vec& y, double tol) const {
  try {
    if (index_ == 1) {
      const double inner_tol = std::max(1e-15, tol * a_cur_);
      return map_->invert(a_cur_ * y, inner_tol) / a_cur_;
    }
    // (g_i o g_{i-1}^{-1})^{-1} = g_{i-1} o g_i^{-1}.
    const double inner_tol = std::max(1e-15, 0.5 * tol * a_cur_);
    const Vec u = map_->invert(a_cur_ * y, inner_tol) / a_cur_;
    return g_eval(a_prev_, u);
  } catch (const InversionError& e) {
    throw InversionError("layer " + std::to_string(index_) + ": " + e.what(),
                         e.residual());
  }
}

std::vector<std::shared_ptr<const NonlinearLayer>> split(
    const SmoothMapPtr& map, const Schedule& schedule, double tol) {
  if (!map) throw std::invalid_argument("split: null map");
  const int d = map->dim();
  // The construction is only valid for maps fixing the origin with identity
  // Jacobian; enforce rather than trust.
  const double origin_err = map->eval(Vec::Zero(d)).norm();
  if (origin_err > 1e-10 * std::max(1.0, map->R()))
    throw std::invalid_argument("split: map does not fix the origin (normalize first)");
  const double jac_err =
      spectral_norm(map->jacobian(Vec::Zero(d)) - Mat::Identity(d, d));
  if (jac_err > 1e-8)
    throw std::invalid_argument(
        "split: map Jacobian at the origin is not the identity (normalize first)");
  if (static_cast<int>(schedule.a.size()) != schedule.m || schedule.m < 1)
    throw std::invalid_argument("split: malformed schedule");

  std::vector<std::shared_ptr<const NonlinearLayer>> layers;
  layers.reserve(schedule.m);
  for (int i = 1; i <= schedule.m; ++i) {
    const double a_prev = (i == 1) ? 0.0 : schedule.a[i - 2];
    layers.push_back(std::make_shared<const NonlinearLayer>(
        map, i, a_prev, schedule.a[i - 1], tol));
  }
  return layers;
}

// ----------------------------------------------------------- full pipeline

namespace {

// Translation x -> x + shift as a stack layer.
class TranslationLayer final : public DifferentiableMap {
 public:
  explicit TranslationLayer(Vec shift) : shift_(std::move(shift)) {}
  int dim() const override { return static_cast<int>(shift_.size()); }
  Vec eval(const Vec& x) const override {
    check_dim(x, "TranslationLayer::eval");
    return x + shift_;
  }
  Mat jacobian(const Vec& x) const override {
    check_dim(x, "TranslationLayer::jacobian");
    return Mat::Identity(dim(), dim());
  }
  bool has_analytic_jacobian() const override { return true; }
  Vec invert(const Vec& y, double) const override {
    check_dim(y, "TranslationLayer::invert");
    return y - shift_;
  }

 private:
  Vec shift_;
};

// Linear factor x -> (I + A)x.
class LinearFactorLayer final : public DifferentiableMap {
 public:
  explicit LinearFactorLayer(const Mat& A)
      : F_(Mat::Identity(A.rows(), A.cols()) + A), lu_(F_) {}
  int dim() const override { return static_cast<int>(F_.rows()); }
  Vec eval(const Vec& x) const override {
    check_dim(x, "LinearFactorLayer::eval");
    return F_ * x;
  }
  Mat jacobian(const Vec& x) const override {
    check_dim(x, "LinearFactorLayer::jacobian");
    return F_;
  }
  bool has_analytic_jacobian() const override { return true; }
  Vec invert(const Vec& y, double) const override {
    check_dim(y, "LinearFactorLayer::invert");
    return lu_.solve(y);
  }

 private:
  Mat F_;
  Eigen::PartialPivLU<Mat> lu_;
};

}  // namespace

LayerStack full_decompose(const SmoothMapPtr& map, int m_linear,
                          int m_nonlinear, double epsilon,
                          const DecomposeOptions& opts) {
  if (!map) throw std::invalid_argument("full_decompose: null map");
  if (m_linear < 1 || m_nonlinear < 2)
    throw std::invalid_argument(
        "full_decompose: need m_linear >= 1 and m_nonlinear >= 2");

  const auto normalized = normalize(map);  // throws OrientationError if det <= 0
  LayerStack stack;
  stack.schedule = build_schedule(m_nonlinear, epsilon, normalized->alpha(),
                                  normalized->R(), normalized->M());
  if (!stack.schedule.feasible) {
    std::ostringstream msg;
    msg << "full_decompose: epsilon " << epsilon << " infeasible with m "
        << m_nonlinear << " (needs m >= " << stack.schedule.suggested_m << ")";
    throw InfeasibleScheduleError(msg.str(), stack.schedule.suggested_m);
  }

  stack.linear = factor_near_identity(normalized->anchor_jacobian(), m_linear);
  stack.x0 = map->x0();
  stack.hx0 = normalized->anchor_value();

  stack.layers.push_back({LayerKind::Translation,
                          std::make_shared<TranslationLayer>(Vec(-stack.x0)),
                          "translate -x0", std::nullopt});
  const auto nl = split(normalized, stack.schedule, opts.tol);
  for (const auto& layer : nl) {
    stack.layers.push_back({LayerKind::Nonlinear, layer,
                            "nonlinear " + std::to_string(layer->index()) + "/" +
                                std::to_string(stack.schedule.m),
                            std::nullopt});
  }
  // Matrix product (I+A_1)...(I+A_k) applies its rightmost factor first, so
  // the stack (application order) takes the factors in reverse.
  const int k = static_cast<int>(stack.linear.factors.size());
  for (int i = k; i-- > 0;) {
    stack.layers.push_back({LayerKind::Linear,
                            std::make_shared<LinearFactorLayer>(stack.linear.factors[i]),
                            "linear " + std::to_string(i + 1) + "/" +
                                std::to_string(k),
                            std::nullopt});
  }
  stack.layers.push_back({LayerKind::Translation,
                          std::make_shared<TranslationLayer>(stack.hx0),
                          "translate +h(x0)", std::nullopt});

  // Pushforward clouds + per-layer certificates + composition check.
  Rng rng(derive_seed(opts.seed, "full_decompose/cloud"));
  std::vector<Vec> cloud(opts.n_samples);
  for (auto& p : cloud) p = rng.in_ball(map->dim(), map->R());
  stack.n_check_samples = opts.n_samples;

  std::vector<Vec> current = cloud;
  int layer_idx = 0;
  for (auto& sl : stack.layers) {
    if (opts.certify) {
      const Domain dom = Domain::cloud(current);
      sl.certificate = certify_deviation(
          *sl.map, dom, opts.n_pairs,
          derive_seed(opts.seed, "layer-cert/" + std::to_string(layer_idx)));
      if (sl.kind == LayerKind::Nonlinear) {
        stack.max_certified_deviation = std::max(
            stack.max_certified_deviation, sl.certificate->deviation());
      }
    }
    for (auto& p : current) p = sl.map->eval(p);
    ++layer_idx;
  }
  double worst = 0.0;
  for (int j = 0; j < opts.n_samples; ++j)
    worst = std::max(worst, (current[j] - map->eval(cloud[j])).norm());
  stack.composition_error = worst;
  return stack;
}

Vec eval_stack(const LayerStack& stack, const Vec& x, int upto) {
  const int n = static_cast<int>(stack.layers.size());
  const int stop = (upto < 0 || upto > n) ? n : upto;
  Vec z = x;
  for (int i = 0; i < stop; ++i) z = stack.layers[i].map->eval(z);
  return z;
}

}  // namespace nearid
