// Tests for schedules and the near-identity decomposition pipeline.
//
// Independent oracles: the schedule constant and feasibility threshold
// recomputed from their definitions inline; a d = 1 quadratic map whose
// layers have closed-form values via the quadratic formula; and direct
// composition checks of stacks against the original maps.
#include <doctest.h>

#include <nearid/decomposition.hpp>
#include <nearid/smooth_map.hpp>

#include <cmath>
#include <memory>
#include <vector>

using nearid::Mat;
using nearid::SmoothMapPtr;
using nearid::Vec;

namespace {

Vec vec1(double a) {
  Vec v(1);
  v << a;
  return v;
}

// d = 1 test map h(x) = x + q x^2 on a small ball, with closed-form inverse
// via the quadratic formula (root continuous at 0).  alpha = 2q exactly.
class QuadMap final : public nearid::SmoothMap {
 public:
  QuadMap(double q, double R, double M)
      : SmoothMap(1, nearid::MapConstants{2.0 * q, M, R, false}, Vec::Zero(1)),
        q_(q) {}
  Vec eval(const Vec& x) const override {
    return vec1(x[0] + q_ * x[0] * x[0]);
  }
  Mat jacobian(const Vec& x) const override {
    Mat j(1, 1);
    j << 1.0 + 2.0 * q_ * x[0];
    return j;
  }
  bool has_analytic_jacobian() const override { return true; }
  Vec invert(const Vec& y, double) const override {
    return vec1(quad_root(y[0]));
  }
  double lipschitz_bound() const override { return 1.0 + 2.0 * q_ * R(); }
  std::string family() const override { return "test_quad"; }

  // Root of q u^2 + u - y = 0 with u(0) = 0: u = (-1 + sqrt(1+4qy)) / (2q),
  // written in the cancellation-free form 2y / (1 + sqrt(1+4qy)).
  double quad_root(double y) const {
    return 2.0 * y / (1.0 + std::sqrt(1.0 + 4.0 * q_ * y));
  }

 private:
  double q_;
};

}  // namespace

TEST_CASE("schedule constant arithmetic") {
  // B = max{alpha M (R+M), M(L+1+2R alpha) + alpha R^2}, L = 1 + alpha R.
  // alpha = M = R = 1: max{2, 1*(2+1+2) + 1} = 6.
  CHECK(nearid::compute_B(1.0, 1.0, 1.0) == doctest::Approx(6.0).epsilon(1e-15));
  // alpha -> 0 with R = M = 1: max{0, 1*(1+1+0) + 0} = 2.
  CHECK(nearid::compute_B(0.0, 1.0, 1.0) == doctest::Approx(2.0).epsilon(1e-15));
  // alpha = 1, R = 1, M = 2: max{1*2*3, 2*(2+1+2) + 1} = max{6, 11} = 11.
  CHECK(nearid::compute_B(1.0, 1.0, 2.0) ==
        doctest::Approx(11.0).epsilon(1e-15));
  // alpha = 2, R = 1, M = 2: L = 3, max{2*2*3, 2*(3+1+4) + 2} = max{12, 18}.
  CHECK(nearid::compute_B(2.0, 1.0, 2.0) ==
        doctest::Approx(18.0).epsilon(1e-15));

  CHECK_THROWS_AS(nearid::compute_B(-0.1, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(nearid::compute_B(1.0, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(nearid::compute_B(1.0, 1.0, -2.0), std::invalid_argument);
}

TEST_CASE("feasibility threshold and minimal m") {
  // B = 6, m = 50: threshold 6 ln(100) / 49.
  const double expect = 6.0 * std::log(100.0) / 49.0;
  CHECK(nearid::feasible_epsilon(6.0, 50) == doctest::Approx(expect).epsilon(1e-15));
  CHECK(expect == doctest::Approx(0.5639).epsilon(1e-3));

  // Independent oracle for min_feasible_m: direct scan over m.
  for (double eps : {0.05, 0.2, 0.5639, 1.5}) {
    const int m_lib = nearid::min_feasible_m(6.0, eps);
    int m_scan = 0;
    for (int m = 2; m <= 2000000; ++m) {
      if (eps >= 6.0 * std::log(2.0 * m) / (m - 1)) {
        m_scan = m;
        break;
      }
    }
    CHECK(m_lib == m_scan);
    // Boundary: m_lib is feasible, m_lib - 1 is not.
    CHECK(eps >= nearid::feasible_epsilon(6.0, m_lib));
    if (m_lib > 2) CHECK(eps < nearid::feasible_epsilon(6.0, m_lib - 1));
  }
}

TEST_CASE("geometric schedule with forced ratio") {
  // m = 3, c = 0.1: a = (0.81, 0.9, 1.0).
  const auto s = nearid::build_schedule(3, 0.7, 1.0, 1.0, 1.0, 0.1);
  REQUIRE(s.a.size() == 3);
  CHECK(s.a[0] == doctest::Approx(0.81).epsilon(1e-15));
  CHECK(s.a[1] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.a[2] == 1.0);  // exactly one
  CHECK(s.c == 0.1);
  for (size_t i = 1; i < s.a.size(); ++i) {
    CHECK(s.a[i - 1] < s.a[i]);
    CHECK(s.a[i - 1] == doctest::Approx(s.a[i] * (1.0 - s.c)).epsilon(1e-15));
  }
}

TEST_CASE("automatic schedules satisfy both proof constraints") {
  // For a feasible (m, eps) the chosen c must satisfy c <= eps/B and
  // a_1 <= eps / (2 alpha R); recheck both directly from the output.
  const double alpha = 1.0, R = 1.0, M = 1.0;
  const double B = nearid::compute_B(alpha, R, M);
  for (int m : {8, 16, 64, 256}) {
    const double eps = nearid::feasible_epsilon(B, m) * 1.05;
    const auto s = nearid::build_schedule(m, eps, alpha, R, M);
    CHECK(s.feasible);
    CHECK(s.B == doctest::Approx(B));
    CHECK(s.c <= eps / B * (1.0 + 1e-12));
    CHECK(s.a.front() <= eps / (2.0 * alpha * R) * (1.0 + 1e-12));
    CHECK(s.a.back() == 1.0);
    CHECK(s.m == m);
    // Large eps branch: c pins a_1 near 1/(2m) and keeps slack in both.
    const auto s2 = nearid::build_schedule(m, 2.0 * B, alpha, R, M);
    CHECK(s2.feasible);
    CHECK(s2.a.front() <= 1.0 / (2.0 * m) * (1.0 + 1e-9));
  }
}

TEST_CASE("infeasible schedules carry a usable suggested m") {
  const double B = nearid::compute_B(1.0, 1.0, 1.0);
  const double eps = 0.3;
  const auto s = nearid::build_schedule(4, eps, 1.0, 1.0, 1.0);
  CHECK_FALSE(s.feasible);
  CHECK(s.suggested_m == nearid::min_feasible_m(B, eps));
  CHECK(s.suggested_m > 4);
  // The suggestion is itself feasible.
  CHECK(nearid::build_schedule(s.suggested_m, eps, 1.0, 1.0, 1.0).feasible);
}

TEST_CASE("d=1 quadratic map: layers match the closed form") {
  // h(x) = x + 0.1 x^2 on B_1; M on the ball: (h^{-1})' = 1/(1+0.2x) <= 1/0.8.
  auto quad = std::make_shared<QuadMap>(0.1, 1.0, 1.25);
  const auto sched = nearid::build_schedule(2, 0.9, quad->alpha(), 1.0, 1.25);
  const auto layers = nearid::split(quad, sched, 1e-12);
  REQUIRE(layers.size() == 2);

  const double a1 = sched.a[0];
  for (double x : {-0.8, -0.3, 0.0, 0.4, 0.9}) {
    // Layer 1 is g_1(x) = h(a_1 x)/a_1 = x + 0.1 a_1 x^2.
    const double g1 = x + 0.1 * a1 * x * x;
    CHECK(layers[0]->eval(vec1(x))[0] == doctest::Approx(g1).epsilon(1e-12));
    // Layer 2 is h o g_1^{-1}; evaluate the closed form at y = g1(x):
    // g_1^{-1}(y) solves 0.1 a_1 u^2 + u = y, then apply h.
    const double u = 2.0 * g1 / (1.0 + std::sqrt(1.0 + 0.4 * a1 * g1));
    const double h2 = u + 0.1 * u * u;
    CHECK(layers[1]->eval(vec1(g1))[0] == doctest::Approx(h2).epsilon(1e-10));
    // Composition reproduces h exactly.
    const double hx = x + 0.1 * x * x;
    CHECK(layers[1]->eval(layers[0]->eval(vec1(x)))[0] ==
          doctest::Approx(hx).epsilon(1e-10));
  }
}

TEST_CASE("split composes back to the map for built-in families") {
  auto tanh2 = std::make_shared<nearid::TanhDiagonalMap>(2, 0.3, 1.0);
  const auto norm = nearid::normalize(tanh2);
  const double B = nearid::compute_B(norm->alpha(), norm->R(), norm->M());
  const int m = 16;
  const auto sched =
      nearid::build_schedule(m, nearid::feasible_epsilon(B, m) * 1.01,
                             norm->alpha(), norm->R(), norm->M());
  REQUIRE(sched.feasible);
  const auto layers = nearid::split(norm, sched);
  REQUIRE(layers.size() == 16);

  nearid::Rng rng(55);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Vec x = rng.in_ball(2, 1.0);
    Vec z = x;
    for (const auto& l : layers) z = l->eval(z);
    worst = std::max(worst, (z - norm->eval(x)).norm());
  }
  CHECK(worst <= 1e-8);

  // Layer Jacobians agree with finite differences (exercises the
  // solve-based Jacobian of g_i o g_{i-1}^{-1}).
  const Vec p = vec1(0.3).replicate(2, 1);
  for (const auto& l : {layers[0], layers[7], layers[15]}) {
    CHECK((l->jacobian(p) - nearid::fd_jacobian(*l, p)).norm() <= 1e-6);
  }

  // Layer inverses round trip.
  const Vec y = layers[4]->eval(p);
  CHECK((layers[4]->invert(y, 1e-11) - p).norm() <= 1e-9);
}

TEST_CASE("split rejects maps that are not normalized") {
  // A raw tanh map has Dh(0) = (1+beta) I != I.
  auto raw = std::make_shared<nearid::TanhDiagonalMap>(1, 0.3, 1.0);
  const auto sched = nearid::build_schedule(8, 0.9, raw->alpha(), 1.0, 1.0);
  CHECK_THROWS_AS(nearid::split(raw, sched), std::invalid_argument);
}

TEST_CASE("full pipeline: affine maps reduce to translations and factors") {
  Mat d2(2, 2);
  d2 << 1.2, 0.1, 0.0, 0.9;
  Vec b(2);
  b << 0.4, -0.7;
  auto aff = std::make_shared<nearid::AffineMap>(d2, b, 1.5);
  nearid::DecomposeOptions opts;
  opts.n_samples = 100;
  opts.n_pairs = 50;
  const auto stack = nearid::full_decompose(aff, 4, 8, 1.2, opts);

  // Composition agrees with the map everywhere sampled.
  CHECK(stack.composition_error <= 1e-10);
  nearid::Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const Vec x = rng.in_ball(2, 1.5);
    CHECK((nearid::eval_stack(stack, x) - aff->eval(x)).norm() <= 1e-10);
  }

  // The nonlinear layers of an affine map are all identities.
  for (const auto& layer : stack.layers) {
    if (layer.kind == nearid::LayerKind::Nonlinear) {
      const Vec x = rng.in_ball(2, 1.0);
      CHECK((layer.map->eval(x) - x).norm() <= 1e-10);
    }
  }
  CHECK(stack.max_certified_deviation <= 1e-9);
  CHECK(stack.linear.factors.size() == 4);
  CHECK(stack.linear.reconstruction_error <= 1e-10);
}

TEST_CASE("full pipeline: nonlinear map with off-origin anchor") {
  Vec x0(2);
  x0 << 0.3, -0.1;
  auto map = std::make_shared<nearid::TanhDiagonalMap>(2, 0.4, 1.0, x0);
  nearid::DecomposeOptions opts;
  opts.n_samples = 300;
  opts.n_pairs = 200;
  opts.seed = 9;
  const auto stack = nearid::full_decompose(map, 3, 16, 1.2, opts);

  CHECK(stack.composition_error <= 1e-8);
  CHECK((stack.x0 - x0).norm() == 0.0);
  CHECK((stack.hx0 - map->eval(x0)).norm() == 0.0);
  CHECK(stack.schedule.m == 16);
  CHECK(stack.schedule.feasible);

  // Every nonlinear layer carries a certificate within the target.
  int n_nonlinear = 0;
  for (const auto& layer : stack.layers) {
    if (layer.kind == nearid::LayerKind::Nonlinear) {
      ++n_nonlinear;
      REQUIRE(layer.certificate.has_value());
      CHECK(layer.certificate->deviation() <= 1.2);
    }
  }
  CHECK(n_nonlinear == 16);
  CHECK(stack.max_certified_deviation <= 1.2);

  // eval_stack prefixes walk the pipeline: upto=0 is the identity.
  const Vec p = vec1(0.2).replicate(2, 1);
  CHECK((nearid::eval_stack(stack, p, 0) - p).norm() == 0.0);
  CHECK((nearid::eval_stack(stack, p) - map->eval(p)).norm() <= 1e-8);
}

TEST_CASE("full pipeline surfaces infeasibility with a suggestion") {
  auto map = std::make_shared<nearid::TanhDiagonalMap>(2, 0.4, 1.0);
  try {
    nearid::full_decompose(map, 2, 4, 1e-3);
    FAIL("expected InfeasibleScheduleError");
  } catch (const nearid::InfeasibleScheduleError& e) {
    CHECK(e.suggested_m() > 4);
    // The suggestion must actually be feasible for this map.
    const auto norm = nearid::normalize(map);
    const double B = nearid::compute_B(norm->alpha(), norm->R(), norm->M());
    CHECK(1e-3 >= nearid::feasible_epsilon(B, e.suggested_m()));
  }
}

TEST_CASE("decomposition is deterministic for a fixed seed") {
  auto map = std::make_shared<nearid::TanhDiagonalMap>(2, 0.2, 1.0);
  nearid::DecomposeOptions opts;
  opts.n_samples = 100;
  opts.n_pairs = 60;
  opts.seed = 31;
  const auto s1 = nearid::full_decompose(map, 2, 8, 0.8, opts);
  const auto s2 = nearid::full_decompose(map, 2, 8, 0.8, opts);
  CHECK(s1.composition_error == s2.composition_error);
  CHECK(s1.max_certified_deviation == s2.max_certified_deviation);
  REQUIRE(s1.layers.size() == s2.layers.size());
  for (size_t i = 0; i < s1.layers.size(); ++i) {
    if (s1.layers[i].certificate) {
      CHECK(s1.layers[i].certificate->pair_lower_bound ==
            s2.layers[i].certificate->pair_lower_bound);
    }
  }
}
