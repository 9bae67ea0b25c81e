// Tests for sampling-based Lipschitz-deviation certificates and the
// near-identity property suite.
//
// Oracles: linear maps, whose deviation seminorm ||f - Id||_L is exactly
// ||D - I||_2 for every pair of points, and scalar tanh maps whose seminorm
// is attained analytically at the origin.
#include <doctest.h>

#include <nearid/lipschitz_cert.hpp>
#include <nearid/smooth_map.hpp>

#include <cmath>
#include <memory>
#include <vector>

using nearid::Domain;
using nearid::Mat;
using nearid::Vec;

namespace {

Vec vec1(double a) {
  Vec v(1);
  v << a;
  return v;
}

}  // namespace

TEST_CASE("identity map certifies to zero deviation") {
  nearid::IdentityMap id(3);
  const auto cert = nearid::certify_deviation(id, Domain::ball(3, 2.0), 200, 1);
  CHECK(cert.pair_lower_bound == 0.0);
  CHECK(cert.jac_grid_estimate == 0.0);
  CHECK(cert.deviation() == 0.0);
  CHECK(cert.grid_gap_slack == 0.0);
  CHECK(cert.domain_kind == "ball");
}

TEST_CASE("linear map deviation is exact for every sampled pair") {
  // f(x) = 1.1 x: (f - Id) is 0.1 x, so every difference quotient is 0.1.
  Mat d(1, 1);
  d << 1.1;
  nearid::AffineMap f(d, Vec::Zero(1), 1.0);
  const auto cert = nearid::certify_deviation(f, Domain::ball(1, 1.0), 300, 7);
  CHECK(cert.pair_lower_bound == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(cert.jac_grid_estimate == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(cert.analytic_jacobian);
  // Near-coincident pairs amplify rounding in the difference quotient, so
  // the measured gap is cancellation-limited, not exactly zero.
  CHECK(cert.grid_gap_slack <= 1e-11);
}

TEST_CASE("tanh deviation matches the analytic seminorm") {
  // f(x) = x + 0.05 tanh(x): sup ||Df - I|| = 0.05 at the origin, and the
  // Jacobian grid includes the ball center, so the grid value is exact.
  const double beta = 0.05;
  nearid::TanhDiagonalMap f(1, beta, 2.0);
  const auto cert = nearid::certify_deviation(f, Domain::ball(1, 2.0), 400, 3);
  CHECK(cert.jac_grid_estimate == doctest::Approx(beta).epsilon(1e-12));
  // Pair quotients are lower bounds and cannot exceed the true seminorm.
  CHECK(cert.pair_lower_bound <= beta * (1.0 + 1e-12));
  CHECK(cert.pair_lower_bound >= 0.5 * beta);  // sampling is not degenerate
  CHECK(cert.deviation() == doctest::Approx(beta).epsilon(1e-12));
}

TEST_CASE("pair bound is non-decreasing in n_pairs (nested draws)") {
  nearid::TanhDiagonalMap f(2, 0.3, 1.5);
  const Domain dom = Domain::ball(2, 1.5);
  const auto c100 = nearid::certify_deviation(f, dom, 100, 11);
  const auto c200 = nearid::certify_deviation(f, dom, 200, 11);
  const auto c400 = nearid::certify_deviation(f, dom, 400, 11);
  CHECK(c100.pair_lower_bound <= c200.pair_lower_bound);
  CHECK(c200.pair_lower_bound <= c400.pair_lower_bound);
  // Same seed, same prefix: the 100-pair value is reproduced exactly.
  const auto again = nearid::certify_deviation(f, dom, 100, 11);
  CHECK(again.pair_lower_bound == c100.pair_lower_bound);
}

TEST_CASE("cloud domains certify over the given points") {
  Mat d(2, 2);
  d << 1.1, 0.0, 0.0, 1.1;
  nearid::AffineMap f(d, Vec::Zero(2), 1.0);
  std::vector<Vec> pts;
  nearid::Rng rng(5);
  for (int i = 0; i < 50; ++i) pts.push_back(rng.in_ball(2, 1.0));
  const auto cert =
      nearid::certify_deviation(f, Domain::cloud(pts), 200, 9);
  CHECK(cert.domain_kind == "cloud");
  CHECK(cert.pair_lower_bound == doctest::Approx(0.1).epsilon(1e-12));
  CHECK_THROWS_AS(Domain::cloud(std::vector<Vec>{}), std::invalid_argument);
}

TEST_CASE("grid_gap_slack records pair excess over the grid") {
  nearid::TanhDiagonalMap f(2, 0.2, 1.0);
  const auto cert = nearid::certify_deviation(f, Domain::ball(2, 1.0), 300, 2);
  const double expect =
      std::max(0.0, cert.pair_lower_bound - cert.jac_grid_estimate);
  CHECK(cert.grid_gap_slack == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("near-identity suite: identity passes with zero margins") {
  nearid::IdentityMap id(2);
  const auto rep = nearid::near_identity_suite(id, 0.0, Domain::ball(2, 1.0), 100, 4);
  CHECK(rep.all_pass());
  CHECK(rep.newton_failures == 0);
  CHECK(rep.part1_worst_lower_margin == doctest::Approx(0.0).scale(1.0));
  CHECK(rep.part3_worst_margin == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("near-identity suite: linear map attains the inverse bound") {
  // f(x) = 1.2 x has deviation alpha = 0.2 exactly; the inverse-deviation
  // quotient is (1/1.2 - 1) = -1/6, with |.| = alpha/(1+alpha), strictly
  // inside the alpha/(1-alpha) bound; part 1 attains equality at the upper
  // Lipschitz side.
  Mat d(2, 2);
  d << 1.2, 0.0, 0.0, 1.2;
  nearid::AffineMap f(d, Vec::Zero(2), 1.0);
  const auto rep = nearid::near_identity_suite(f, 0.2, Domain::ball(2, 1.0), 400, 8);
  CHECK(rep.all_pass());
  CHECK(rep.newton_failures == 0);
  // Upper part-1 margin: (1+alpha)||x-y|| - ||f(x)-f(y)|| = 0 exactly.
  CHECK(std::abs(rep.part1_worst_upper_margin) <= 1e-9);
  // Part-2 margin: alpha/(1-alpha) - alpha/(1+alpha) = 2 alpha^2/(1-alpha^2),
  // times ||u-v||; the *relative* worst margin is reported, so check the
  // absolute slack is positive and bounded by the analytic gap.
  CHECK(rep.part2_worst_margin > 0.0);
}

TEST_CASE("near-identity suite passes for random tanh maps") {
  nearid::Rng seeds(21);
  for (int k = 0; k < 10; ++k) {
    const double beta = 0.05 + 0.3 * seeds.uniform01();
    nearid::TanhDiagonalMap f(2, beta, 1.0);
    // ||f - Id||_L = beta (slope of beta*tanh at 0).
    const auto rep =
        nearid::near_identity_suite(f, beta, Domain::ball(2, 1.0), 200,
                              nearid::derive_seed(1000, std::to_string(k)));
    CHECK(rep.all_pass());
    CHECK(rep.newton_failures == 0);
  }
}

TEST_CASE("near-identity suite rejects alpha >= 1") {
  nearid::IdentityMap id(2);
  CHECK_THROWS_AS(
      nearid::near_identity_suite(id, 1.0, Domain::ball(2, 1.0), 10, 1),
      std::invalid_argument);
  CHECK_THROWS_AS(
      nearid::near_identity_suite(id, -0.1, Domain::ball(2, 1.0), 10, 1),
      std::invalid_argument);
}

TEST_CASE("suite flags a map that violates its claimed deviation") {
  // Claim alpha = 0.05 for a map whose true deviation is 0.5: part 1 must
  // fail (the sandwich is violated by a factor of ten).
  Mat d(2, 2);
  d << 1.5, 0.0, 0.0, 1.5;
  nearid::AffineMap f(d, Vec::Zero(2), 1.0);
  const auto rep = nearid::near_identity_suite(f, 0.05, Domain::ball(2, 1.0), 100, 6);
  CHECK_FALSE(rep.part1_pass);
  CHECK_FALSE(rep.all_pass());
}
