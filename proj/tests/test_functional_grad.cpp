// Tests for functional gradients over frozen compositions.
//
// Independent oracles: a single-layer, single-sample configuration worked
// out by hand; the chain identity Dh_m ... Dh_{i+1} Delta = c (h* - h)
// verified by direct multiplication; and first-order convergence of the
// finite-difference quotient to the closed-form derivative.
#include <doctest.h>

#include <nearid/functional_grad.hpp>
#include <nearid/resnet.hpp>
#include <nearid/rng.hpp>
#include <nearid/smooth_map.hpp>

#include <cmath>
#include <memory>
#include <vector>

using nearid::CompositionState;
using nearid::Mat;
using nearid::Vec;

namespace {

Vec vec1(double a) {
  Vec v(1);
  v << a;
  return v;
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// Origin-fixing linear test layer x -> s x.
class ScaleMap final : public nearid::DifferentiableMap {
 public:
  ScaleMap(int d, double s) : d_(d), s_(s) {}
  int dim() const override { return d_; }
  Vec eval(const Vec& x) const override { return s_ * x; }
  Mat jacobian(const Vec&) const override {
    return s_ * Mat::Identity(d_, d_);
  }
  bool has_analytic_jacobian() const override { return true; }

 private:
  int d_;
  double s_;
};

using LayerPtr = std::shared_ptr<const nearid::DifferentiableMap>;

// A residual-layer composition state over a random sample, with analytic
// per-layer deviations attached.
CompositionState make_resnet_state(int m, int d, int k, double max_dev, int n,
                                   std::uint64_t seed,
                                   nearid::ResNetParams* out_theta = nullptr) {
  const auto theta = nearid::random_near_identity_params(
      m, d, k, max_dev, nearid::derive_seed(seed, "theta"));
  std::vector<LayerPtr> layers;
  std::vector<double> eps;
  for (int i = 0; i < m; ++i) {
    layers.push_back(
        std::make_shared<nearid::ResidualLayerMap>(theta.A[i], theta.B[i]));
    eps.push_back(nearid::layer_deviation_bound(theta.A[i], theta.B[i]));
  }
  nearid::Rng rng(nearid::derive_seed(seed, "sample"));
  std::vector<Vec> sample;
  for (int j = 0; j < n; ++j) sample.push_back(rng.in_ball(d, 1.0));
  CompositionState state(std::move(layers), std::move(sample));
  state.set_layer_epsilons(std::move(eps));
  if (out_theta) *out_theta = theta;
  return state;
}

}  // namespace

TEST_CASE("SampledFunction evaluates exact matches and nearest neighbors") {
  nearid::SampledFunction f;
  f.base = {vec1(0.0), vec1(1.0), vec1(2.0)};
  f.values = {vec1(10.0), vec1(11.0), vec1(12.0)};
  CHECK(f.eval(vec1(1.0))[0] == 11.0);
  CHECK(f.eval(vec1(1.9))[0] == 12.0);   // nearest neighbor
  CHECK(f.eval(vec1(-5.0))[0] == 10.0);  // clamps to the closest base point
  CHECK(f.size() == 3);
}

TEST_CASE("CompositionState caches the forward chain") {
  std::vector<LayerPtr> layers = {std::make_shared<ScaleMap>(2, 1.1),
                                  std::make_shared<ScaleMap>(2, 0.9)};
  std::vector<Vec> sample = {vec2(1.0, 0.0), vec2(0.0, -2.0)};
  CompositionState state(layers, sample);

  CHECK(state.m() == 2);
  CHECK(state.n() == 2);
  CHECK(state.dim() == 2);
  CHECK((state.z(0)[0] - vec2(1.0, 0.0)).norm() == 0.0);
  CHECK((state.z(1)[0] - vec2(1.1, 0.0)).norm() == 0.0);
  CHECK((state.z(2)[0] - vec2(0.99, 0.0)).norm() <= 1e-15);
  CHECK((state.outputs()[1] - vec2(0.0, -1.98)).norm() <= 1e-15);

  // Without certificates, epsilon() is unavailable.
  CHECK_FALSE(state.has_epsilon());
  CHECK_THROWS(state.epsilon());
  state.set_layer_epsilons({0.1, 0.1});
  CHECK(state.epsilon() == 0.1);
}

TEST_CASE("CompositionState rejects broken inputs") {
  std::vector<LayerPtr> ok = {std::make_shared<ScaleMap>(2, 1.1)};
  // Empty sample / empty layer list.
  CHECK_THROWS_AS(CompositionState(ok, std::vector<Vec>{}),
                  std::invalid_argument);
  CHECK_THROWS_AS(CompositionState(std::vector<LayerPtr>{}, {vec2(1, 0)}),
                  std::invalid_argument);
  // Dimension mismatch between layers and sample.
  CHECK_THROWS_AS(CompositionState(ok, {vec1(1.0)}), std::invalid_argument);

  // Layers must fix the origin: a translation is rejected.
  class Shift final : public nearid::DifferentiableMap {
   public:
    int dim() const override { return 2; }
    Vec eval(const Vec& x) const override { return x + vec2(0.5, 0.0); }
    Mat jacobian(const Vec&) const override { return Mat::Identity(2, 2); }
  };
  std::vector<LayerPtr> shifted = {std::make_shared<Shift>()};
  CHECK_THROWS_AS(CompositionState(shifted, {vec2(1.0, 0.0)}),
                  std::invalid_argument);
}

TEST_CASE("norm floor splits the sample into admitted and excluded points") {
  std::vector<LayerPtr> layers = {std::make_shared<ScaleMap>(1, 1.1)};
  std::vector<Vec> sample = {vec1(1.0), vec1(1e-9), vec1(-0.5)};
  CompositionState state(layers, sample);  // default floor 1e-3 * max norm
  REQUIRE(state.admitted().size() == 2);   // the 1e-9 point is excluded
  CHECK(state.admitted()[0] == 0);
  CHECK(state.admitted()[1] == 2);
  CHECK(state.norm_floor() == doctest::Approx(1e-3).epsilon(1e-12));

  // The induced norm ignores values at excluded points.
  nearid::SampledFunction f;
  f.base = sample;
  f.values = {vec1(2.0), vec1(1000.0), vec1(1.0)};
  CHECK(nearid::sample_induced_norm(state, f) == doctest::Approx(2.0));

  // A floor that excludes everything is rejected.
  CHECK_THROWS_AS(CompositionState(layers, sample, 10.0),
                  std::invalid_argument);
}

TEST_CASE("residual and loss identities") {
  std::vector<LayerPtr> layers = {std::make_shared<ScaleMap>(1, 2.0)};
  std::vector<Vec> sample = {vec1(1.0), vec1(-2.0)};
  CompositionState state(layers, sample);

  // Target = the composition itself: residual 0, loss 0.
  ScaleMap self(1, 2.0);
  const auto targets = nearid::target_values(state, self);
  const auto r = nearid::residual(state, targets);
  CHECK(r.values[0].norm() == 0.0);
  CHECK(nearid::quadratic_loss(state, targets) == 0.0);

  // Target = identity: r_j = 2x_j - x_j = x_j.
  nearid::IdentityMap id(1);
  const auto t2 = nearid::target_values(state, id);
  const auto r2 = nearid::residual(state, t2);
  CHECK(r2.values[0][0] == doctest::Approx(1.0));
  CHECK(r2.values[1][0] == doctest::Approx(-2.0));
  CHECK((r2.base[0] - sample[0]).norm() == 0.0);  // based at the inputs
  // Q = (1/2) * (1/2) * (1 + 4) = 1.25.
  CHECK(nearid::quadratic_loss(state, t2) == doctest::Approx(1.25).epsilon(1e-15));
}

TEST_CASE("single-layer delta matches the hand computation") {
  // One layer h(x) = 1.1 x, one sample x = 1, target h* = Id.
  //   raw_j = h*(x) - h(x) = -0.1 (no downstream Jacobians for the last
  //   layer), based at z_0 = 1; induced norm |raw|/|x| = 0.1, so c = 10 and
  //   Delta(1) = -1.
  std::vector<LayerPtr> layers = {std::make_shared<ScaleMap>(1, 1.1)};
  CompositionState state(layers, {vec1(1.0)});
  state.set_layer_epsilons({0.1});

  nearid::IdentityMap id(1);
  const auto targets = nearid::target_values(state, id);
  const auto delta = nearid::build_delta(state, 1, targets);
  CHECK_FALSE(delta.degenerate);
  CHECK(delta.c == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(delta.delta.values[0][0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK((delta.delta.base[0] - vec1(1.0)).norm() == 0.0);

  // Exact derivative: -c * mean ||r||^2 = -10 * 0.01 = -0.1.
  const auto dd = nearid::directional_derivative(state, 1, delta, 1e-6, targets);
  CHECK(dd.exact_value == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(dd.fd_value == doctest::Approx(-0.1).epsilon(1e-3));
}

TEST_CASE("degenerate delta when the target is already realized") {
  std::vector<LayerPtr> layers = {std::make_shared<ScaleMap>(1, 1.05)};
  CompositionState state(layers, {vec1(1.0), vec1(-1.5)});
  state.set_layer_epsilons({0.05});
  ScaleMap self(1, 1.05);
  const auto targets = nearid::target_values(state, self);
  const auto delta = nearid::build_delta(state, 1, targets);
  CHECK(delta.degenerate);
  CHECK(delta.c == 0.0);
  const auto dd = nearid::directional_derivative(state, 1, delta, 1e-5, targets);
  CHECK(dd.exact_value == 0.0);
  CHECK(dd.fd_value == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("delta satisfies the downstream chain identity") {
  // Push Delta at layer i through the downstream Jacobians: the result must
  // equal c (h* - h) at every admitted sample (the defining identity).
  nearid::ResNetParams theta;
  auto state = make_resnet_state(4, 2, 3, 0.2, 40, 97, &theta);
  nearid::TanhDiagonalMap target(2, 0.3, 1.0);
  const auto targets = nearid::target_values(state, target);
  const auto r = nearid::residual(state, targets);

  for (int layer = 1; layer <= state.m(); ++layer) {
    const auto delta = nearid::build_delta(state, layer, targets);
    REQUIRE_FALSE(delta.degenerate);
    for (int j = 0; j < state.n(); ++j) {
      Vec v = delta.delta.values[j];
      for (int l = layer; l < state.m(); ++l) {
        v = state.layers()[l]->jacobian(state.z(l)[j]) * v;
      }
      const Vec expect = -delta.c * r.values[j];
      CHECK((v - expect).norm() <= 1e-8 * (1.0 + expect.norm()));
    }
  }
}

TEST_CASE("finite differences converge to the exact derivative at first order") {
  auto state = make_resnet_state(3, 2, 4, 0.25, 60, 11);
  nearid::TanhDiagonalMap target(2, 0.25, 1.0);
  const auto targets = nearid::target_values(state, target);

  for (int layer : {1, 2, 3}) {
    const auto delta = nearid::build_delta(state, layer, targets);
    REQUIRE_FALSE(delta.degenerate);
    double prev_err = -1.0;
    for (double t : {1e-3, 1e-4, 1e-5}) {
      const auto dd =
          nearid::directional_derivative(state, layer, delta, t, targets);
      const double err = std::abs(dd.fd_value - dd.exact_value);
      CHECK(err <= 10.0 * t * std::max(1.0, std::abs(dd.exact_value)));
      if (prev_err >= 0.0 && prev_err > 1e-12) {
        CHECK(err <= 0.35 * prev_err);  // first order: a decade per decade
      }
      prev_err = err;
    }
  }
}

TEST_CASE("build_delta requires the near-identity regime") {
  std::vector<LayerPtr> layers = {std::make_shared<ScaleMap>(1, 1.1),
                                  std::make_shared<ScaleMap>(1, 0.9)};
  CompositionState state(layers, {vec1(1.0)});
  nearid::IdentityMap id(1);
  const auto targets = nearid::target_values(state, id);

  // Uncertified state: the direction itself needs no epsilon, but the bound
  // verification does.
  CHECK_NOTHROW(nearid::build_delta(state, 1, targets));
  CHECK_THROWS_AS(nearid::verify_descent_bound(state, targets),
                  std::logic_error);
  // Certified outside the regime.
  state.set_layer_epsilons({1.5, 0.1});
  CHECK_THROWS_AS(nearid::build_delta(state, 1, targets), nearid::RegimeError);
  CHECK_THROWS_AS(nearid::verify_descent_bound(state, targets),
                  nearid::RegimeError);
}

TEST_CASE("sampling certification matches analytic layer bounds") {
  nearid::ResNetParams theta;
  auto state = make_resnet_state(3, 2, 3, 0.3, 50, 29, &theta);
  // Re-certify by sampling (replaces the analytic epsilons).
  state.certify(200, 71);
  REQUIRE(state.certificates().size() == 3);
  for (int i = 0; i < 3; ++i) {
    const double analytic =
        nearid::layer_deviation_bound(theta.A[i], theta.B[i]);
    CHECK(state.layer_epsilons()[i] <= analytic * (1.0 + 1e-12));
    CHECK(state.layer_epsilons()[i] > 0.0);
  }
  CHECK(state.epsilon() < 0.3);
}

TEST_CASE("descent bound holds on certified residual compositions") {
  for (std::uint64_t seed : {101ull, 202ull, 303ull}) {
    auto state = make_resnet_state(4, 2, 3, 0.2, 50, seed);
    nearid::TanhDiagonalMap target(2, 0.2, 1.0);
    const auto targets = nearid::target_values(state, target);
    const auto report = nearid::verify_descent_bound(state, targets);

    CHECK(report.all_hold);
    CHECK(report.layers.size() == 4);
    CHECK(report.epsilon < 1.0);
    CHECK(report.prefactor ==
          doctest::Approx(std::pow(1.0 - report.epsilon, 3)).epsilon(1e-12));
    CHECK(report.q_star == 0.0);  // targets are just labels; Q* defaults to 0
    CHECK(report.residual_norm > 0.0);
    for (const auto& rec : report.layers) {
      CHECK(rec.holds);
      CHECK(rec.margin >= 0.0);
      CHECK(rec.exact_value < 0.0);  // strictly descends
      CHECK(rec.exact_value <= rec.bound_rhs * (1.0 - 1e-6) + 1e-15);
      // The fd cross-check tracks the exact value.
      CHECK(std::abs(rec.fd_value - rec.exact_value) <=
            1e-2 * std::max(1.0, std::abs(rec.exact_value)));
    }
  }
}

TEST_CASE("zero functional gradient forces optimal loss") {
  // Contrapositive on a realized target: when h = h*, all directional
  // derivatives vanish and Q equals Q* exactly.
  nearid::ResNetParams theta;
  auto state = make_resnet_state(3, 2, 3, 0.2, 30, 55, &theta);
  // Target = the composition itself, evaluated through the network.
  std::vector<Vec> targets;
  for (int j = 0; j < state.n(); ++j) targets.push_back(state.outputs()[j]);

  const auto report = nearid::verify_descent_bound(state, targets);
  CHECK(report.q_loss == 0.0);
  CHECK(report.all_hold);
  for (const auto& rec : report.layers) {
    CHECK(rec.degenerate);
    CHECK(rec.exact_value == 0.0);
  }
}

TEST_CASE("functional descent demo drives the loss down") {
  auto state = make_resnet_state(3, 2, 3, 0.25, 40, 123);
  nearid::TanhDiagonalMap target(2, 0.2, 1.0);
  const auto targets = nearid::target_values(state, target);

  const auto demo = nearid::functional_descent_demo(state, 2, targets, 0.5, 50);
  REQUIRE(demo.losses.size() == 51);
  CHECK(demo.losses.back() < 0.01 * demo.losses.front());
  // Backtracking keeps the trajectory monotone.
  for (size_t i = 1; i < demo.losses.size(); ++i)
    CHECK(demo.losses[i] <= demo.losses[i - 1] * (1.0 + 1e-12));
  CHECK(demo.final_layer.size() == 40);

  // Starting at the optimum: nothing moves.
  std::vector<Vec> self_targets;
  for (int j = 0; j < state.n(); ++j) self_targets.push_back(state.outputs()[j]);
  const auto flat = nearid::functional_descent_demo(state, 2, self_targets, 0.5, 10);
  CHECK(flat.losses.front() == 0.0);
  CHECK(flat.losses.back() == 0.0);
}
