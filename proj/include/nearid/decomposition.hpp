// Near-identity decomposition of smooth invertible maps.
//
// Given a map h normalized to h(0) = 0, Dh(0) = I on the ball B_R, the
// geometric schedule a_i = (1-c)^{m-i} defines g_i(x) = h(a_i x)/a_i and the
// layers h_1 = g_1, h_i = g_i o g_{i-1}^{-1}.  Their composition equals h
// exactly, and each layer's Lipschitz deviation from the identity is O(c).
// The constant
//   B = max{ alpha M (R + M),  M(L + 1 + 2 R alpha) + alpha R^2 },  L = 1 + alpha R,
// governs feasibility: a target deviation eps is achievable with m layers
// once eps >= B ln(2m) / (m-1).
//
// A general map reduces to this case by affine conjugation: with A = Dh(x0),
//   h(x) = A htilde(x - x0) + h(x0),
// so the full stack is a translation, the nonlinear split of htilde, the
// near-identity linear factors of A, and a final translation.
#pragma once

#include "nearid/linear_factor.hpp"
#include "nearid/lipschitz_cert.hpp"
#include "nearid/smooth_map.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace nearid {

// B(alpha, R, M) above.  alpha = 0 is allowed (affine maps); negative alpha
// or nonpositive R, M are rejected.
double compute_B(double alpha, double R, double M);

// The feasibility threshold B ln(2m) / (m-1) for m >= 2.
double feasible_epsilon(double B, int m);

// Smallest m >= 2 with eps >= B ln(2m)/(m-1), or 0 when none exists below
// the scan cap (1e8).
int min_feasible_m(double B, double eps);

struct Schedule {
  int m = 0;
  double epsilon = 0.0;
  double c = 0.0;              // geometric ratio in (0,1)
  std::vector<double> a;       // a_i = (1-c)^{m-i}, a_m = 1
  bool feasible = false;       // both proof constraints hold at this c
  double B = 0.0;
  int suggested_m = 0;         // minimal feasible m when infeasible (else 0)
  bool near_identity_regime = true;  // epsilon < 1
};

// Choose c and the schedule for m layers at target deviation eps.
//
// c selection: the layer-ratio constraint requires c <= eps/B and the base
// case requires a_1 = (1-c)^{m-1} <= eps/(2 alpha R).  We take the largest
// admissible c: c = eps/B when eps < B (driving a_1 as low as possible),
// else the c that pins a_1 to the canonical 1/(2m) (both constraints then
// have slack).  `forced_c` overrides the choice for debugging; feasibility
// is always evaluated against the constraints actually satisfied.
Schedule build_schedule(int m, double epsilon, double alpha, double R, double M,
                        std::optional<double> forced_c = std::nullopt);

// Thrown by the full pipeline when the schedule cannot certify the requested
// deviation with the requested layer count.
class InfeasibleScheduleError : public std::runtime_error {
 public:
  InfeasibleScheduleError(const std::string& what, int suggested_m)
      : std::runtime_error(what), suggested_m_(suggested_m) {}
  int suggested_m() const { return suggested_m_; }

 private:
  int suggested_m_;
};

// One nonlinear layer h_i = g_i o g_{i-1}^{-1} (h_1 = g_1) of the split of a
// normalized map.  Evaluation, Jacobian, and inverse are all exact modulo
// the inversion tolerance of the underlying map.
class NonlinearLayer final : public DifferentiableMap {
 public:
  NonlinearLayer(SmoothMapPtr normalized_map, int index, double a_prev,
                 double a_cur, double tol);

  int dim() const override { return map_->dim(); }
  Vec eval(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  bool has_analytic_jacobian() const override {
    return map_->has_analytic_jacobian();
  }
  Vec invert(const Vec& y, double tol) const override;

  int index() const { return index_; }
  double a_prev() const { return a_prev_; }
  double a_cur() const { return a_cur_; }

 private:
  Vec g_eval(double a, const Vec& x) const;     // h(a x)/a
  Vec g_invert(double a, const Vec& y) const;   // h^{-1}(a y)/a

  SmoothMapPtr map_;
  int index_;
  double a_prev_;  // a_{i-1}; unused for index 1
  double a_cur_;   // a_i
  double tol_;
};

// Split a normalized map (h(0) = 0 within 1e-10 R, Dh(0) = I within 1e-8,
// checked here) into schedule.m nonlinear layers.
std::vector<std::shared_ptr<const NonlinearLayer>> split(
    const SmoothMapPtr& map, const Schedule& schedule,
    double tol = kDefaultInvertTol);

enum class LayerKind { Translation, Linear, Nonlinear };

struct StackLayer {
  LayerKind kind;
  std::shared_ptr<const DifferentiableMap> map;
  std::string label;
  std::optional<LipschitzCertificate> certificate;
};

struct LayerStack {
  std::vector<StackLayer> layers;
  Schedule schedule;              // of the nonlinear split
  LinearFactorization linear;     // of Dh(x0)
  Vec x0;                         // input translation is x -> x - x0
  Vec hx0;                        // output translation is x -> x + h(x0)
  double composition_error = 0.0; // max over check samples vs. the original map
  int n_check_samples = 0;
  double max_certified_deviation = 0.0;  // over nonlinear layers
};

struct DecomposeOptions {
  int n_samples = 1000;   // pushforward cloud / composition check samples
  int n_pairs = 400;      // certification pairs per layer
  std::uint64_t seed = 1;
  double tol = kDefaultInvertTol;
  bool certify = true;    // attach per-layer deviation certificates
};

// Full pipeline: translation, nonlinear split of the normalized map, linear
// factors of the anchor Jacobian, output translation.  Throws
// OrientationError (bad anchor) or InfeasibleScheduleError (m_nonlinear too
// small for epsilon).
LayerStack full_decompose(const SmoothMapPtr& map, int m_linear,
                          int m_nonlinear, double epsilon,
                          const DecomposeOptions& opts = {});

// Apply layers 1..upto of the stack (upto < 0 or beyond the end: all).
Vec eval_stack(const LayerStack& stack, const Vec& x, int upto = -1);

}  // namespace nearid
