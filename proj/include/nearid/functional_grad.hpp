// Functional gradients of the quadratic criterion
//   Q(h) = (1/n) sum_j 1/2 ||h(x_j) - y_j||^2
// over compositions h = h_m o ... o h_1 of near-identity layers, on a fixed
// finite sample.
//
// The central construction perturbs a single layer i by the sampled vector
// field
//   Delta(z_{i-1,j}) = c [Dh_m(z_{m-1,j}) ... Dh_{i+1}(z_{i,j})]^{-1}
//                        (h*(x_j) - h(x_j)),
// with c > 0 normalizing the sample-induced norm of Delta to 1.  Its exact
// directional derivative is -c (1/n) sum_j ||h(x_j) - h*(x_j)||^2, which is
// bounded above by -(1-eps)^{m-1} (Q(h) - Q(h*)) / ||h - h*|| whenever every
// layer deviates from the identity by at most eps < 1.  So no composition of
// certified near-identity layers can be a spurious functional critical
// point: zero functional gradient forces Q(h) = Q(h*).
//
// Function norms are instantiated on the sample as max_j ||f(p_j)|| / ||p_j||
// over points with ||x_j|| >= a floor (all induced norms share one admitted
// index set, chosen on the inputs; layers must fix the origin, so admitted
// points keep norms bounded away from zero through the whole stack).
#pragma once

#include "nearid/lipschitz_cert.hpp"
#include "nearid/map.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nearid {

// Raised when an operation requires the near-identity regime (max layer
// deviation < 1) and the state is outside it.
class RegimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A function known by its values at finitely many base points.  Off-sample
// evaluation uses the nearest base point (the constructions below only ever
// rely on on-sample values; interpolation is for plotting and probing).
struct SampledFunction {
  std::vector<Vec> base;
  std::vector<Vec> values;

  Vec eval(const Vec& x) const;  // exact match first, else nearest neighbor
  int size() const { return static_cast<int>(base.size()); }
};

// A composition h_m o ... o h_1 frozen on a finite sample, with per-sample
// intermediate points z_{i,j} and per-layer deviation certificates.
// Layers must fix the origin (checked at construction): this is what keeps
// the admitted sample points away from zero at every depth.
class CompositionState {
 public:
  CompositionState(std::vector<std::shared_ptr<const DifferentiableMap>> layers,
                   std::vector<Vec> sample, double norm_floor = -1.0);

  int m() const { return static_cast<int>(layers_.size()); }
  int n() const { return static_cast<int>(sample_.size()); }
  int dim() const { return static_cast<int>(sample_.front().size()); }

  const std::vector<std::shared_ptr<const DifferentiableMap>>& layers() const {
    return layers_;
  }
  // z_i for i = 0..m (z_0 is the sample itself).
  const std::vector<Vec>& z(int i) const;
  const std::vector<Vec>& sample() const { return sample_; }
  const std::vector<Vec>& outputs() const { return z_.back(); }

  // Certify every layer's deviation on its pushforward cloud; the state's
  // epsilon becomes the largest certificate.
  void certify(int n_pairs, std::uint64_t seed);
  // Supply externally certified per-layer deviations instead (e.g. analytic
  // bounds for residual layers).
  void set_layer_epsilons(std::vector<double> eps);

  bool has_epsilon() const { return !layer_eps_.empty(); }
  const std::vector<double>& layer_epsilons() const;
  const std::vector<LipschitzCertificate>& certificates() const { return certs_; }
  double epsilon() const;  // max over layers; throws when uncertified

  double norm_floor() const { return norm_floor_; }
  // Indices j with ||x_j|| >= norm_floor; shared by every induced norm.
  const std::vector<int>& admitted() const { return admitted_; }

 private:
  std::vector<std::shared_ptr<const DifferentiableMap>> layers_;
  std::vector<Vec> sample_;
  std::vector<std::vector<Vec>> z_;  // z_[i][j], i = 0..m
  std::vector<double> layer_eps_;
  std::vector<LipschitzCertificate> certs_;
  double norm_floor_;
  std::vector<int> admitted_;
};

// Labels h*(x_j) for a target map.
std::vector<Vec> target_values(const CompositionState& state,
                               const DifferentiableMap& target);

// r_j = h(x_j) - h*(x_j), based at the sample points x_j.
SampledFunction residual(const CompositionState& state,
                         const std::vector<Vec>& targets);

// Q(h) on the sample: (1/n) sum_j 1/2 ||h(x_j) - y*_j||^2.
double quadratic_loss(const CompositionState& state,
                      const std::vector<Vec>& targets);

// Sample-induced norm max ||f(p_j)|| / ||p_j|| over the admitted set.
double sample_induced_norm(const CompositionState& state,
                           const SampledFunction& f);

struct DeltaResult {
  SampledFunction delta;   // based at z_{i-1}, values c * raw
  double c = 0.0;          // normalizing constant (0 when degenerate)
  bool degenerate = false; // residual vanished on the whole sample
};

// The descent direction at layer `layer` (1-based).  Throws RegimeError when
// the certified epsilon is >= 1 (downstream Jacobians no longer certified
// invertible).
DeltaResult build_delta(const CompositionState& state, int layer,
                        const std::vector<Vec>& targets);

struct DirectionalDerivative {
  double fd_value = 0.0;     // (Q(layer + t Delta) - Q(h)) / t
  double exact_value = 0.0;  // -c (1/n) sum_j ||r_j||^2, from the closed form
};

// Both the finite-difference quotient at step t and the closed-form value.
DirectionalDerivative directional_derivative(const CompositionState& state,
                                             int layer, const DeltaResult& delta,
                                             double t,
                                             const std::vector<Vec>& targets);

struct LayerDescentRecord {
  int layer = 0;
  double exact_value = 0.0;
  double fd_value = 0.0;
  double bound_rhs = 0.0;  // -(1-eps)^{m-1} (Q - Q*) / ||h - h*||
  double margin = 0.0;     // bound_rhs*(1-slack) - exact_value, >= 0 when held
  double c = 0.0;
  bool degenerate = false;
  bool holds = false;
};

struct DescentBoundReport {
  std::vector<LayerDescentRecord> layers;
  double epsilon = 0.0;
  double prefactor = 0.0;       // (1-eps)^{m-1}
  double q_loss = 0.0;          // Q(h)
  double q_star = 0.0;          // Q(h*) = 0 on realizable samples
  double residual_norm = 0.0;   // ||h - h*|| over the admitted sample
  double norm_floor = 0.0;
  int n_admitted = 0;
  bool all_hold = false;
};

// Evaluate the gradient lower bound at every layer.  slack relaxes the
// comparison multiplicatively; fd_t is the step for the reported
// finite-difference cross-check.
DescentBoundReport verify_descent_bound(const CompositionState& state,
                                        const std::vector<Vec>& targets,
                                        double slack = 1e-6,
                                        double fd_t = 1e-4);

struct DescentDemoResult {
  std::vector<double> losses;  // on-sample loss, entry 0 initial
  int backtracks = 0;
  double final_step = 0.0;
  SampledFunction final_layer;  // layer i's values at its frozen input cloud
};

// Frozen-prefix functional descent on layer `layer`: everything else fixed,
// the layer's values at its (fixed) input points move along the rebuilt
// Delta each step, with step-halving backtracking on loss increase.
DescentDemoResult functional_descent_demo(const CompositionState& state,
                                          int layer,
                                          const std::vector<Vec>& targets,
                                          double step, int n_steps);

}  // namespace nearid
