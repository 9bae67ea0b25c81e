#include "nearid/functional_grad.hpp"

#include "nearid/linalg.hpp"
#include "nearid/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace nearid {

namespace {

// Mean of 1/2 ||out_j - target_j||^2 with pairwise summation.
double half_mse(const std::vector<Vec>& outs, const std::vector<Vec>& targets) {
  std::vector<double> terms(outs.size());
  for (std::size_t j = 0; j < outs.size(); ++j) {
    terms[j] = 0.5 * (outs[j] - targets[j]).squaredNorm();
  }
  return pairwise_mean(terms);
}

// Apply layers [first, last) of `layers` to every point of `pts` in order.
std::vector<Vec> push_through(
    const std::vector<std::shared_ptr<const DifferentiableMap>>& layers,
    int first, int last, std::vector<Vec> pts) {
  for (int l = first; l < last; ++l) {
    for (auto& p : pts) p = layers[l]->eval(p);
  }
  return pts;
}

}  // namespace

Vec SampledFunction::eval(const Vec& x) const {
  if (base.empty()) throw std::invalid_argument("SampledFunction: no base points");
  int best = 0;
  double best_d = (base[0] - x).squaredNorm();
  for (int j = 1; j < size(); ++j) {
    const double d = (base[j] - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
      if (d == 0.0) break;  // exact on-sample hit
    }
  }
  return values[best];
}

CompositionState::CompositionState(
    std::vector<std::shared_ptr<const DifferentiableMap>> layers,
    std::vector<Vec> sample, double norm_floor)
    : layers_(std::move(layers)), sample_(std::move(sample)) {
  if (layers_.empty()) throw std::invalid_argument("CompositionState: no layers");
  if (sample_.empty()) throw std::invalid_argument("CompositionState: empty sample");
  const int d = static_cast<int>(sample_.front().size());
  double scale = 0.0;
  for (const auto& x : sample_) {
    if (x.size() != d) throw DimensionError("CompositionState: ragged sample");
    scale = std::max(scale, x.norm());
  }
  for (const auto& layer : layers_) {
    if (!layer) throw std::invalid_argument("CompositionState: null layer");
    if (layer->dim() != d) throw DimensionError("CompositionState: layer dimension mismatch");
    // Origin-fixing keeps admitted sample points away from zero at every
    // depth (||h(z)|| >= (1 - eps) ||z|| holds only against a fixed point).
    const double drift = layer->eval(Vec::Zero(d)).norm();
    if (drift > 1e-10 * std::max(1.0, scale)) {
      throw std::invalid_argument(
          "CompositionState: layers must fix the origin (drift " +
          std::to_string(drift) + ")");
    }
  }

  z_.resize(layers_.size() + 1);
  z_[0] = sample_;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    z_[l + 1].resize(sample_.size());
    for (std::size_t j = 0; j < sample_.size(); ++j) {
      z_[l + 1][j] = layers_[l]->eval(z_[l][j]);
    }
  }

  norm_floor_ = norm_floor > 0.0 ? norm_floor : 1e-3 * scale;
  for (int j = 0; j < n(); ++j) {
    if (sample_[j].norm() >= norm_floor_) admitted_.push_back(j);
  }
  if (admitted_.empty()) {
    throw std::invalid_argument("CompositionState: norm floor admits no sample points");
  }
}

const std::vector<Vec>& CompositionState::z(int i) const {
  if (i < 0 || i > m()) throw std::out_of_range("CompositionState::z: index");
  return z_[i];
}

void CompositionState::certify(int n_pairs, std::uint64_t seed) {
  layer_eps_.clear();
  certs_.clear();
  for (int l = 0; l < m(); ++l) {
    const Domain dom = Domain::cloud(z_[l]);
    LipschitzCertificate cert = certify_deviation(
        *layers_[l], dom, n_pairs, derive_seed(seed, "state-layer-" + std::to_string(l)));
    layer_eps_.push_back(cert.deviation());
    certs_.push_back(std::move(cert));
  }
}

void CompositionState::set_layer_epsilons(std::vector<double> eps) {
  if (static_cast<int>(eps.size()) != m()) {
    throw std::invalid_argument("set_layer_epsilons: need one value per layer");
  }
  for (double e : eps) {
    if (!(e >= 0.0)) throw std::invalid_argument("set_layer_epsilons: negative epsilon");
  }
  layer_eps_ = std::move(eps);
  certs_.clear();
}

const std::vector<double>& CompositionState::layer_epsilons() const {
  if (layer_eps_.empty()) {
    throw std::logic_error("CompositionState: layers not certified yet");
  }
  return layer_eps_;
}

double CompositionState::epsilon() const {
  const auto& eps = layer_epsilons();
  return *std::max_element(eps.begin(), eps.end());
}

std::vector<Vec> target_values(const CompositionState& state,
                               const DifferentiableMap& target) {
  if (target.dim() != state.dim()) {
    throw DimensionError("target_values: dimension mismatch");
  }
  std::vector<Vec> out(state.n());
  for (int j = 0; j < state.n(); ++j) out[j] = target.eval(state.sample()[j]);
  return out;
}

SampledFunction residual(const CompositionState& state,
                         const std::vector<Vec>& targets) {
  if (static_cast<int>(targets.size()) != state.n()) {
    throw std::invalid_argument("residual: one target per sample point required");
  }
  SampledFunction r;
  r.base = state.sample();
  r.values.resize(state.n());
  for (int j = 0; j < state.n(); ++j) {
    r.values[j] = state.outputs()[j] - targets[j];
  }
  return r;
}

double quadratic_loss(const CompositionState& state,
                      const std::vector<Vec>& targets) {
  if (static_cast<int>(targets.size()) != state.n()) {
    throw std::invalid_argument("quadratic_loss: one target per sample point required");
  }
  return half_mse(state.outputs(), targets);
}

double sample_induced_norm(const CompositionState& state,
                           const SampledFunction& f) {
  if (f.size() != state.n()) {
    throw std::invalid_argument("sample_induced_norm: size mismatch with sample");
  }
  double norm = 0.0;
  for (int j : state.admitted()) {
    const double denom = f.base[j].norm();
    if (denom <= 0.0) continue;  // cannot happen for admitted inputs
    norm = std::max(norm, f.values[j].norm() / denom);
  }
  return norm;
}

namespace {

// w <- [Dh_m ... Dh_{i+1}]^{-1} w via one LU solve per downstream layer,
// Jacobians taken at the stored chain points.
Vec solve_downstream(const CompositionState& state, int layer, int j, Vec w) {
  for (int l = state.m(); l > layer; --l) {
    const Mat J = state.layers()[l - 1]->jacobian(state.z(l - 1)[j]);
    w = J.partialPivLu().solve(w);
    if (!w.allFinite()) {
      throw RegimeError("downstream Jacobian solve produced non-finite values");
    }
  }
  return w;
}

void check_layer_index(const CompositionState& state, int layer) {
  if (layer < 1 || layer > state.m()) {
    throw std::out_of_range("layer index must be in [1, m]");
  }
}

}  // namespace

DeltaResult build_delta(const CompositionState& state, int layer,
                        const std::vector<Vec>& targets) {
  check_layer_index(state, layer);
  if (static_cast<int>(targets.size()) != state.n()) {
    throw std::invalid_argument("build_delta: one target per sample point required");
  }
  if (state.has_epsilon() && state.epsilon() >= 1.0) {
    throw RegimeError("build_delta: certified deviation >= 1, downstream Jacobians "
                      "are no longer certified invertible");
  }

  DeltaResult res;
  res.delta.base = state.z(layer - 1);
  res.delta.values.resize(state.n(), Vec::Zero(state.dim()));

  std::vector<Vec> raw(state.n());
  double max_raw = 0.0;
  for (int j = 0; j < state.n(); ++j) {
    Vec w = targets[j] - state.outputs()[j];  // h*(x_j) - h(x_j)
    raw[j] = solve_downstream(state, layer, j, std::move(w));
    max_raw = std::max(max_raw, raw[j].norm());
  }
  if (max_raw == 0.0) {
    res.degenerate = true;  // residual vanished: h already matches h* on the sample
    return res;
  }

  SampledFunction unscaled{res.delta.base, raw};
  const double norm = sample_induced_norm(state, unscaled);
  if (norm <= std::numeric_limits<double>::min()) {
    res.degenerate = true;  // residual lives entirely below the norm floor
    return res;
  }
  res.c = 1.0 / norm;
  for (int j = 0; j < state.n(); ++j) res.delta.values[j] = res.c * raw[j];
  return res;
}

DirectionalDerivative directional_derivative(const CompositionState& state,
                                             int layer, const DeltaResult& delta,
                                             double t,
                                             const std::vector<Vec>& targets) {
  check_layer_index(state, layer);
  if (!(t > 0.0)) throw std::invalid_argument("directional_derivative: t must be > 0");
  if (static_cast<int>(targets.size()) != state.n()) {
    throw std::invalid_argument("directional_derivative: one target per sample point");
  }

  // Perturb layer `layer`'s outputs by t * Delta(z_{layer-1,j}) and push the
  // result through the remaining layers.
  std::vector<Vec> pts(state.n());
  for (int j = 0; j < state.n(); ++j) {
    const Vec dv = delta.degenerate ? Vec::Zero(state.dim())
                                    : delta.delta.eval(state.z(layer - 1)[j]);
    pts[j] = state.z(layer)[j] + t * dv;
  }
  pts = push_through(state.layers(), layer, state.m(), std::move(pts));

  DirectionalDerivative out;
  const double q0 = half_mse(state.outputs(), targets);
  const double qt = half_mse(pts, targets);
  out.fd_value = (qt - q0) / t;

  std::vector<double> sq(state.n());
  for (int j = 0; j < state.n(); ++j) {
    sq[j] = (state.outputs()[j] - targets[j]).squaredNorm();
  }
  out.exact_value = -delta.c * pairwise_mean(sq);
  return out;
}

DescentBoundReport verify_descent_bound(const CompositionState& state,
                                        const std::vector<Vec>& targets,
                                        double slack, double fd_t) {
  if (!state.has_epsilon()) {
    throw std::logic_error("verify_descent_bound: certify the layers first");
  }
  DescentBoundReport rep;
  rep.epsilon = state.epsilon();
  if (rep.epsilon >= 1.0) {
    throw RegimeError("verify_descent_bound: certified deviation >= 1");
  }
  rep.prefactor = std::pow(1.0 - rep.epsilon, state.m() - 1);
  rep.q_loss = quadratic_loss(state, targets);
  rep.q_star = 0.0;  // targets are realizable by construction
  rep.residual_norm = sample_induced_norm(state, residual(state, targets));
  rep.norm_floor = state.norm_floor();
  rep.n_admitted = static_cast<int>(state.admitted().size());

  rep.all_hold = true;
  for (int i = 1; i <= state.m(); ++i) {
    LayerDescentRecord rec;
    rec.layer = i;
    DeltaResult delta = build_delta(state, i, targets);
    rec.c = delta.c;
    rec.degenerate = delta.degenerate;
    const DirectionalDerivative dd =
        directional_derivative(state, i, delta, fd_t, targets);
    rec.exact_value = dd.exact_value;
    rec.fd_value = dd.fd_value;
    if (rep.residual_norm > 0.0) {
      rec.bound_rhs = -rep.prefactor * (rep.q_loss - rep.q_star) / rep.residual_norm;
      rec.margin = rec.bound_rhs * (1.0 - slack) - rec.exact_value;
      rec.holds = rec.margin >= 0.0;
    } else {
      // h agrees with h* on the admitted sample: both sides vanish.
      rec.bound_rhs = 0.0;
      rec.margin = -rec.exact_value;
      rec.holds = rec.exact_value <= 1e-12;
    }
    rep.all_hold = rep.all_hold && rec.holds;
    rep.layers.push_back(rec);
  }
  return rep;
}

DescentDemoResult functional_descent_demo(const CompositionState& state,
                                          int layer,
                                          const std::vector<Vec>& targets,
                                          double step, int n_steps) {
  check_layer_index(state, layer);
  if (!(step > 0.0)) throw std::invalid_argument("functional_descent_demo: step must be > 0");
  if (n_steps < 0) throw std::invalid_argument("functional_descent_demo: n_steps < 0");
  if (static_cast<int>(targets.size()) != state.n()) {
    throw std::invalid_argument("functional_descent_demo: one target per sample point");
  }

  const int i = layer;
  const int tail = state.m() - i;  // layers downstream of i
  const std::vector<Vec>& inputs = state.z(i - 1);  // frozen input cloud
  std::vector<Vec> vals = state.z(i);               // layer i's movable values

  DescentDemoResult out;
  out.final_step = step;

  // Propagate current values through the tail, keeping the chain points
  // needed for Jacobian solves: chain[k][j], k = 0..tail.
  std::vector<std::vector<Vec>> chain(tail + 1);
  auto propagate = [&](const std::vector<Vec>& v) {
    chain[0] = v;
    for (int k = 1; k <= tail; ++k) {
      chain[k].resize(state.n());
      for (int j = 0; j < state.n(); ++j) {
        chain[k][j] = state.layers()[i + k - 1]->eval(chain[k - 1][j]);
      }
    }
    return half_mse(chain[tail], targets);
  };

  double loss = propagate(vals);
  out.losses.push_back(loss);

  double s = step;
  for (int it = 0; it < n_steps; ++it) {
    // Rebuild Delta at the current iterate.
    std::vector<Vec> raw(state.n());
    double max_raw = 0.0;
    for (int j = 0; j < state.n(); ++j) {
      Vec w = targets[j] - chain[tail][j];
      for (int k = tail; k >= 1; --k) {
        const Mat J = state.layers()[i + k - 1]->jacobian(chain[k - 1][j]);
        w = J.partialPivLu().solve(w);
        if (!w.allFinite()) {
          throw RegimeError("descent demo: downstream Jacobian solve failed");
        }
      }
      raw[j] = std::move(w);
      max_raw = std::max(max_raw, raw[j].norm());
    }
    double norm = 0.0;
    for (int j : state.admitted()) {
      const double denom = inputs[j].norm();
      if (denom > 0.0) norm = std::max(norm, raw[j].norm() / denom);
    }
    if (max_raw == 0.0 || norm <= std::numeric_limits<double>::min()) {
      // Degenerate direction: the residual is gone, the loss stays put.
      for (int rest = it; rest < n_steps; ++rest) out.losses.push_back(loss);
      break;
    }
    const double c = 1.0 / norm;

    // Backtracking line search along Delta.
    bool accepted = false;
    while (s > 1e-15) {
      std::vector<Vec> cand(state.n());
      for (int j = 0; j < state.n(); ++j) cand[j] = vals[j] + (s * c) * raw[j];
      std::vector<std::vector<Vec>> saved = chain;
      const double cand_loss = propagate(cand);
      if (cand_loss < loss) {
        vals = std::move(cand);
        loss = cand_loss;
        accepted = true;
        break;
      }
      chain = std::move(saved);  // restore the chain of the current iterate
      s *= 0.5;
      ++out.backtracks;
    }
    if (!accepted) {
      for (int rest = it; rest < n_steps; ++rest) out.losses.push_back(loss);
      break;
    }
    out.losses.push_back(loss);
  }

  out.final_step = s;
  out.final_layer.base = inputs;
  out.final_layer.values = std::move(vals);
  return out;
}

}  // namespace nearid
