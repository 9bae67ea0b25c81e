#include "nearid/cli.hpp"

#include "nearid/csv.hpp"
#include "nearid/decomposition.hpp"
#include "nearid/functional_grad.hpp"
#include "nearid/linear_factor.hpp"
#include "nearid/map_spec.hpp"
#include "nearid/parallel.hpp"
#include "nearid/resnet.hpp"
#include "nearid/rng.hpp"
#include "nearid/svg_plot.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace nearid {

namespace {

namespace fs = std::filesystem;

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct RunContext {
  Json config;
  std::string out_dir;
  std::uint64_t seed = 1;
  std::string hash;  // hex fingerprint of the resolved config

  std::string path(const std::string& name) const {
    return (fs::path(out_dir) / name).string();
  }
  void write_json(const std::string& name, Json j) const {
    j["config_hash"] = hash;
    write_text_file(path(name), j.dump(2) + "\n");
    std::cout << "wrote " << name << "\n";
  }
  void write_csv(const std::string& name, const std::string& body) const {
    write_text_file(path(name), "# config_hash=" + hash + "\n" + body);
    std::cout << "wrote " << name << "\n";
  }
  void write_svg(const std::string& name, const std::string& body) const {
    write_text_file(path(name), body + "<!-- config_hash=" + hash + " -->\n");
    std::cout << "wrote " << name << "\n";
  }
};

RunContext make_context(const std::string& subcommand,
                        const std::string& config_path,
                        const std::string& out_dir,
                        std::optional<std::uint64_t> seed_flag) {
  RunContext ctx;
  ctx.config = Json::parse(read_text_file(config_path));
  if (!ctx.config.is_object()) {
    throw std::runtime_error("config must be a JSON object");
  }
  ctx.out_dir = out_dir;
  ctx.seed = seed_flag ? *seed_flag : ctx.config.value("seed", std::uint64_t{1});
  fs::create_directories(out_dir);

  // The resolved configuration is what determinism is pinned to: subcommand,
  // effective seed, and the full config body (thread count deliberately
  // excluded — results must not depend on it).
  Json resolved;
  resolved["subcommand"] = subcommand;
  resolved["seed"] = ctx.seed;
  resolved["config"] = ctx.config;
  ctx.hash = hash_hex(fnv1a64(resolved.dump()));
  resolved["config_hash"] = ctx.hash;
  write_text_file(ctx.path("resolved_config.json"), resolved.dump(2) + "\n");
  return ctx;
}

Json certificate_json(const LipschitzCertificate& cert) {
  return Json{{"pair_lower_bound", cert.pair_lower_bound},
              {"jac_grid_estimate", cert.jac_grid_estimate},
              {"deviation", cert.deviation()},
              {"analytic_jacobian", cert.analytic_jacobian},
              {"n_pairs", cert.n_pairs},
              {"n_grid", cert.n_grid},
              {"grid_gap_slack", cert.grid_gap_slack},
              {"domain", cert.domain_kind}};
}

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Translation: return "translation";
    case LayerKind::Linear: return "linear";
    case LayerKind::Nonlinear: return "nonlinear";
  }
  return "?";
}

Json schedule_json(const Schedule& s) {
  return Json{{"m", s.m},
              {"epsilon", s.epsilon},
              {"c", s.c},
              {"a", s.a},
              {"feasible", s.feasible},
              {"B", s.B},
              {"near_identity_regime", s.near_identity_regime}};
}

DecomposeOptions decompose_options(const Json& cfg, std::uint64_t seed) {
  DecomposeOptions opts;
  opts.n_samples = cfg.value("n_samples", 1000);
  opts.n_pairs = cfg.value("n_pairs", 400);
  opts.seed = seed;
  return opts;
}

Json stack_manifest(const LayerStack& stack, const SmoothMap& map) {
  Json layers = Json::array();
  int idx = 1;
  for (const auto& sl : stack.layers) {
    Json lj{{"index", idx++}, {"kind", kind_name(sl.kind)}, {"label", sl.label}};
    if (sl.certificate) lj["certificate"] = certificate_json(*sl.certificate);
    layers.push_back(std::move(lj));
  }
  Json m;
  m["map"] = map_to_spec(map);
  m["schedule"] = schedule_json(stack.schedule);
  m["linear"] = Json{{"n_factors", stack.linear.factors.size()},
                     {"gamma", stack.linear.gamma},
                     {"max_factor_norm", stack.linear.max_factor_norm},
                     {"reconstruction_error", stack.linear.reconstruction_error}};
  m["layers"] = std::move(layers);
  m["composition_error"] = stack.composition_error;
  m["n_check_samples"] = stack.n_check_samples;
  m["max_certified_deviation"] = stack.max_certified_deviation;
  m["constants_estimated"] = map.constants_estimated();
  return m;
}

// ----------------------------------------------------------------- decompose

int cmd_decompose(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  const SmoothMapPtr map = map_from_spec(cfg.at("map"));
  if (map->constants_estimated()) {
    std::cerr << "warning: map constants are sampled estimates, not certified"
              << " bounds; the schedule inherits that status\n";
  }
  const int m_linear = cfg.value("m_linear", 4);
  const int m_nonlinear = cfg.value("m_nonlinear", 16);
  const DecomposeOptions opts = decompose_options(cfg, ctx.seed);

  const auto normalized = normalize(map);
  const double B =
      compute_B(normalized->alpha(), normalized->R(), normalized->M());
  const double epsilon = cfg.contains("epsilon")
                             ? cfg.at("epsilon").get<double>()
                             : feasible_epsilon(B, m_nonlinear);

  const LayerStack stack =
      full_decompose(map, m_linear, m_nonlinear, epsilon, opts);
  ctx.write_json("stack_manifest.json", stack_manifest(stack, *map));
  std::cout << "m=" << m_nonlinear << " epsilon=" << format_double(epsilon)
            << " max_certified_deviation="
            << format_double(stack.max_certified_deviation)
            << " composition_error=" << format_double(stack.composition_error)
            << "\n";

  if (cfg.contains("m_sweep")) {
    std::string csv = csv_row({"m", "epsilon_target", "max_certified", "pass"});
    for (int m : cfg.at("m_sweep").get<std::vector<int>>()) {
      const double eps_m = feasible_epsilon(B, m);
      const LayerStack sweep_stack =
          full_decompose(map, m_linear, m, eps_m, opts);
      const bool pass = sweep_stack.max_certified_deviation <= eps_m;
      csv += csv_row({std::to_string(m), format_double(eps_m),
                      format_double(sweep_stack.max_certified_deviation),
                      pass ? "1" : "0"});
    }
    ctx.write_csv("decay.csv", csv);
  }
  return kExitOk;
}

// ------------------------------------------------------------------- certify

int cmd_certify(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  const int n_pairs = cfg.value("n_pairs", 400);
  std::string csv = csv_row(
      {"layer", "pair_lower_bound", "jac_grid_estimate", "epsilon_target", "pass"});

  if (cfg.contains("stack")) {
    const Json& sc = cfg.at("stack");
    const SmoothMapPtr map = map_from_spec(sc.at("map"));
    const int m_linear = sc.value("m_linear", 4);
    const int m_nonlinear = sc.value("m_nonlinear", 16);
    DecomposeOptions opts = decompose_options(sc, ctx.seed);
    opts.n_pairs = n_pairs;
    const auto normalized = normalize(map);
    const double B =
        compute_B(normalized->alpha(), normalized->R(), normalized->M());
    const double epsilon = sc.contains("epsilon")
                               ? sc.at("epsilon").get<double>()
                               : feasible_epsilon(B, m_nonlinear);
    const LayerStack stack =
        full_decompose(map, m_linear, m_nonlinear, epsilon, opts);
    int idx = 1;
    for (const auto& sl : stack.layers) {
      if (sl.certificate) {
        // Only nonlinear layers are held to the schedule's epsilon;
        // translations and linear factors get an unconstrained target.
        const double target = sl.kind == LayerKind::Nonlinear
                                  ? epsilon
                                  : std::numeric_limits<double>::infinity();
        const bool pass = sl.certificate->deviation() <= target;
        csv += csv_row({std::to_string(idx),
                        format_double(sl.certificate->pair_lower_bound),
                        format_double(sl.certificate->jac_grid_estimate),
                        format_double(target), pass ? "1" : "0"});
      }
      ++idx;
    }
  } else {
    const SmoothMapPtr map = map_from_spec(cfg.at("map"));
    const double target = cfg.value(
        "epsilon_target", std::numeric_limits<double>::infinity());
    const LipschitzCertificate cert =
        certify_deviation(*map, Domain::ball(map->dim(), map->R()), n_pairs,
                          derive_seed(ctx.seed, "certify-cli"));
    const bool pass = cert.deviation() <= target;
    csv += csv_row({"0", format_double(cert.pair_lower_bound),
                    format_double(cert.jac_grid_estimate), format_double(target),
                    pass ? "1" : "0"});
  }
  ctx.write_csv("certificates.csv", csv);
  return kExitOk;
}

// -------------------------------------------------------------------- factor

Mat matrix_from_json(const Json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw std::runtime_error("factor: empty matrix");
  Mat D(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) {
      throw std::runtime_error("factor: ragged matrix rows");
    }
    for (std::size_t c = 0; c < rows[r].size(); ++c) D(r, c) = rows[r][c];
  }
  return D;
}

int cmd_factor(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  const Mat D = matrix_from_json(cfg.at("D"));
  const int m = cfg.value("m", 16);
  const LinearFactorization f = factor_near_identity(D, m);

  Json rep;
  rep["d"] = D.rows();
  rep["m"] = m;
  rep["gamma"] = f.gamma;
  rep["max_factor_norm"] = f.max_factor_norm;
  rep["reconstruction_error"] = f.reconstruction_error;
  std::vector<double> norms;
  norms.reserve(f.factors.size());
  for (const auto& A : f.factors) norms.push_back(spectral_norm(A));
  rep["factor_norms"] = norms;
  ctx.write_json("factorization.json", rep);

  if (cfg.contains("m_sweep")) {
    std::string csv = csv_row(
        {"m", "max_factor_norm", "gamma_over_m", "reconstruction_error"});
    for (int ms : cfg.at("m_sweep").get<std::vector<int>>()) {
      const LinearFactorization fs = factor_near_identity(D, ms);
      csv += csv_row({std::to_string(ms), format_double(fs.max_factor_norm),
                      format_double(fs.gamma / ms),
                      format_double(fs.reconstruction_error)});
    }
    ctx.write_csv("factor_sweep.csv", csv);
  }
  return kExitOk;
}

// -------------------------------------------------------------------- saddle

int cmd_saddle(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  const Json& ts = cfg.at("theta_star");
  const int m = ts.value("m", 2);
  const int d = ts.value("d", 2);
  const int k = ts.value("k", 4);
  const double max_dev = ts.value("max_deviation", 0.2);
  const ResNetParams theta_star = random_near_identity_params(
      m, d, k, max_dev, derive_seed(ctx.seed, "theta_star"));

  const int n = cfg.value("n", 200);
  const double R = cfg.value("R", 1.0);
  const Dataset data = make_saddle_instance(theta_star, n, R, ctx.seed);

  const ResNetParams zero = ResNetParams::zeros(m, d, k);
  const double loss_zero = loss(zero, data);
  const double loss_star = loss(theta_star, data);
  const ResNetParams g = grad(zero, data);
  const ResNetParams g_fd = fd_grad(zero, data, cfg.value("fd_step", 1e-5));

  const double lr = cfg.value("lr", 0.05);
  const int steps = cfg.value("gd_steps", 1000);
  const GdTrajectory traj = train_gd(zero, data, lr, steps);
  const bool theta_unchanged = traj.theta.max_abs() == 0.0;
  const bool stuck = g.max_abs() == 0.0 && loss_zero > 0.0 && theta_unchanged;

  Json rep;
  rep["depth"] = m;
  rep["d"] = d;
  rep["k"] = k;
  rep["n"] = n;
  rep["R"] = R;
  std::vector<double> bounds;
  for (int i = 0; i < m; ++i) {
    bounds.push_back(layer_deviation_bound(theta_star.A[i], theta_star.B[i]));
  }
  rep["theta_star_layer_bounds"] = bounds;
  rep["loss_at_zero"] = loss_zero;
  rep["loss_at_theta_star"] = loss_star;
  rep["grad_max_abs_at_zero"] = g.max_abs();
  rep["fd_grad_max_abs_at_zero"] = g_fd.max_abs();
  rep["gd_steps"] = steps;
  rep["gd_lr"] = lr;
  rep["theta_unchanged_after_gd"] = theta_unchanged;
  rep["diverged"] = traj.diverged;
  rep["verdict"] = stuck ? "stuck" : "not-stuck";
  ctx.write_json("saddle_report.json", rep);

  std::string csv = csv_row({"step", "loss", "grad_norm"});
  for (std::size_t i = 0; i < traj.loss.size(); ++i) {
    csv += csv_row({std::to_string(i), format_double(traj.loss[i]),
                    format_double(traj.grad_norm[i])});
  }
  ctx.write_csv("trajectory.csv", csv);
  ctx.write_csv("dataset.csv", dataset_to_csv(data));
  std::cout << "verdict=" << (stuck ? "stuck" : "not-stuck")
            << " loss_at_zero=" << format_double(loss_zero)
            << " grad_max_abs=" << format_double(g.max_abs()) << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- frechet

int cmd_frechet(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  const Json& st = cfg.at("state");
  const std::string kind = st.value("kind", "resnet");
  const int n_samples = cfg.value("n_samples", 200);

  std::vector<std::shared_ptr<const DifferentiableMap>> layers;
  std::vector<Vec> sample;
  std::vector<Vec> targets;

  if (kind == "resnet") {
    const int m = st.value("m", 3);
    const int d = st.value("d", 2);
    const int k = st.value("k", 4);
    const double max_dev = st.value("max_deviation", 0.25);
    const double R = cfg.value("R", 1.0);
    const ResNetParams theta = random_near_identity_params(
        m, d, k, max_dev, derive_seed(ctx.seed, "state-params"));
    for (int i = 0; i < m; ++i) {
      layers.push_back(std::make_shared<ResidualLayerMap>(theta.A[i], theta.B[i]));
    }
    const double target_dev =
        cfg.contains("target") ? cfg.at("target").value("max_deviation", max_dev)
                               : max_dev;
    const ResNetParams theta_target = random_near_identity_params(
        m, d, k, target_dev, derive_seed(ctx.seed, "target-params"));
    Rng rng(derive_seed(ctx.seed, "frechet-sample"));
    sample.reserve(n_samples);
    targets.reserve(n_samples);
    for (int j = 0; j < n_samples; ++j) {
      sample.push_back(rng.in_ball(d, R));
      targets.push_back(forward(theta_target, sample.back()));
    }
  } else if (kind == "stack") {
    const SmoothMapPtr map = map_from_spec(st.at("map"));
    const int m_linear = st.value("m_linear", 4);
    const int m_nonlinear = st.value("m_nonlinear", 8);
    DecomposeOptions opts = decompose_options(st, ctx.seed);
    opts.certify = false;  // the CompositionState certifies its own layers
    const auto normalized = normalize(map);
    const double B =
        compute_B(normalized->alpha(), normalized->R(), normalized->M());
    const double epsilon = st.contains("epsilon")
                               ? st.at("epsilon").get<double>()
                               : feasible_epsilon(B, m_nonlinear);
    const LayerStack stack =
        full_decompose(map, m_linear, m_nonlinear, epsilon, opts);
    for (const auto& sl : stack.layers) layers.push_back(sl.map);
    const SmoothMapPtr target_map = map_from_spec(cfg.at("target_map"));
    Rng rng(derive_seed(ctx.seed, "frechet-sample"));
    sample.reserve(n_samples);
    targets.reserve(n_samples);
    for (int j = 0; j < n_samples; ++j) {
      sample.push_back(rng.in_ball(map->dim(), map->R()));
      targets.push_back(target_map->eval(sample.back()));
    }
  } else {
    throw std::runtime_error("frechet: unknown state kind '" + kind + "'");
  }

  CompositionState state(layers, sample, cfg.value("norm_floor", -1.0));
  state.certify(cfg.value("n_pairs", 400), derive_seed(ctx.seed, "state-cert"));
  const DescentBoundReport rep = verify_descent_bound(
      state, targets, cfg.value("slack", 1e-6), cfg.value("fd_t", 1e-4));

  Json out;
  Json per_layer = Json::array();
  for (const auto& rec : rep.layers) {
    per_layer.push_back(Json{{"i", rec.layer},
                             {"exact_value", rec.exact_value},
                             {"fd_value", rec.fd_value},
                             {"bound_rhs", rec.bound_rhs},
                             {"margin", rec.margin},
                             {"c", rec.c},
                             {"degenerate", rec.degenerate},
                             {"holds", rec.holds}});
  }
  out["per_layer"] = std::move(per_layer);
  out["epsilon"] = rep.epsilon;
  out["m"] = state.m();
  out["norm_floor"] = rep.norm_floor;
  out["prefactor"] = rep.prefactor;
  out["q_loss"] = rep.q_loss;
  out["q_star"] = rep.q_star;
  out["residual_norm"] = rep.residual_norm;
  out["n_samples"] = state.n();
  out["n_admitted"] = rep.n_admitted;
  out["layer_epsilons"] = state.layer_epsilons();
  out["all_hold"] = rep.all_hold;
  ctx.write_json("frechet_report.json", out);
  std::cout << "epsilon=" << format_double(rep.epsilon)
            << " all_hold=" << (rep.all_hold ? "1" : "0") << "\n";

  if (cfg.contains("descent")) {
    const Json& dc = cfg.at("descent");
    const DescentDemoResult demo = functional_descent_demo(
        state, dc.value("layer", 1), targets, dc.value("step", 0.5),
        dc.value("n_steps", 50));
    std::string csv = csv_row({"step", "loss"});
    for (std::size_t i = 0; i < demo.losses.size(); ++i) {
      csv += csv_row({std::to_string(i), format_double(demo.losses[i])});
    }
    ctx.write_csv("descent.csv", csv);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------- plot

int cmd_plot(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  const std::string input = cfg.at("input").get<std::string>();
  // Inputs usually live next to the outputs of an earlier run: prefer the
  // --out directory, fall back to the path as given.
  std::string in_path = ctx.path(input);
  if (!fs::exists(in_path)) in_path = input;
  const CsvTable table = parse_csv(read_text_file(in_path));
  if (table.rows.empty()) throw std::runtime_error("plot: CSV has no data rows");

  const std::string x_name =
      cfg.contains("x") ? cfg.at("x").get<std::string>() : table.header.at(0);
  const int xc = table.column(x_name);
  if (xc < 0) throw std::runtime_error("plot: no column '" + x_name + "'");

  std::vector<std::string> y_names;
  if (cfg.contains("y")) {
    if (cfg.at("y").is_string()) {
      y_names.push_back(cfg.at("y").get<std::string>());
    } else {
      y_names = cfg.at("y").get<std::vector<std::string>>();
    }
  } else {
    for (const auto& h : table.header) {
      if (h != x_name) y_names.push_back(h);
    }
  }
  if (y_names.empty()) throw std::runtime_error("plot: no y columns");

  std::vector<PlotSeries> series;
  for (const auto& name : y_names) {
    const int yc = table.column(name);
    if (yc < 0) throw std::runtime_error("plot: no column '" + name + "'");
    PlotSeries s;
    s.label = name;
    for (const auto& row : table.rows) {
      s.x.push_back(row[static_cast<std::size_t>(xc)]);
      s.y.push_back(row[static_cast<std::size_t>(yc)]);
    }
    series.push_back(std::move(s));
  }

  PlotOptions opt;
  opt.title = cfg.value("title", std::string());
  opt.x_label = cfg.value("x_label", x_name);
  opt.y_label = cfg.value("y_label", std::string());
  opt.log_x = cfg.value("log_x", false);
  opt.log_y = cfg.value("log_y", false);
  opt.width = cfg.value("width", 720);
  opt.height = cfg.value("height", 480);

  ctx.write_svg(cfg.value("output", std::string("plot.svg")),
                render_line_plot(series, opt));
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"near-identity decomposition and landscape toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed_value = 0;
  int threads = 1;
  app.add_option("--config", config_path, "JSON experiment configuration")
      ->required();
  app.add_option("--out", out_dir, "output directory (created if missing)");
  auto* seed_opt =
      app.add_option("--seed", seed_value, "seed override (else config/default)");
  app.add_option("--threads", threads, "worker threads for sample loops");

  const char* names[] = {"decompose", "certify", "factor",
                         "saddle",    "frechet", "plot"};
  const char* descs[] = {
      "decompose a map into near-identity layers (+ optional decay sweep)",
      "certify Lipschitz deviations of a map or stack layers",
      "factor a positive-determinant matrix into near-identity factors",
      "build a saddle dataset and run gradient descent from zero",
      "verify the functional gradient lower bound on a composition",
      "render CSV columns as an SVG line plot"};
  for (int i = 0; i < 6; ++i) {
    app.add_subcommand(names[i], descs[i])->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitFailure;
  }

  try {
    set_thread_count(threads);
    std::optional<std::uint64_t> seed_flag;
    if (seed_opt->count() > 0) seed_flag = seed_value;
    const std::string sub = app.get_subcommands().front()->get_name();
    const RunContext ctx = make_context(sub, config_path, out_dir, seed_flag);
    if (sub == "decompose") return cmd_decompose(ctx);
    if (sub == "certify") return cmd_certify(ctx);
    if (sub == "factor") return cmd_factor(ctx);
    if (sub == "saddle") return cmd_saddle(ctx);
    if (sub == "frechet") return cmd_frechet(ctx);
    if (sub == "plot") return cmd_plot(ctx);
    std::cerr << "error: unknown subcommand\n";
    return kExitFailure;
  } catch (const InfeasibleScheduleError& e) {
    std::cerr << "rejected: " << e.what()
              << " (suggested m: " << e.suggested_m() << ")\n";
    return kExitRejected;
  } catch (const OrientationError& e) {
    std::cerr << "rejected: " << e.what() << "\n";
    return kExitRejected;
  } catch (const FactorizationError& e) {
    std::cerr << "rejected: " << e.what() << "\n";
    return kExitRejected;
  } catch (const IdentityRejectionError& e) {
    std::cerr << "rejected: " << e.what() << "\n";
    return kExitRejected;
  } catch (const RegimeError& e) {
    std::cerr << "rejected: " << e.what() << "\n";
    return kExitRejected;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace nearid
