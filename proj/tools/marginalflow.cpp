// Command-line front end: solve the scalar field of a density path, assemble
// and transform drifts, simulate ensembles, and verify the balance laws.
//
// Exit codes: 0 success / all checks pass, 1 verification failure,
// 2 config or I/O error (with a machine-readable error JSON on stdout).

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mflow/config.hpp"
#include "mflow/error.hpp"
#include "mflow/grid_io.hpp"
#include "mflow/poisson.hpp"
#include "mflow/rng.hpp"
#include "mflow/verify.hpp"

using nlohmann::json;
using namespace mflow;

namespace {

struct Context {
  json cfg;
  std::string out_dir;
  std::string base_dir;
  std::string hash;

  std::string out_path(const std::string& name) const { return out_dir + "/" + name; }
};

Context make_context(const std::string& config_path, const std::string& out_override) {
  Context ctx;
  ctx.cfg = load_config(config_path);
  ctx.base_dir = std::filesystem::path(config_path).parent_path().string();
  if (ctx.base_dir.empty()) ctx.base_dir = ".";
  ctx.out_dir = !out_override.empty() ? out_override : ctx.cfg.value("output", std::string("."));
  std::filesystem::create_directories(ctx.out_dir);
  ctx.hash = config_hash(ctx.cfg);
  return ctx;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json validation_json(const ValidationReport& v) {
  return json{{"mass_error", v.mass_error},     {"boundary_ratio", v.boundary_ratio},
              {"dtp_mass", v.dtp_mass},         {"mass_ok", v.mass_ok},
              {"boundary_ok", v.boundary_ok},   {"dtp_mass_ok", v.dtp_mass_ok},
              {"pass", v.pass()}};
}

json solver_json(const PhiSolveResult& res, double seconds,
                 const std::vector<std::uint8_t>& region) {
  double region_max = 0.0;
  for (std::int64_t i = 0; i < res.phi.grid.size(); ++i)
    if (region[static_cast<std::size_t>(i)])
      region_max = std::max(region_max, std::abs(res.phi.values[i]));
  return json{{"seconds", seconds},
              {"anchor", res.anchor},
              {"imag_residual", res.imag_residual},
              {"padded_mean", res.padded_mean},
              {"max_abs_phi", res.phi.max_abs()},
              {"max_abs_phi_region", region_max},
              {"max_abs_u", res.u.max_abs()}};
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(errc::io, "cannot open for writing: " + path);
  out << content;
}

int cmd_solve_phi(const Context& ctx, std::string solver) {
  const auto path = parse_density(require_field(ctx.cfg, "density"));
  const auto grid = parse_grid(require_field(ctx.cfg, "grid"));
  const auto& solve_cfg = require_field(ctx.cfg, "solve");
  const double t = require_field(solve_cfg, "t").get<double>();
  if (solver.empty()) solver = solve_cfg.value("solver", std::string("fourier"));
  if (solver != "fourier" && solver != "green" && solver != "both")
    throw Error(errc::config_invalid, "solver must be fourier, green or both", "solve.solver");

  ValidationThresholds thresholds;
  if (solve_cfg.contains("validate")) {
    const auto& v = solve_cfg["validate"];
    thresholds.mass_tol = v.value("mass_tol", thresholds.mass_tol);
    thresholds.boundary_ratio_tol = v.value("boundary_ratio_tol", thresholds.boundary_ratio_tol);
    thresholds.dtp_mass_tol = v.value("dtp_mass_tol", thresholds.dtp_mass_tol);
  }

  json report;
  report["config_hash"] = ctx.hash;
  report["t"] = t;
  report["solver"] = solver;
  report["validate"] = validation_json(validate_density(path, grid, t, thresholds));

  const auto p = sample_on_grid(path, grid, t, GridQuantity::density);
  const auto dtp = sample_on_grid(path, grid, t, GridQuantity::dt_density);
  const auto region = high_density_mask(p, 1e-4);

  std::optional<PhiSolveResult> fourier, green;
  if (solver == "fourier" || solver == "both") {
    const auto t0 = std::chrono::steady_clock::now();
    fourier = solve_phi_fourier(p, dtp);
    report["fourier"] = solver_json(*fourier, seconds_since(t0), region);
  }
  if (solver == "green" || solver == "both") {
    const auto t0 = std::chrono::steady_clock::now();
    green = solve_phi_green(dtp, p);
    report["green"] = solver_json(*green, seconds_since(t0), region);
  }
  if (fourier && green)
    report["cross_solver_rel_l2"] = masked_rel_l2(fourier->u.values, green->u.values, region);

  const PhiSolveResult& primary = fourier ? *fourier : *green;
  write_mflo(ctx.out_path("phi.mflo"), primary.phi);
  write_mflo(ctx.out_path("u.mflo"), primary.u);
  const auto grad = grad_phi(primary, p, &path, t);
  write_mflo(ctx.out_path("grad_phi.mflo"), grad);
  if (solve_cfg.value("csv", false)) {
    write_csv(ctx.out_path("phi.csv"), primary.phi);
    write_csv(ctx.out_path("grad_phi.csv"), grad);
  }
  report["max_abs_phi"] = primary.phi.max_abs();
  const auto trust_box = high_density_box(p, 1e-4);
  report["trust_box"] = json{
      {"lo", std::vector<double>(trust_box.first.data(),
                                 trust_box.first.data() + trust_box.first.size())},
      {"hi", std::vector<double>(trust_box.second.data(),
                                 trust_box.second.data() + trust_box.second.size())}};
  report["files"] = json::array({"phi.mflo", "u.mflo", "grad_phi.mflo"});

  write_text(ctx.out_path("report.json"), report.dump(2) + "\n");
  std::cout << report.dump(2) << std::endl;
  return 0;
}

int cmd_simulate(const Context& ctx, std::int64_t seed_override) {
  const auto path = parse_density(require_field(ctx.cfg, "density"));
  const auto sde = parse_sde(require_field(ctx.cfg, "sde"), path, ctx.base_dir);
  auto sim_cfg = parse_sim(require_field(ctx.cfg, "sim"));
  if (seed_override >= 0) sim_cfg.seed = static_cast<std::uint64_t>(seed_override);
  std::vector<double> times;
  for (const auto& tj : require_field(require_field(ctx.cfg, "sim"), "snapshot_times"))
    times.push_back(tj.get<double>());

  const auto ens = simulate_ensemble(sde, path, sim_cfg, times);
  write_snapshots_csv(ctx.out_path("snapshots.csv"), ens);

  json meta;
  meta["config_hash"] = ctx.hash;
  meta["seed"] = sim_cfg.seed;
  meta["dt"] = sim_cfg.dt;
  meta["n_paths"] = sim_cfg.n_paths;
  meta["absorbed_count"] = ens.absorbed_count();
  meta["clamp_events"] = ens.total_clamp_events();
  if (!ens.warning.empty()) meta["warning"] = ens.warning;
  meta["snapshots"] = json::array();
  for (const auto& snap : ens.snapshots) {
    const Eigen::MatrixXd pts = ens.points_at(snap.t);
    json moments;
    moments["t"] = snap.t;
    moments["requested_t"] = snap.requested_t;
    if (pts.cols() > 0) {
      const Eigen::VectorXd mean = pts.rowwise().mean();
      Eigen::MatrixXd centered = pts.colwise() - pts.rowwise().mean();
      const Eigen::VectorXd var =
          centered.cwiseProduct(centered).rowwise().sum() / std::max(1.0, pts.cols() - 1.0);
      moments["mean"] = std::vector<double>(mean.data(), mean.data() + mean.size());
      moments["var"] = std::vector<double>(var.data(), var.data() + var.size());
    }
    meta["snapshots"].push_back(moments);
  }
  write_text(ctx.out_path("ensemble.json"), meta.dump(2) + "\n");
  std::cout << meta.dump(2) << std::endl;
  return 0;
}

DecompositionBundle parse_bundle(const json& bundle_cfg, const DensityPath& path,
                                 const RegularGrid& grid, double t, const Context& ctx,
                                 std::optional<DriftTerm>* ablate_out) {
  const int d = path.dim();
  DecompositionBundle bundle;
  bundle.path = path;
  bundle.d_field = bundle_cfg.contains("D")
                       ? parse_field(bundle_cfg["D"], d, FieldRole::psd, "verify.bundles.D")
                       : make_zero_field(d, FieldRole::psd);
  bundle.q_field = bundle_cfg.contains("Q")
                       ? parse_field(bundle_cfg["Q"], d, FieldRole::skew, "verify.bundles.Q")
                       : make_zero_field(d, FieldRole::skew);
  const auto& phi = require_field(bundle_cfg, "phi");
  if (phi.contains("constant")) {
    bundle.phi = PhiSource::constant(phi["constant"].get<double>(), d);
  } else if (phi.contains("solve") && phi["solve"].get<bool>()) {
    const auto p = sample_on_grid(path, grid, t, GridQuantity::density);
    const auto dtp = sample_on_grid(path, grid, t, GridQuantity::dt_density);
    auto res = solve_phi_fourier(p, dtp);
    auto grad = grad_phi(res, p, &path, t);
    // Confine drifts to the region where phi = u/p is meaningful.
    auto domain = high_density_box(p, 1e-4);
    bundle.phi = PhiSource::grid({PhiSource::GridSlice{t, std::move(res.phi), std::move(grad)}},
                                 std::move(domain));
  } else if (phi.contains("grid")) {
    const auto& g = phi["grid"];
    auto phi_field =
        read_mflo_scalar(ctx.base_dir + "/" + require_field(g, "phi_file").get<std::string>());
    auto grad_field =
        read_mflo_vector(ctx.base_dir + "/" + require_field(g, "grad_file").get<std::string>());
    bundle.phi = PhiSource::grid(
        {PhiSource::GridSlice{g.value("t", t), std::move(phi_field), std::move(grad_field)}});
  } else {
    throw Error(errc::config_invalid, "phi needs constant, solve or grid",
                "verify.bundles.phi");
  }
  if (ablate_out) {
    const auto name = bundle_cfg.value("ablate", std::string("none"));
    if (name == "phi_score") *ablate_out = DriftTerm::phi_score;
    else if (name == "grad_phi") *ablate_out = DriftTerm::grad_phi;
    else if (name == "dq_score") *ablate_out = DriftTerm::dq_score;
    else if (name == "dq_div") *ablate_out = DriftTerm::dq_div;
    else if (name != "none")
      throw Error(errc::config_invalid, "unknown ablation: " + name, "verify.bundles.ablate");
  }
  return bundle;
}

int cmd_verify(const Context& ctx) {
  const auto path = parse_density(require_field(ctx.cfg, "density"));
  const auto grid = parse_grid(require_field(ctx.cfg, "grid"));
  const auto& verify_cfg = require_field(ctx.cfg, "verify");
  const double t = require_field(verify_cfg, "t").get<double>();
  const auto& bundles_cfg = require_field(verify_cfg, "bundles");
  if (bundles_cfg.empty())
    throw Error(errc::config_missing, "verify needs at least one bundle", "verify.bundles");
  const double residual_tol =
      verify_cfg.value("residual_tol", grid.dim() == 3 ? 5e-2 : 1e-2);

  bool all_pass = true;
  json residual_report;
  residual_report["config_hash"] = ctx.hash;
  residual_report["t"] = t;
  residual_report["residual_tol"] = residual_tol;
  residual_report["bundles"] = json::array();

  std::vector<DecompositionBundle> bundles;
  for (std::size_t bi = 0; bi < bundles_cfg.size(); ++bi) {
    std::optional<DriftTerm> ablate;
    const auto bundle = parse_bundle(bundles_cfg[bi], path, grid, t, ctx, &ablate);
    const auto sde = assemble_drift(bundle, ablate);
    const auto report = fokker_planck_residual(sde, path, grid, t);
    const bool pass = report.rel <= residual_tol;
    all_pass = all_pass && pass;
    json entry{{"index", bi},
               {"rel_residual", report.rel},
               {"l2_residual", report.l2_residual},
               {"l2_dtp", report.l2_dtp},
               {"l2_div_j", report.l2_div_j},
               {"pass", pass}};
    if (!bundle.d_field.spatially_constant() || !bundle.q_field.spatially_constant())
      entry["note"] = "state-dependent (possibly unbounded) field coefficients; "
                      "the bounded-coefficient assumption is not checked";
    residual_report["bundles"].push_back(entry);
    bundles.push_back(bundle);
  }
  write_text(ctx.out_path("residual_report.json"), residual_report.dump(2) + "\n");

  json invariance_report;
  invariance_report["config_hash"] = ctx.hash;
  invariance_report["entries"] = json::array();
  if (verify_cfg.contains("times") && ctx.cfg.contains("sim")) {
    const auto sim_cfg = parse_sim(ctx.cfg["sim"]);
    std::vector<double> times;
    for (const auto& tj : verify_cfg["times"]) times.push_back(tj.get<double>());
    const int n_proj = verify_cfg.value("n_proj", 128);
    const std::uint64_t stat_seed = verify_cfg.value("distance_seed", std::uint64_t{17});
    const auto entries =
        marginal_invariance_suite(path, bundles, sim_cfg, times, n_proj, stat_seed);
    for (const auto& e : entries) {
      all_pass = all_pass && e.report.pass;
      invariance_report["entries"].push_back(
          json{{"bundle", e.bundle_index},
               {"t", e.t},
               {"sliced_w1", e.report.sliced_w1},
               {"energy", e.report.energy},
               {"baseline_sliced_w1", e.report.baseline_sliced_w1},
               {"baseline_energy", e.report.baseline_energy},
               {"pass", e.report.pass}});
    }
  }
  write_text(ctx.out_path("invariance_report.json"), invariance_report.dump(2) + "\n");

  json summary{{"config_hash", ctx.hash}, {"pass", all_pass}};
  std::cout << summary.dump(2) << std::endl;
  return all_pass ? 0 : 1;
}

struct ProbeSet {
  std::vector<double> times;
  Eigen::MatrixXd points;  // d x n
};

ProbeSet parse_probes(const json& cfg, int d) {
  const auto& pj = require_field(cfg, "probes");
  ProbeSet probes;
  for (const auto& tj : require_field(pj, "times")) probes.times.push_back(tj.get<double>());
  if (pj.contains("points")) {
    const auto& pts = pj["points"];
    probes.points.resize(d, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (int a = 0; a < d; ++a)
        probes.points(a, static_cast<Eigen::Index>(i)) = pts[i][static_cast<std::size_t>(a)].get<double>();
    return probes;
  }
  const int count = require_field(pj, "count").get<int>();
  const auto seed = pj.value("seed", std::uint64_t{0});
  const double lo = pj.value("lo", -3.0);
  const double hi = pj.value("hi", 3.0);
  probes.points.resize(d, count);
  for (int i = 0; i < count; ++i)
    for (int a = 0; a < d; ++a) {
      const auto u = Philox::uniform2(
          seed, {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(a), 0x9999u, 0u});
      probes.points(a, i) = lo + (hi - lo) * u[0];
    }
  return probes;
}

void write_drift_table(const std::string& out_path, const SdeSpec& sde, const ProbeSet& probes) {
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw Error(errc::io, "cannot open for writing: " + out_path);
  out << "t";
  for (int a = 0; a < sde.dim; ++a) out << ",x" << (a + 1);
  for (int a = 0; a < sde.dim; ++a) out << ",b" << (a + 1);
  out << "\n";
  for (double t : probes.times) {
    for (Eigen::Index i = 0; i < probes.points.cols(); ++i) {
      const Eigen::VectorXd b = sde.drift(probes.points.col(i), t);
      out << format_double(t);
      for (int a = 0; a < sde.dim; ++a) out << "," << format_double(probes.points(a, i));
      for (int a = 0; a < sde.dim; ++a) out << "," << format_double(b[a]);
      out << "\n";
    }
  }
}

int cmd_reverse(const Context& ctx, bool check_involution) {
  const auto path = parse_density(require_field(ctx.cfg, "density"));
  const auto sde = parse_sde(require_field(ctx.cfg, "sde"), path, ctx.base_dir);
  const auto probes = parse_probes(ctx.cfg, sde.dim);
  const auto& rev_cfg = require_field(ctx.cfg, "reverse");
  const double horizon = rev_cfg.value("horizon", path.t_max());
  const auto kind = rev_cfg.value("kind", std::string("strict"));

  SdeSpec reversed;
  if (kind == "strict") {
    reversed = time_reverse_strict(sde, path, horizon);
  } else if (kind == "weak") {
    const auto d_bar = rev_cfg.contains("Dbar")
                           ? parse_field(rev_cfg["Dbar"], sde.dim, FieldRole::psd, "reverse.Dbar")
                           : sde.sigma.time_reversed(horizon);
    const auto q_bar = rev_cfg.contains("Qbar")
                           ? parse_field(rev_cfg["Qbar"], sde.dim, FieldRole::skew, "reverse.Qbar")
                           : make_zero_field(sde.dim, FieldRole::skew);
    reversed = weak_reversal_family(sde, path, horizon, d_bar, q_bar);
  } else {
    throw Error(errc::config_invalid, "reverse kind must be strict or weak", "reverse.kind");
  }

  write_drift_table(ctx.out_path("drift_table.csv"), reversed, probes);
  write_drift_table(ctx.out_path("drift_table_input.csv"), sde, probes);

  json summary{{"config_hash", ctx.hash}, {"kind", kind}, {"horizon", horizon}};
  if (check_involution) {
    const auto back =
        time_reverse_strict(reversed, path.time_reversed(horizon), horizon);
    double max_dev = 0.0;
    for (double t : probes.times)
      for (Eigen::Index i = 0; i < probes.points.cols(); ++i)
        max_dev = std::max(max_dev, (back.drift(probes.points.col(i), t) -
                                     sde.drift(probes.points.col(i), t))
                                        .cwiseAbs()
                                        .maxCoeff());
    summary["involution_max_abs_dev"] = max_dev;
  }
  std::cout << summary.dump(2) << std::endl;
  return 0;
}

int cmd_match(const Context& ctx) {
  const auto path = parse_density(require_field(ctx.cfg, "density"));
  const auto sde = parse_sde(require_field(ctx.cfg, "sde"), path, ctx.base_dir);
  const auto probes = parse_probes(ctx.cfg, sde.dim);
  const auto& match_cfg = require_field(ctx.cfg, "match");

  MatrixField new_d = match_cfg.contains("D")
                          ? parse_field(match_cfg["D"], sde.dim, FieldRole::psd, "match.D")
                          : make_zero_field(sde.dim, FieldRole::psd);
  if (match_cfg.value("D_from_sigma", false)) new_d = sde.sigma;
  const MatrixField new_q = match_cfg.contains("Q")
                                ? parse_field(match_cfg["Q"], sde.dim, FieldRole::skew, "match.Q")
                                : make_zero_field(sde.dim, FieldRole::skew);

  const auto matched = sde_match(sde, path, new_d, new_q);
  write_drift_table(ctx.out_path("drift_table.csv"), matched, probes);
  write_drift_table(ctx.out_path("drift_table_input.csv"), sde, probes);

  json summary{{"config_hash", ctx.hash}};
  std::cout << summary.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SDE decomposition toolkit: scalar-field solves, drift transforms, "
               "ensemble simulation and marginal verification"};
  app.require_subcommand(1);

  std::string config_path, out_dir, solver;
  std::int64_t seed_override = -1;
  bool check_involution = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file")->required();
    cmd->add_option("--out", out_dir, "output directory (overrides config)");
  };

  auto* solve_cmd = app.add_subcommand("solve-phi", "solve the scalar field on a grid");
  add_common(solve_cmd);
  solve_cmd->add_option("--solver", solver, "fourier|green|both");

  auto* sim_cmd = app.add_subcommand("simulate", "walk an ensemble and export snapshots");
  add_common(sim_cmd);
  sim_cmd->add_option("--seed", seed_override, "seed override");

  auto* verify_cmd = app.add_subcommand("verify", "balance residuals and marginal invariance");
  add_common(verify_cmd);

  auto* reverse_cmd = app.add_subcommand("reverse", "time-reverse an SDE, emit a drift table");
  add_common(reverse_cmd);
  reverse_cmd->add_flag("--check-involution", check_involution,
                        "report the double-reversal deviation");

  auto* match_cmd = app.add_subcommand("match", "re-diffuse an SDE, emit a drift table");
  add_common(match_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    const Context ctx = make_context(config_path, out_dir);
    if (solve_cmd->parsed()) return cmd_solve_phi(ctx, solver);
    if (sim_cmd->parsed()) return cmd_simulate(ctx, seed_override);
    if (verify_cmd->parsed()) return cmd_verify(ctx);
    if (reverse_cmd->parsed()) return cmd_reverse(ctx, check_involution);
    if (match_cmd->parsed()) return cmd_match(ctx);
  } catch (const Error& e) {
    json err{{"error",
              {{"code", e.code()}, {"field", e.field()}, {"message", e.what()}}}};
    std::cout << err.dump(2) << std::endl;
    return 2;
  } catch (const std::exception& e) {
    json err{{"error", {{"code", "INTERNAL"}, {"message", e.what()}}}};
    std::cout << err.dump(2) << std::endl;
    return 2;
  }
  return 2;
}
