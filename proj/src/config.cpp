#include "mflow/config.hpp"

#include <fstream>

#include "mflow/error.hpp"
#include "mflow/grid_io.hpp"

namespace mflow {
namespace {

using nlohmann::json;

Eigen::VectorXd parse_vector(const json& j, const std::string& field) {
  if (!j.is_array()) throw Error(errc::config_invalid, "expected an array", field);
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Eigen::MatrixXd parse_matrix(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw Error(errc::config_invalid, "expected a matrix", field);
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols)
      throw Error(errc::config_invalid, "ragged matrix", field);
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

VectorSchedule parse_vector_schedule(const json& j, const std::string& field) {
  if (!j.is_array()) throw Error(errc::config_invalid, "expected an array of schedules", field);
  std::vector<Schedule> entries;
  for (std::size_t i = 0; i < j.size(); ++i)
    entries.push_back(parse_schedule(j[i], field + "[" + std::to_string(i) + "]"));
  return VectorSchedule(std::move(entries));
}

MatrixSchedule parse_cov_schedule(const json& j, Eigen::Index d, const std::string& field) {
  if (j.contains("isotropic"))
    return MatrixSchedule::isotropic(d, parse_schedule(j["isotropic"], field + ".isotropic"));
  if (j.contains("diagonal")) {
    const auto vs = parse_vector_schedule(j["diagonal"], field + ".diagonal");
    std::vector<Schedule> diag;
    for (Eigen::Index i = 0; i < vs.size(); ++i) diag.push_back(vs.at(i));
    return MatrixSchedule::diagonal(diag);
  }
  if (j.contains("constant"))
    return MatrixSchedule::constant(parse_matrix(j["constant"], field + ".constant"));
  throw Error(errc::config_invalid, "covariance needs isotropic, diagonal or constant", field);
}

GaussianPathParams parse_gaussian_params(const json& j, double t_max, const std::string& field) {
  GaussianPathParams params;
  params.mean = parse_vector_schedule(require_field(j, "mean"), field + ".mean");
  params.cov = parse_cov_schedule(require_field(j, "cov"), params.mean.size(), field + ".cov");
  params.t_max = t_max;
  return params;
}

}  // namespace

const nlohmann::json& require_field(const nlohmann::json& j, const std::string& field) {
  if (!j.is_object() || !j.contains(field))
    throw Error(errc::config_missing, "missing config field: " + field, field);
  return j.at(field);
}

nlohmann::json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::io, "cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw Error(errc::config_invalid, std::string("config parse error: ") + e.what());
  }
  const auto version = require_field(j, "schema_version").get<int>();
  if (version != 1)
    throw Error(errc::config_invalid, "unsupported schema_version", "schema_version");
  return j;
}

std::string config_hash(const nlohmann::json& j) {
  const std::string canon = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

Schedule parse_schedule(const nlohmann::json& j, const std::string& field) {
  if (j.is_number()) return Schedule::constant(j.get<double>());
  if (j.is_array()) return Schedule::polynomial(parse_vector(j, field));
  if (j.is_object() && j.contains("pieces")) {
    std::vector<double> breaks;
    std::vector<Eigen::VectorXd> coeffs;
    for (const auto& piece : j["pieces"]) {
      breaks.push_back(require_field(piece, "start").get<double>());
      coeffs.push_back(parse_vector(require_field(piece, "coeffs"), field + ".pieces.coeffs"));
    }
    return Schedule::piecewise(std::move(breaks), std::move(coeffs));
  }
  throw Error(errc::config_invalid, "schedule must be a number, coefficient array or pieces",
              field);
}

DensityPath builtin_density(const std::string& name, int d) {
  if (name == "stationary_normal") {
    GaussianPathParams params;
    params.mean = VectorSchedule::constant(Eigen::VectorXd::Zero(d));
    params.cov = MatrixSchedule::constant(Eigen::MatrixXd::Identity(d, d));
    return make_gaussian_path(params);
  }
  if (name == "heat_flow") {
    GaussianPathParams params;
    params.mean = VectorSchedule::constant(Eigen::VectorXd::Zero(d));
    params.cov = MatrixSchedule::isotropic(d, Schedule::linear(1.0, 1.0));
    return make_gaussian_path(params);
  }
  if (name == "two_moving_gaussians") {
    MixturePathParams params;
    for (double sign : {1.0, -1.0}) {
      GaussianPathParams c;
      std::vector<Schedule> mean;
      mean.push_back(Schedule::linear(sign * 1.0, sign * 0.5));
      for (int a = 1; a < d; ++a) mean.push_back(Schedule::constant(0.0));
      c.mean = VectorSchedule(std::move(mean));
      c.cov = MatrixSchedule::constant(Eigen::MatrixXd::Identity(d, d));
      params.components.push_back(std::move(c));
    }
    params.weights = Eigen::Vector2d(0.5, 0.5);
    return make_mixture_path(params);
  }
  if (name == "edm_single_atom") {
    EdmScheduleParams params;
    params.scale = Schedule::constant(1.0);
    params.set_noise(Schedule::linear(0.0, 1.0));
    params.atoms = Eigen::MatrixXd::Zero(d, 1);
    return make_edm_path(params);
  }
  throw Error(errc::config_invalid, "unknown builtin density: " + name, "density.builtin");
}

DensityPath parse_density(const nlohmann::json& j) {
  if (j.contains("builtin"))
    return builtin_density(j["builtin"].get<std::string>(),
                           require_field(j, "d").get<int>());
  const auto kind = require_field(j, "kind").get<std::string>();
  const double t_max = j.value("t_max", 1.0);
  if (kind == "gaussian") return make_gaussian_path(parse_gaussian_params(j, t_max, "density"));
  if (kind == "mixture") {
    MixturePathParams params;
    params.t_max = t_max;
    for (const auto& comp : require_field(j, "components"))
      params.components.push_back(parse_gaussian_params(comp, t_max, "density.components"));
    if (j.contains("weights")) params.weights = parse_vector(j["weights"], "density.weights");
    return make_mixture_path(params);
  }
  if (kind == "edm") {
    EdmScheduleParams params;
    params.t_max = t_max;
    params.scale = j.contains("s") ? parse_schedule(j["s"], "density.s") : Schedule::constant(1.0);
    if (j.contains("sigma_sq"))
      params.noise_sq = parse_schedule(j["sigma_sq"], "density.sigma_sq");
    else
      params.set_noise(parse_schedule(require_field(j, "sigma"), "density.sigma"));
    const auto& atoms = require_field(j, "atoms");
    const auto k = static_cast<Eigen::Index>(atoms.size());
    if (k < 1) throw Error(errc::config_invalid, "atoms must be nonempty", "density.atoms");
    const auto d = static_cast<Eigen::Index>(atoms[0].size());
    params.atoms.resize(d, k);
    for (Eigen::Index i = 0; i < k; ++i)
      params.atoms.col(i) = parse_vector(atoms[static_cast<std::size_t>(i)], "density.atoms");
    if (j.contains("weights")) params.weights = parse_vector(j["weights"], "density.weights");
    return make_edm_path(params);
  }
  throw Error(errc::config_invalid, "unknown density kind: " + kind, "density.kind");
}

RegularGrid parse_grid(const nlohmann::json& j) {
  const Eigen::VectorXd lo = parse_vector(require_field(j, "lo"), "grid.lo");
  const Eigen::VectorXd hi = parse_vector(require_field(j, "hi"), "grid.hi");
  const auto& nj = require_field(j, "n");
  std::vector<int> n;
  for (const auto& e : nj) n.push_back(e.get<int>());
  return RegularGrid(lo, hi, n);
}

MatrixField parse_field(const nlohmann::json& j, int dim, FieldRole position_role,
                        const std::string& field_name) {
  if (j.contains("role")) {
    const auto role = j["role"].get<std::string>();
    const std::string expected = position_role == FieldRole::psd ? "psd" : "skew";
    if (role != expected)
      throw Error(errc::config_invalid, "field role '" + role + "' invalid here, expected " +
                                            expected,
                  field_name + ".role");
  }
  const auto kind = require_field(j, "kind").get<std::string>();
  if (kind == "zero") return make_zero_field(dim, position_role);
  if (kind == "constant")
    return make_constant_field(parse_matrix(require_field(j, "matrix"), field_name + ".matrix"),
                               position_role);
  if (kind == "radial") {
    if (position_role != FieldRole::psd)
      throw Error(errc::config_invalid, "radial fields are psd", field_name + ".kind");
    return make_radial_isotropic_field(dim, require_field(j, "a").get<double>(),
                                       require_field(j, "b").get<double>());
  }
  if (kind == "linear_skew") {
    if (position_role != FieldRole::skew)
      throw Error(errc::config_invalid, "linear_skew fields are skew", field_name + ".kind");
    Eigen::MatrixXd constant = Eigen::MatrixXd::Zero(dim, dim);
    if (j.contains("constant")) constant = parse_matrix(j["constant"], field_name + ".constant");
    std::vector<Eigen::MatrixXd> linear(static_cast<std::size_t>(dim),
                                        Eigen::MatrixXd::Zero(dim, dim));
    if (j.contains("linear")) {
      const auto& lj = j["linear"];
      if (lj.size() != static_cast<std::size_t>(dim))
        throw Error(errc::config_invalid, "linear needs one matrix per axis",
                    field_name + ".linear");
      for (int a = 0; a < dim; ++a)
        linear[static_cast<std::size_t>(a)] =
            parse_matrix(lj[static_cast<std::size_t>(a)], field_name + ".linear");
    }
    return make_linear_skew_field(constant, linear);
  }
  if (kind == "isotropic_schedule")
    return make_isotropic_schedule_field(
        dim, parse_schedule(require_field(j, "c"), field_name + ".c"), position_role);
  throw Error(errc::config_invalid, "unknown field kind: " + kind, field_name + ".kind");
}

SimConfig parse_sim(const nlohmann::json& j) {
  SimConfig cfg;
  cfg.dt = require_field(j, "dt").get<double>();
  cfg.t0 = j.value("t0", 0.0);
  cfg.t1 = j.value("t1", 1.0);
  cfg.n_paths = require_field(j, "n_paths").get<int>();
  cfg.seed = j.value("seed", std::uint64_t{0});
  const auto policy = j.value("policy", std::string("error"));
  if (policy == "error")
    cfg.policy = DomainPolicy::error;
  else if (policy == "clamp-to-box")
    cfg.policy = DomainPolicy::clamp_to_box;
  else if (policy == "absorb")
    cfg.policy = DomainPolicy::absorb;
  else
    throw Error(errc::config_invalid, "unknown policy: " + policy, "sim.policy");
  return cfg;
}

SdeSpec parse_sde(const nlohmann::json& j, const DensityPath& density,
                  const std::string& base_dir) {
  const int d = density.dim();
  const auto& drift = require_field(j, "drift");

  SdeSpec sde;
  sde.dim = d;
  sde.t0 = j.value("t0", 0.0);
  sde.t1 = j.value("t1", density.t_max());

  if (drift.contains("builtin")) {
    const auto name = drift["builtin"].get<std::string>();
    if (name == "ou") {
      const double rate = drift.value("rate", 1.0);
      sde.drift = [rate](const Eigen::Ref<const Eigen::VectorXd>& x, double) {
        return (-rate * x).eval();
      };
    } else if (name == "zero") {
      sde.drift = [d](const Eigen::Ref<const Eigen::VectorXd>&, double) {
        return Eigen::VectorXd::Zero(d).eval();
      };
    } else {
      throw Error(errc::config_invalid, "unknown builtin drift: " + name, "sde.drift.builtin");
    }
    sde.sigma = parse_field(require_field(j, "sigma"), d, FieldRole::psd, "sde.sigma");
    return sde;
  }

  if (drift.contains("assembled")) {
    const auto& asm_cfg = drift["assembled"];
    DecompositionBundle bundle;
    bundle.path = density;
    bundle.d_field = asm_cfg.contains("D")
                         ? parse_field(asm_cfg["D"], d, FieldRole::psd, "sde.drift.assembled.D")
                         : make_zero_field(d, FieldRole::psd);
    bundle.q_field = asm_cfg.contains("Q")
                         ? parse_field(asm_cfg["Q"], d, FieldRole::skew, "sde.drift.assembled.Q")
                         : make_zero_field(d, FieldRole::skew);
    const auto& phi = require_field(asm_cfg, "phi");
    if (phi.contains("constant")) {
      bundle.phi = PhiSource::constant(phi["constant"].get<double>(), d);
    } else if (phi.contains("grid")) {
      const auto& g = phi["grid"];
      auto phi_field = read_mflo_scalar(base_dir + "/" +
                                        require_field(g, "phi_file").get<std::string>());
      auto grad_field = read_mflo_vector(base_dir + "/" +
                                         require_field(g, "grad_file").get<std::string>());
      const double t = g.value("t", 0.0);
      // Optional evaluation box (e.g. the trust_box from the solve report);
      // u/p is tail noise far outside the density's support.
      std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> domain;
      if (g.contains("domain")) {
        domain = std::make_pair(
            parse_vector(require_field(g["domain"], "lo"), "sde.drift.assembled.phi.grid.domain.lo"),
            parse_vector(require_field(g["domain"], "hi"), "sde.drift.assembled.phi.grid.domain.hi"));
      }
      bundle.phi = PhiSource::grid(
          {PhiSource::GridSlice{t, std::move(phi_field), std::move(grad_field)}},
          std::move(domain));
    } else {
      throw Error(errc::config_invalid, "phi needs constant or grid",
                  "sde.drift.assembled.phi");
    }
    std::optional<DriftTerm> ablate;
    const auto ablate_name = asm_cfg.value("ablate", std::string("none"));
    if (ablate_name == "phi_score") ablate = DriftTerm::phi_score;
    else if (ablate_name == "grad_phi") ablate = DriftTerm::grad_phi;
    else if (ablate_name == "dq_score") ablate = DriftTerm::dq_score;
    else if (ablate_name == "dq_div") ablate = DriftTerm::dq_div;
    else if (ablate_name != "none")
      throw Error(errc::config_invalid, "unknown ablation: " + ablate_name,
                  "sde.drift.assembled.ablate");
    return assemble_drift(bundle, ablate);
  }

  throw Error(errc::config_invalid, "drift needs builtin or assembled", "sde.drift");
}

}  // namespace mflow
