#include "mflow/sim.hpp"

#include <cmath>
#include <fstream>

#include "mflow/error.hpp"
#include "mflow/grid_io.hpp"
#include "mflow/parallel.hpp"
#include "mflow/rng.hpp"

namespace mflow {
namespace {

constexpr std::uint32_t kNoiseTag = 0xE700u;
constexpr std::uint64_t kInitSeedSalt = 0x9E3779B97F4A7C15ull;

void check_config(const SdeSpec& sde, const SimConfig& cfg) {
  if (!(cfg.dt > 0.0)) throw Error(errc::config_invalid, "dt must be positive");
  if (!(cfg.t1 > cfg.t0)) throw Error(errc::config_invalid, "time range must be nonempty");
  if (cfg.dt > cfg.t1 - cfg.t0 + 1e-15)
    throw Error(errc::config_invalid, "dt exceeds the time range");
  if (cfg.n_paths < 1) throw Error(errc::config_invalid, "n_paths must be >= 1");
  if (sde.dim < 1) throw Error(errc::config_invalid, "sde dimension unset");
}

bool inside_domain(const SdeSpec& sde, const Eigen::VectorXd& x) {
  if (!sde.domain) return true;
  for (int a = 0; a < sde.dim; ++a)
    if (x[a] < sde.domain->first[a] || x[a] > sde.domain->second[a]) return false;
  return true;
}

void clamp_to_domain(const SdeSpec& sde, Eigen::VectorXd& x) {
  for (int a = 0; a < sde.dim; ++a)
    x[a] = std::min(std::max(x[a], sde.domain->first[a]), sde.domain->second[a]);
}

}  // namespace

int Ensemble::absorbed_count() const {
  int n = 0;
  for (auto flag : absorbed) n += flag ? 1 : 0;
  return n;
}

std::int64_t Ensemble::total_clamp_events() const {
  std::int64_t n = 0;
  for (auto c : clamp_events) n += c;
  return n;
}

Eigen::MatrixXd Ensemble::points_at(double t) const {
  for (const auto& snap : snapshots) {
    if (std::abs(snap.t - t) <= 1e-9 || std::abs(snap.requested_t - t) <= 1e-9) {
      const int keep = static_cast<int>(absorbed.size()) - absorbed_count();
      Eigen::MatrixXd out(snap.points.rows(), keep);
      int col = 0;
      for (int i = 0; i < snap.points.cols(); ++i)
        if (!absorbed[static_cast<std::size_t>(i)]) out.col(col++) = snap.points.col(i);
      return out;
    }
  }
  std::string available;
  for (const auto& snap : snapshots) available += " " + format_double(snap.t);
  throw Error(errc::unknown_time, "no snapshot at t=" + format_double(t) +
                                      "; available:" + available);
}

Eigen::VectorXd step_euler_maruyama(const SdeSpec& sde,
                                    const Eigen::Ref<const Eigen::VectorXd>& x, double t,
                                    double dt, const Eigen::Ref<const Eigen::VectorXd>& noise) {
  const Eigen::MatrixXd root = psd_sqrt(2.0 * sde.sigma.value(x, t));
  return x + sde.drift(x, t) * dt + root * (std::sqrt(dt) * noise);
}

Ensemble simulate_ensemble(const SdeSpec& sde, const Eigen::MatrixXd& init, const SimConfig& cfg,
                           const std::vector<double>& snapshot_times) {
  check_config(sde, cfg);
  if (init.rows() != sde.dim || init.cols() != cfg.n_paths)
    throw Error(errc::dimension, "init must be d x n_paths");

  const auto n_steps = static_cast<std::int64_t>(std::llround((cfg.t1 - cfg.t0) / cfg.dt));
  const double sqrt_dt = std::sqrt(cfg.dt);

  // Snap each requested time to the nearest step; snapshots indexed by step.
  Ensemble ens;
  ens.config = cfg;
  std::vector<std::int64_t> snap_steps;
  for (double t_req : snapshot_times) {
    if (t_req < cfg.t0 - 1e-12 || t_req > cfg.t1 + 1e-12)
      throw Error(errc::domain, "snapshot time outside the simulated range");
    std::int64_t k = std::llround((t_req - cfg.t0) / cfg.dt);
    k = std::max<std::int64_t>(0, std::min(n_steps, k));
    snap_steps.push_back(k);
    ens.snapshots.push_back(Snapshot{cfg.t0 + static_cast<double>(k) * cfg.dt, t_req,
                                     Eigen::MatrixXd::Zero(sde.dim, cfg.n_paths)});
  }

  ens.absorbed.assign(static_cast<std::size_t>(cfg.n_paths), 0);
  ens.clamp_events.assign(static_cast<std::size_t>(cfg.n_paths), 0);

  // Constant diffusion factors are hoisted out of the step loop.
  const bool const_sigma = sde.sigma.constant();
  Eigen::MatrixXd const_root;
  if (const_sigma)
    const_root = psd_sqrt(2.0 * sde.sigma.value(Eigen::VectorXd::Zero(sde.dim), cfg.t0));

  const NormalStream noise_stream(cfg.seed, kNoiseTag);

  parallel_for(cfg.n_paths, [&](std::int64_t i) {
    Eigen::VectorXd x = init.col(i);
    Eigen::VectorXd z(sde.dim);
    std::int64_t absorbed_at = -1;

    auto record = [&](std::int64_t step) {
      for (std::size_t s = 0; s < snap_steps.size(); ++s)
        if (snap_steps[s] == step) ens.snapshots[s].points.col(i) = x;
    };

    record(0);
    for (std::int64_t k = 0; k < n_steps; ++k) {
      const double t = cfg.t0 + static_cast<double>(k) * cfg.dt;
      if (!inside_domain(sde, x)) {
        switch (cfg.policy) {
          case DomainPolicy::error:
            throw Error(errc::domain, "path " + std::to_string(i) + " left the phi grid box at t=" +
                                          format_double(t));
          case DomainPolicy::clamp_to_box:
            clamp_to_domain(sde, x);
            ens.clamp_events[static_cast<std::size_t>(i)] += 1;
            break;
          case DomainPolicy::absorb:
            ens.absorbed[static_cast<std::size_t>(i)] = 1;
            absorbed_at = k;
            break;
        }
        if (absorbed_at >= 0) break;
      }
      noise_stream.fill(static_cast<std::uint64_t>(i), static_cast<std::uint32_t>(k), z);
      if (const_sigma) {
        x = (x + sde.drift(x, t) * cfg.dt + const_root * (sqrt_dt * z)).eval();
      } else {
        x = step_euler_maruyama(sde, x, t, cfg.dt, z);
      }
      if (!x.allFinite())
        throw Error(errc::nonfinite, "path " + std::to_string(i) + " diverged at t=" +
                                         format_double(t));
      record(k + 1);
    }
    if (absorbed_at >= 0) {
      // Freeze the exit position in the remaining snapshots.
      for (std::size_t s = 0; s < snap_steps.size(); ++s)
        if (snap_steps[s] > absorbed_at) ens.snapshots[s].points.col(i) = x;
    }
  });

  if (ens.absorbed_count() > cfg.n_paths / 100)
    ens.warning = "more than 1% of paths were absorbed at the domain boundary";
  return ens;
}

Ensemble simulate_ensemble(const SdeSpec& sde, const DensityPath& init_path, const SimConfig& cfg,
                           const std::vector<double>& snapshot_times) {
  check_config(sde, cfg);
  const Eigen::MatrixXd init =
      init_path.sample(cfg.t0, cfg.n_paths, cfg.seed ^ kInitSeedSalt);
  return simulate_ensemble(sde, init, cfg, snapshot_times);
}

void write_snapshots_csv(const std::string& path, const Ensemble& ensemble) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(errc::io, "cannot open for writing: " + path);
  const int d = ensemble.snapshots.empty() ? 0 : static_cast<int>(ensemble.snapshots[0].points.rows());
  out << "t,path_id";
  for (int a = 0; a < d; ++a) out << ",x" << (a + 1);
  out << "\n";
  for (const auto& snap : ensemble.snapshots) {
    for (int i = 0; i < snap.points.cols(); ++i) {
      if (ensemble.absorbed[static_cast<std::size_t>(i)]) continue;
      out << format_double(snap.t) << "," << i;
      for (int a = 0; a < d; ++a) out << "," << format_double(snap.points(a, i));
      out << "\n";
    }
  }
}

}  // namespace mflow
