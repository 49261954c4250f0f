/*
 Copyright 2026 The lqstab Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

// Command line front end. All engines run in long double so deliberately
// unstable episodes (state magnitudes far beyond 1e308) stay representable.

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "lqstab/lqstab.hpp"

namespace {

using Real = long double;
using lqstab::Matrix;
using lqstab::Vector;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::string out;
};

void add_common(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("config", flags.config_path, "experiment config (JSON)")->required();
  sub->add_option("--seed", flags.seed, "override the config's seed / master seed");
  sub->add_option("--workers", flags.workers, "worker threads (default: LQSTAB_WORKERS or cores)");
  sub->add_option("--out", flags.out, "override the config's output path");
}

lqstab::ExperimentConfig load(const CommonFlags& flags) {
  lqstab::ExperimentConfig cfg = lqstab::parse_config_file(flags.config_path);
  if (flags.seed) {
    cfg.seed = *flags.seed;
    cfg.master_seed = *flags.seed;
    cfg.effective["seed"] = *flags.seed;
    cfg.effective["mc"]["master_seed"] = *flags.seed;
  }
  return cfg;
}

std::string fmt(Real v) { return lqstab::detail::format_g17(static_cast<double>(v)); }

void print_matrix(const std::string& name, const Matrix<Real>& m) {
  std::cout << name << " =\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::cout << "  ";
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::cout << fmt(m(i, j)) << (j + 1 < m.cols() ? " " : "");
    }
    std::cout << "\n";
  }
}

Matrix<Real> resolve_feedback(const lqstab::ExperimentConfig& cfg,
                              const lqstab::SystemParams<Real>& sys,
                              const lqstab::CostMatrices<Real>& cost) {
  if (cfg.feedback_kind == "zero") return Matrix<Real>::Zero(sys.r(), sys.p());
  if (cfg.feedback_kind == "optimal") return lqstab::solve_dare<Real>(sys, cost).L;
  return cfg.feedback.cast<Real>();
}

int cmd_riccati(const CommonFlags& flags, double tol, long max_iter) {
  const lqstab::ExperimentConfig cfg = load(flags);
  const auto sys = lqstab::config_system<Real>(cfg);
  const auto cost = lqstab::config_cost<Real>(cfg);
  lqstab::DareOptions<Real> opts;
  if (tol > 0) opts.tol = static_cast<Real>(tol);
  if (max_iter > 0) opts.max_iter = max_iter;
  const auto sol = lqstab::solve_dare<Real>(sys, cost, opts);
  print_matrix("K", sol.K);
  print_matrix("L", sol.L);
  std::cout << "iterations," << sol.iterations << "\n";
  std::cout << "fixed_point_residual," << fmt(sol.fixed_point_residual) << "\n";
  std::cout << "lyapunov_residual," << fmt(sol.lyapunov_residual) << "\n";
  std::cout << "closed_loop_radius," << fmt(lqstab::spectral_radius<Real>(sys.A + sys.B * sol.L))
            << "\n";
  if (cfg.noise_kind != "none") {
    std::cout << "optimal_average_cost,"
              << fmt(lqstab::optimal_average_cost<Real>(sol.K, cfg.C.cast<Real>())) << "\n";
  }
  return 0;
}

int cmd_simulate(const CommonFlags& flags, long steps_override) {
  lqstab::ExperimentConfig cfg = load(flags);
  if (steps_override > 0) cfg.simulate_steps = steps_override;
  const auto sys = lqstab::config_system<Real>(cfg);
  const auto cost = lqstab::config_cost<Real>(cfg);
  const auto noise = lqstab::config_noise<Real>(cfg);
  const Matrix<Real> gain = resolve_feedback(cfg, sys, cost);
  lqstab::SimulateOptions<Real> opts;
  opts.overflow_cap = static_cast<Real>(cfg.overflow_cap);
  const auto traj = lqstab::simulate<Real>(sys, gain, cfg.x0.cast<Real>(), cfg.simulate_steps,
                                           noise, cfg.seed, opts);
  const std::string path = !flags.out.empty() ? flags.out : cfg.out_trajectory;
  if (!path.empty()) {
    lqstab::write_trajectory_csv(traj, path);
    std::cout << "trajectory," << path << "\n";
  } else {
    lqstab::write_trajectory_csv(traj, std::cout);
  }
  std::cout << "steps," << traj.steps() << "\n";
  std::cout << "final_state_norm," << fmt(traj.states.back().norm()) << "\n";
  std::cout << "average_cost," << fmt(lqstab::average_cost<Real>(traj, cost.Q.cast<Real>(),
                                                                 cost.R.cast<Real>()))
            << "\n";
  return 0;
}

int cmd_identify(const CommonFlags& flags, const std::string& traj_path) {
  lqstab::ExperimentConfig cfg = load(flags);
  lqstab::Trajectory<Real> traj;
  if (!traj_path.empty()) {
    traj = lqstab::read_trajectory_csv<Real>(traj_path);
  } else {
    const auto sys = lqstab::config_system<Real>(cfg);
    const auto cost = lqstab::config_cost<Real>(cfg);
    const auto noise = lqstab::config_noise<Real>(cfg);
    const Matrix<Real> gain = resolve_feedback(cfg, sys, cost);
    lqstab::SimulateOptions<Real> opts;
    opts.overflow_cap = std::numeric_limits<Real>::max() / Real(1e6L);
    traj = lqstab::simulate<Real>(sys, gain, cfg.x0.cast<Real>(), cfg.identify_steps, noise,
                                  cfg.seed, opts);
  }
  const auto est = lqstab::estimate_closed_loop<Real>(traj);
  print_matrix("D_hat", est.D_hat);
  std::cout << "n," << est.n << "\n";
  std::cout << "gram_min_eig," << fmt(est.gram_min_eig) << "\n";
  return 0;
}

int cmd_spectral(const CommonFlags& flags) {
  const lqstab::ExperimentConfig cfg = load(flags);
  if (!cfg.spectral_matrix) throw lqstab::ConfigError("config: spectral.matrix is required");
  const auto report = lqstab::spectral_report<Real>(cfg.spectral_matrix->cast<Real>(),
                                                    static_cast<Real>(cfg.rank_tol),
                                                    static_cast<Real>(cfg.unit_tol));
  const std::string path = !flags.out.empty() ? flags.out : cfg.out_spectral;
  if (!path.empty()) {
    std::ofstream f(path);
    if (!f) throw lqstab::IoError("cannot open for writing: " + path);
    lqstab::write_spectral_report(report, f);
    std::cout << "spectral_report," << path << "\n";
  } else {
    lqstab::write_spectral_report(report, std::cout);
  }
  return 0;
}

int cmd_stabilize(const CommonFlags& flags) {
  const lqstab::ExperimentConfig cfg = load(flags);
  const auto sys = lqstab::config_system<Real>(cfg);
  const auto cost = lqstab::config_cost<Real>(cfg);
  const auto noise = lqstab::config_noise<Real>(cfg);
  lqstab::StabilizationOptions<Real> opts;
  opts.eps_floor = static_cast<Real>(cfg.eps_floor);
  opts.max_redraws = cfg.max_redraws;
  const auto set = lqstab::run_stabilization<Real>(
      sys, noise, static_cast<Real>(cfg.epsilon0), static_cast<Real>(cfg.delta),
      lqstab::config_sizing<Real>(cfg), cfg.seed, cfg.x0.cast<Real>(),
      cfg.episode_length_override, opts);
  std::cout << "k," << set.bundle.k << "\n";
  std::cout << "epsilon_tilde," << fmt(set.epsilon_tilde) << "\n";
  std::cout << "redraws," << set.bundle.redraws << "\n";
  std::cout << "episode_boundaries,";
  for (std::size_t i = 0; i < set.episode_boundaries.size(); ++i) {
    std::cout << (i ? " " : "") << set.episode_boundaries[i];
  }
  std::cout << "\n";
  std::cout << "sizing," << (set.used_override ? "override" : "sample_size") << "\n";
  std::cout << "empty_intersection," << (set.empty_intersection ? "true" : "false") << "\n";
  print_matrix("theta_hat.A", set.theta_hat.A);
  print_matrix("theta_hat.B", set.theta_hat.B);
  const auto cert = lqstab::certify<Real>(sys, set.theta_hat, cost);
  if (cert.diagnostic.empty()) {
    std::cout << "certified," << (cert.certified ? "true" : "false") << "\n";
    std::cout << "certified_radius," << fmt(cert.closed_loop_radius) << "\n";
  } else {
    std::cout << "certified,false\n";
    std::cout << "diagnostic," << cert.diagnostic << "\n";
  }
  const std::string path = !flags.out.empty() ? flags.out : cfg.out_set;
  if (!path.empty()) {
    lqstab::write_stabilizing_set(set, path);
    std::cout << "set," << path << "\n";
  }
  return 0;
}

int cmd_montecarlo(const CommonFlags& flags, long replicates_override, bool timings) {
  lqstab::ExperimentConfig cfg = load(flags);
  if (replicates_override > 0) {
    cfg.replicates = replicates_override;
    cfg.effective["mc"]["replicates"] = replicates_override;
  }
  const lqstab::RunReport report = lqstab::run_montecarlo<Real>(cfg, flags.workers);
  const std::string path = !flags.out.empty() ? flags.out : cfg.out_report;
  if (!path.empty()) {
    lqstab::emit_report(report, path, timings);
    std::cout << "report," << path << "\n";
  } else {
    lqstab::emit_report(report, std::cout, timings);
  }
  std::cout << "replicates," << report.replicates << "\n";
  std::cout << "successes," << report.successes << "\n";
  if (report.frequency_defined) {
    std::cout << "frequency," << lqstab::detail::format_g17(report.frequency) << "\n";
    std::cout << "ci95," << lqstab::detail::format_g17(report.ci95_low) << ","
              << lqstab::detail::format_g17(report.ci95_high) << "\n";
  } else {
    std::cout << "frequency,undefined\n";
  }
  std::map<std::string, long> reasons;
  for (const auto& row : report.rows) ++reasons[row.reason];
  for (const auto& [reason, count] : reasons) {
    std::cout << "count[" << reason << "]," << count << "\n";
  }
  return 0;
}

int cmd_psi(const CommonFlags& flags) {
  const lqstab::ExperimentConfig cfg = load(flags);
  const auto noise = lqstab::config_noise<Real>(cfg);
  if (!noise) throw lqstab::ConfigError("config: psi-estimate requires a noise model");
  const Matrix<Real> D =
      cfg.psi_matrix ? cfg.psi_matrix->cast<Real>().eval() : cfg.A.cast<Real>().eval();
  const Real psi = lqstab::estimate_psi<Real>(D, *noise, static_cast<Real>(cfg.psi_delta),
                                              cfg.psi_steps, cfg.psi_mc, cfg.seed, flags.workers);
  std::cout << "psi_estimate," << fmt(psi) << "\n";
  std::cout << "delta," << lqstab::detail::format_g17(cfg.psi_delta) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lqstab: linear-quadratic adaptive stabilization toolkit"};
  app.require_subcommand(1);

  CommonFlags riccati_flags, simulate_flags, identify_flags, spectral_flags, stabilize_flags,
      montecarlo_flags, psi_flags;
  double riccati_tol = 0;
  long riccati_max_iter = 0;
  long simulate_steps = 0;
  std::string identify_traj;
  long mc_replicates = 0;
  bool mc_timings = false;

  CLI::App* riccati = app.add_subcommand("riccati", "solve the Riccati fixed point");
  add_common(riccati, riccati_flags);
  riccati->add_option("--tol", riccati_tol, "convergence tolerance");
  riccati->add_option("--max-iter", riccati_max_iter, "iteration budget");

  CLI::App* simulate = app.add_subcommand("simulate", "simulate a trajectory to CSV");
  add_common(simulate, simulate_flags);
  simulate->add_option("--steps", simulate_steps, "override simulate.steps");

  CLI::App* identify = app.add_subcommand("identify", "least-squares closed-loop estimate");
  add_common(identify, identify_flags);
  identify->add_option("--traj", identify_traj, "trajectory CSV to fit (skips simulation)");

  CLI::App* spectral = app.add_subcommand("spectral", "eigenvalue / regularity report");
  add_common(spectral, spectral_flags);

  CLI::App* stabilize = app.add_subcommand("stabilize", "one adaptive stabilization run");
  add_common(stabilize, stabilize_flags);

  CLI::App* montecarlo = app.add_subcommand("montecarlo", "replicated stabilization experiment");
  add_common(montecarlo, montecarlo_flags);
  montecarlo->add_option("--replicates", mc_replicates, "override mc.replicates");
  montecarlo->add_flag("--timings", mc_timings, "include wall-clock column (not byte-stable)");

  CLI::App* psi = app.add_subcommand("psi-estimate", "Gram lower-bound quantile estimate");
  add_common(psi, psi_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (riccati->parsed()) return cmd_riccati(riccati_flags, riccati_tol, riccati_max_iter);
    if (simulate->parsed()) return cmd_simulate(simulate_flags, simulate_steps);
    if (identify->parsed()) return cmd_identify(identify_flags, identify_traj);
    if (spectral->parsed()) return cmd_spectral(spectral_flags);
    if (stabilize->parsed()) return cmd_stabilize(stabilize_flags);
    if (montecarlo->parsed()) return cmd_montecarlo(montecarlo_flags, mc_replicates, mc_timings);
    if (psi->parsed()) return cmd_psi(psi_flags);
  } catch (const lqstab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const lqstab::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 1;
  } catch (const lqstab::Error& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
