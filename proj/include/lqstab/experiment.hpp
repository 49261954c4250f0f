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
#ifndef LQSTAB_EXPERIMENT_HPP
#define LQSTAB_EXPERIMENT_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lqstab/errors.hpp"
#include "lqstab/parallel.hpp"
#include "lqstab/stabilization.hpp"

namespace lqstab {

/// Declarative experiment description, parsed from a JSON config. All
/// numeric payloads are plain doubles; typed engines convert on use.
struct ExperimentConfig {
  // system (resolved)
  Matrix<double> A, B;

  // noise ("none" disables)
  std::string noise_kind = "none";
  double noise_alpha = 2.0;
  std::optional<double> noise_scale;
  std::optional<double> noise_half_width;
  std::optional<std::pair<double, double>> noise_tail;
  Matrix<double> C;

  // cost
  Matrix<double> Q, R;

  // algorithm
  double epsilon0 = 1.0;
  double delta = 0.05;
  double eps_floor = 0.0;
  int max_redraws = 64;
  std::optional<long long> episode_length_override;
  double sizing_rho = 1.0;
  double sizing_c_psi = 1.0;
  std::optional<double> sizing_psi_const;
  double sizing_alpha = 2.0;

  Vector<double> x0;

  // monte carlo
  long replicates = 0;
  std::uint64_t master_seed = 1;

  // single-run seed
  std::uint64_t seed = 1;

  // simulate / identify
  long simulate_steps = 100;
  std::string feedback_kind = "zero";  // "zero" | "optimal" | "explicit"
  Matrix<double> feedback;             // when explicit
  double overflow_cap = 1e300;
  long identify_steps = 1000;

  // spectral
  std::optional<Matrix<double>> spectral_matrix;
  double rank_tol = 1e-8;
  double unit_tol = 1e-6;

  // psi
  std::optional<Matrix<double>> psi_matrix;
  long psi_steps = 500;
  long psi_mc = 1000;
  double psi_delta = 0.05;

  // output paths (empty: stdout only)
  std::string out_report;
  std::string out_trajectory;
  std::string out_set;
  std::string out_spectral;

  /// Fully-defaulted echo; emitted into report headers so runs are
  /// self-describing.
  nlohmann::json effective;
};

namespace detail {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

inline void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                       const std::string& ctx) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError("config: unknown key '" + item.key() + "' in " + ctx);
  }
}

inline const nlohmann::json& require_section(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("config: missing required section '") + key + "'");
  return j.at(key);
}

inline Matrix<double> parse_matrix(const nlohmann::json& j, const std::string& ctx,
                                   Eigen::Index identity_dim = -1) {
  if (j.is_string()) {
    if (j.get<std::string>() == "identity" && identity_dim > 0) {
      return Matrix<double>::Identity(identity_dim, identity_dim);
    }
    throw ConfigError("config: " + ctx + " must be a matrix (array of rows)" +
                      (identity_dim > 0 ? " or \"identity\"" : ""));
  }
  if (!j.is_array() || j.empty() || !j.front().is_array() || j.front().empty()) {
    throw ConfigError("config: " + ctx + " must be a nonempty array of rows");
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().size();
  Matrix<double> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw ConfigError("config: " + ctx + " has ragged rows");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw ConfigError("config: " + ctx + " entries must be numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
    }
  }
  return m;
}

inline double get_number(const nlohmann::json& obj, const char* key, double fallback,
                         const std::string& ctx) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number()) throw ConfigError("config: " + ctx + "." + key + " must be a number");
  return obj.at(key).get<double>();
}

inline long long get_integer(const nlohmann::json& obj, const char* key, long long fallback,
                             const std::string& ctx) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number_integer() && !obj.at(key).is_number_unsigned()) {
    throw ConfigError("config: " + ctx + "." + key + " must be an integer");
  }
  return obj.at(key).get<long long>();
}

inline std::uint64_t get_seed(const nlohmann::json& obj, const char* key, std::uint64_t fallback,
                              const std::string& ctx) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number_unsigned() && !obj.at(key).is_number_integer()) {
    throw ConfigError("config: " + ctx + "." + key + " must be a nonnegative integer");
  }
  return obj.at(key).get<std::uint64_t>();
}

}  // namespace detail

/// Deterministic generator of a stabilizable pair: draws a stable closed
/// loop D at the requested spectral radius, a random B and gain L, then
/// backs out A = D - B L so L certifies stabilizability by construction.
template <typename Scalar>
SystemParams<Scalar> random_stabilizable_system(Eigen::Index p, Eigen::Index r,
                                                Scalar closed_loop_radius, std::uint64_t seed) {
  if (p < 1 || r < 1) throw ConfigError("random_stabilizable_system: p and r must be at least 1");
  if (!(closed_loop_radius > Scalar(0)) || !(closed_loop_radius < Scalar(1))) {
    throw ConfigError("random_stabilizable_system: closed_loop_radius must be in (0,1)");
  }
  for (std::uint64_t attempt = 0;; ++attempt) {
    rng::Stream<Scalar> s(rng::derive_stream(seed, attempt));
    Matrix<Scalar> D(p, p), B(p, r), L(r, p);
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index i = 0; i < p; ++i) D(i, j) = s.normal();
    for (Eigen::Index j = 0; j < r; ++j)
      for (Eigen::Index i = 0; i < p; ++i) B(i, j) = s.normal();
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index i = 0; i < r; ++i) L(i, j) = Scalar(0.5L) * s.normal();
    const Scalar rho = spectral_radius<Scalar>(D);
    if (!(rho > Scalar(1e-8L))) continue;  // essentially nilpotent draw; retry
    D *= closed_loop_radius / rho;
    return SystemParams<Scalar>(D - B * L, B);
  }
}

/// Parses and validates a JSON experiment config; defaults are materialized
/// into cfg.effective. Unknown keys are rejected.
inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::check_keys(j, {"system", "noise", "cost", "algorithm", "x0", "mc", "seed", "simulate",
                         "identify", "spectral", "psi", "output"},
                     "top level");

  ExperimentConfig cfg;
  nlohmann::json eff;

  // --- system ---
  {
    const nlohmann::json& sys = detail::require_section(j, "system");
    if (!sys.is_object()) throw ConfigError("config: system must be an object");
    detail::check_keys(sys, {"type", "A", "B", "p", "r", "closed_loop_radius", "seed"}, "system");
    const std::string type = sys.contains("type") ? sys.at("type").get<std::string>() : "explicit";
    if (type == "explicit") {
      if (!sys.contains("A") || !sys.contains("B")) {
        throw ConfigError("config: system.type explicit requires A and B");
      }
      cfg.A = detail::parse_matrix(sys.at("A"), "system.A");
      cfg.B = detail::parse_matrix(sys.at("B"), "system.B");
      eff["system"] = {{"type", "explicit"}};
    } else if (type == "random_stabilizable") {
      const long long p = detail::get_integer(sys, "p", 0, "system");
      const long long r = detail::get_integer(sys, "r", 0, "system");
      const double radius = detail::get_number(sys, "closed_loop_radius", 0.6, "system");
      const std::uint64_t gseed = detail::get_seed(sys, "seed", 1, "system");
      if (p < 1 || r < 1) throw ConfigError("config: system.p and system.r must be at least 1");
      const SystemParams<double> generated = random_stabilizable_system<double>(
          static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(r), radius, gseed);
      cfg.A = generated.A;
      cfg.B = generated.B;
      eff["system"] = {{"type", "random_stabilizable"},
                       {"p", p},
                       {"r", r},
                       {"closed_loop_radius", radius},
                       {"seed", gseed}};
    } else {
      throw ConfigError("config: system.type must be 'explicit' or 'random_stabilizable'");
    }
    // validate via the domain type and echo the resolved matrices
    SystemParams<double> check(cfg.A, cfg.B);
    eff["system"]["A"] = detail::matrix_to_json<double>(cfg.A);
    eff["system"]["B"] = detail::matrix_to_json<double>(cfg.B);
  }
  const Eigen::Index p = cfg.A.rows();
  const Eigen::Index r = cfg.B.cols();

  // --- noise ---
  {
    cfg.C = Matrix<double>::Identity(p, p);
    if (j.contains("noise")) {
      const nlohmann::json& noise = j.at("noise");
      if (!noise.is_object()) throw ConfigError("config: noise must be an object");
      detail::check_keys(noise, {"kind", "alpha", "scale", "half_width", "C", "b1", "b2"}, "noise");
      cfg.noise_kind = noise.contains("kind") ? noise.at("kind").get<std::string>() : "gaussian";
      if (cfg.noise_kind != "none" && cfg.noise_kind != "gaussian" &&
          cfg.noise_kind != "symmetric_weibull" && cfg.noise_kind != "uniform_bounded") {
        throw ConfigError("config: noise.kind must be one of none, gaussian, symmetric_weibull, "
                          "uniform_bounded");
      }
      if (noise.contains("C")) cfg.C = detail::parse_matrix(noise.at("C"), "noise.C", p);
      if (noise.contains("alpha")) cfg.noise_alpha = detail::get_number(noise, "alpha", 2.0, "noise");
      if (noise.contains("scale")) cfg.noise_scale = detail::get_number(noise, "scale", 1.0, "noise");
      if (noise.contains("half_width")) {
        cfg.noise_half_width = detail::get_number(noise, "half_width", 1.0, "noise");
      }
      if (noise.contains("b1") != noise.contains("b2")) {
        throw ConfigError("config: noise.b1 and noise.b2 must be given together");
      }
      if (noise.contains("b1")) {
        cfg.noise_tail = {detail::get_number(noise, "b1", 1.0, "noise"),
                          detail::get_number(noise, "b2", 1.0, "noise")};
      }
    }
    if (cfg.noise_kind == "gaussian") cfg.noise_alpha = 2.0;
    if (cfg.noise_kind == "uniform_bounded") {
      cfg.noise_alpha = std::numeric_limits<double>::infinity();
    }
    eff["noise"]["kind"] = cfg.noise_kind;
    if (cfg.noise_kind != "none") {
      eff["noise"]["C"] = detail::matrix_to_json<double>(cfg.C);
      if (std::isinf(cfg.noise_alpha)) {
        eff["noise"]["alpha"] = "inf";
      } else {
        eff["noise"]["alpha"] = cfg.noise_alpha;
      }
      if (cfg.noise_scale) eff["noise"]["scale"] = *cfg.noise_scale;
      if (cfg.noise_half_width) eff["noise"]["half_width"] = *cfg.noise_half_width;
    }
  }

  // --- cost ---
  {
    cfg.Q = Matrix<double>::Identity(p, p);
    cfg.R = Matrix<double>::Identity(r, r);
    if (j.contains("cost")) {
      const nlohmann::json& cost = j.at("cost");
      if (!cost.is_object()) throw ConfigError("config: cost must be an object");
      detail::check_keys(cost, {"Q", "R"}, "cost");
      if (cost.contains("Q")) cfg.Q = detail::parse_matrix(cost.at("Q"), "cost.Q", p);
      if (cost.contains("R")) cfg.R = detail::parse_matrix(cost.at("R"), "cost.R", r);
    }
    try {
      CostMatrices<double> check(cfg.Q, cfg.R);
    } catch (const Error& e) {
      throw ConfigError(std::string("config: cost rejected: ") + e.what());
    }
    eff["cost"]["Q"] = detail::matrix_to_json<double>(cfg.Q);
    eff["cost"]["R"] = detail::matrix_to_json<double>(cfg.R);
  }

  // --- algorithm ---
  {
    const std::string ctx = "algorithm";
    nlohmann::json alg = j.contains("algorithm") ? j.at("algorithm") : nlohmann::json::object();
    if (!alg.is_object()) throw ConfigError("config: algorithm must be an object");
    detail::check_keys(alg,
                       {"epsilon0", "delta", "eps_floor", "max_redraws",
                        "episode_length_override", "sizing"},
                       ctx);
    cfg.epsilon0 = detail::get_number(alg, "epsilon0", 1.0, ctx);
    cfg.delta = detail::get_number(alg, "delta", 0.05, ctx);
    cfg.eps_floor = detail::get_number(alg, "eps_floor", 0.0, ctx);
    cfg.max_redraws = static_cast<int>(detail::get_integer(alg, "max_redraws", 64, ctx));
    if (alg.contains("episode_length_override") && !alg.at("episode_length_override").is_null()) {
      cfg.episode_length_override = detail::get_integer(alg, "episode_length_override", 0, ctx);
      if (*cfg.episode_length_override < 1) {
        throw ConfigError("config: algorithm.episode_length_override must be positive");
      }
    }
    if (!(cfg.epsilon0 > 0)) throw ConfigError("config: algorithm.epsilon0 must be positive");
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) {
      throw ConfigError("config: algorithm.delta must be in (0,1)");
    }
    if (cfg.eps_floor < 0) throw ConfigError("config: algorithm.eps_floor must be nonnegative");
    if (cfg.max_redraws < 1) throw ConfigError("config: algorithm.max_redraws must be positive");

    cfg.sizing_alpha = std::isinf(cfg.noise_alpha) ? std::numeric_limits<double>::infinity()
                                                   : cfg.noise_alpha;
    if (alg.contains("sizing")) {
      const nlohmann::json& sizing = alg.at("sizing");
      if (!sizing.is_object()) throw ConfigError("config: algorithm.sizing must be an object");
      detail::check_keys(sizing, {"rho", "c_psi", "psi_const", "alpha"}, "algorithm.sizing");
      cfg.sizing_rho = detail::get_number(sizing, "rho", 1.0, "algorithm.sizing");
      cfg.sizing_c_psi = detail::get_number(sizing, "c_psi", 1.0, "algorithm.sizing");
      if (sizing.contains("psi_const") && !sizing.at("psi_const").is_null()) {
        cfg.sizing_psi_const = detail::get_number(sizing, "psi_const", 1.0, "algorithm.sizing");
      }
      if (sizing.contains("alpha") && !sizing.at("alpha").is_null()) {
        cfg.sizing_alpha = detail::get_number(sizing, "alpha", 2.0, "algorithm.sizing");
      }
    }
    if (!(cfg.sizing_rho > 0)) throw ConfigError("config: algorithm.sizing.rho must be positive");

    eff["algorithm"] = {{"epsilon0", cfg.epsilon0},
                        {"delta", cfg.delta},
                        {"eps_floor", cfg.eps_floor},
                        {"max_redraws", cfg.max_redraws}};
    eff["algorithm"]["episode_length_override"] =
        cfg.episode_length_override ? nlohmann::json(*cfg.episode_length_override)
                                    : nlohmann::json(nullptr);
    eff["algorithm"]["sizing"] = {{"rho", cfg.sizing_rho}, {"c_psi", cfg.sizing_c_psi}};
    eff["algorithm"]["sizing"]["psi_const"] =
        cfg.sizing_psi_const ? nlohmann::json(*cfg.sizing_psi_const) : nlohmann::json(nullptr);
    eff["algorithm"]["sizing"]["alpha"] =
        std::isinf(cfg.sizing_alpha) ? nlohmann::json("inf") : nlohmann::json(cfg.sizing_alpha);
  }

  // --- x0 ---
  {
    cfg.x0 = Vector<double>::Zero(p);
    if (j.contains("x0")) {
      const nlohmann::json& x0 = j.at("x0");
      if (!x0.is_array() || x0.size() != static_cast<std::size_t>(p)) {
        throw ConfigError("config: x0 must be an array of length p");
      }
      for (std::size_t i = 0; i < x0.size(); ++i) {
        if (!x0[i].is_number()) throw ConfigError("config: x0 entries must be numbers");
        cfg.x0(static_cast<Eigen::Index>(i)) = x0[i].get<double>();
      }
    }
    nlohmann::json x0j = nlohmann::json::array();
    for (Eigen::Index i = 0; i < p; ++i) x0j.push_back(cfg.x0(i));
    eff["x0"] = std::move(x0j);
  }

  // --- mc + seed ---
  {
    if (j.contains("mc")) {
      const nlohmann::json& mc = j.at("mc");
      if (!mc.is_object()) throw ConfigError("config: mc must be an object");
      detail::check_keys(mc, {"replicates", "master_seed"}, "mc");
      cfg.replicates = static_cast<long>(detail::get_integer(mc, "replicates", 0, "mc"));
      cfg.master_seed = detail::get_seed(mc, "master_seed", 1, "mc");
      if (cfg.replicates < 0) throw ConfigError("config: mc.replicates must be nonnegative");
    }
    cfg.seed = detail::get_seed(j, "seed", 1, "top level");
    eff["mc"] = {{"replicates", cfg.replicates}, {"master_seed", cfg.master_seed}};
    eff["seed"] = cfg.seed;
  }

  // --- simulate / identify ---
  {
    if (j.contains("simulate")) {
      const nlohmann::json& sim = j.at("simulate");
      if (!sim.is_object()) throw ConfigError("config: simulate must be an object");
      detail::check_keys(sim, {"steps", "feedback", "overflow_cap"}, "simulate");
      cfg.simulate_steps = static_cast<long>(detail::get_integer(sim, "steps", 100, "simulate"));
      cfg.overflow_cap = detail::get_number(sim, "overflow_cap", 1e300, "simulate");
      if (sim.contains("feedback")) {
        const nlohmann::json& fb = sim.at("feedback");
        if (fb.is_string()) {
          cfg.feedback_kind = fb.get<std::string>();
          if (cfg.feedback_kind != "zero" && cfg.feedback_kind != "optimal") {
            throw ConfigError("config: simulate.feedback must be 'zero', 'optimal', or a matrix");
          }
        } else {
          cfg.feedback_kind = "explicit";
          cfg.feedback = detail::parse_matrix(fb, "simulate.feedback");
          if (cfg.feedback.rows() != r || cfg.feedback.cols() != p) {
            throw ConfigError("config: simulate.feedback must be r x p");
          }
        }
      }
      if (cfg.simulate_steps < 1) throw ConfigError("config: simulate.steps must be positive");
    }
    if (j.contains("identify")) {
      const nlohmann::json& idn = j.at("identify");
      if (!idn.is_object()) throw ConfigError("config: identify must be an object");
      detail::check_keys(idn, {"steps"}, "identify");
      cfg.identify_steps = static_cast<long>(detail::get_integer(idn, "steps", 1000, "identify"));
      if (cfg.identify_steps < 1) throw ConfigError("config: identify.steps must be positive");
    }
    eff["simulate"] = {{"steps", cfg.simulate_steps},
                       {"feedback", cfg.feedback_kind == "explicit"
                                        ? detail::matrix_to_json<double>(cfg.feedback)
                                        : nlohmann::json(cfg.feedback_kind)},
                       {"overflow_cap", cfg.overflow_cap}};
    eff["identify"] = {{"steps", cfg.identify_steps}};
  }

  // --- spectral ---
  if (j.contains("spectral")) {
    const nlohmann::json& sp = j.at("spectral");
    if (!sp.is_object()) throw ConfigError("config: spectral must be an object");
    detail::check_keys(sp, {"matrix", "rank_tol", "unit_tol"}, "spectral");
    if (sp.contains("matrix")) {
      cfg.spectral_matrix = detail::parse_matrix(sp.at("matrix"), "spectral.matrix");
    }
    cfg.rank_tol = detail::get_number(sp, "rank_tol", 1e-8, "spectral");
    cfg.unit_tol = detail::get_number(sp, "unit_tol", 1e-6, "spectral");
    if (!(cfg.rank_tol > 0) || !(cfg.unit_tol > 0)) {
      throw ConfigError("config: spectral tolerances must be positive");
    }
  }
  eff["spectral"] = {{"rank_tol", cfg.rank_tol}, {"unit_tol", cfg.unit_tol}};
  if (cfg.spectral_matrix) eff["spectral"]["matrix"] = detail::matrix_to_json<double>(*cfg.spectral_matrix);

  // --- psi ---
  if (j.contains("psi")) {
    const nlohmann::json& ps = j.at("psi");
    if (!ps.is_object()) throw ConfigError("config: psi must be an object");
    detail::check_keys(ps, {"matrix", "n_steps", "n_mc", "delta"}, "psi");
    if (ps.contains("matrix")) cfg.psi_matrix = detail::parse_matrix(ps.at("matrix"), "psi.matrix");
    cfg.psi_steps = static_cast<long>(detail::get_integer(ps, "n_steps", 500, "psi"));
    cfg.psi_mc = static_cast<long>(detail::get_integer(ps, "n_mc", 1000, "psi"));
    cfg.psi_delta = detail::get_number(ps, "delta", 0.05, "psi");
    if (!(cfg.psi_delta > 0 && cfg.psi_delta < 1)) {
      throw ConfigError("config: psi.delta must be in (0,1)");
    }
  }
  eff["psi"] = {{"n_steps", cfg.psi_steps}, {"n_mc", cfg.psi_mc}, {"delta", cfg.psi_delta}};
  if (cfg.psi_matrix) eff["psi"]["matrix"] = detail::matrix_to_json<double>(*cfg.psi_matrix);

  // --- output ---
  if (j.contains("output")) {
    const nlohmann::json& out = j.at("output");
    if (!out.is_object()) throw ConfigError("config: output must be an object");
    detail::check_keys(out, {"report", "trajectory", "set", "spectral"}, "output");
    if (out.contains("report")) cfg.out_report = out.at("report").get<std::string>();
    if (out.contains("trajectory")) cfg.out_trajectory = out.at("trajectory").get<std::string>();
    if (out.contains("set")) cfg.out_set = out.at("set").get<std::string>();
    if (out.contains("spectral")) cfg.out_spectral = out.at("spectral").get<std::string>();
  }
  eff["output"] = {{"report", cfg.out_report},
                   {"trajectory", cfg.out_trajectory},
                   {"set", cfg.out_set},
                   {"spectral", cfg.out_spectral}};

  cfg.effective = std::move(eff);
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

// ---- typed views of the config ----

template <typename Scalar>
Matrix<Scalar> to_scalar(const Matrix<double>& m) {
  return m.template cast<Scalar>();
}

template <typename Scalar>
SystemParams<Scalar> config_system(const ExperimentConfig& cfg) {
  return SystemParams<Scalar>(to_scalar<Scalar>(cfg.A), to_scalar<Scalar>(cfg.B));
}

template <typename Scalar>
CostMatrices<Scalar> config_cost(const ExperimentConfig& cfg) {
  return CostMatrices<Scalar>(to_scalar<Scalar>(cfg.Q), to_scalar<Scalar>(cfg.R));
}

template <typename Scalar>
std::optional<NoiseModel<Scalar>> config_noise(const ExperimentConfig& cfg) {
  if (cfg.noise_kind == "none") return std::nullopt;
  std::optional<NoiseModel<Scalar>> model;
  const Matrix<Scalar> C = to_scalar<Scalar>(cfg.C);
  if (cfg.noise_kind == "gaussian") {
    model = NoiseModel<Scalar>::gaussian(C);
  } else if (cfg.noise_kind == "symmetric_weibull") {
    model = cfg.noise_scale ? NoiseModel<Scalar>::symmetric_weibull(
                                  static_cast<Scalar>(cfg.noise_alpha), C,
                                  static_cast<Scalar>(*cfg.noise_scale))
                            : NoiseModel<Scalar>::symmetric_weibull(
                                  static_cast<Scalar>(cfg.noise_alpha), C);
  } else if (cfg.noise_kind == "uniform_bounded") {
    model = cfg.noise_half_width
                ? NoiseModel<Scalar>::uniform_bounded(C, static_cast<Scalar>(*cfg.noise_half_width))
                : NoiseModel<Scalar>::uniform_bounded(C);
  } else {
    throw ConfigError("config: unsupported noise kind " + cfg.noise_kind);
  }
  if (cfg.noise_tail) {
    model->set_tail_constants(static_cast<Scalar>(cfg.noise_tail->first),
                              static_cast<Scalar>(cfg.noise_tail->second));
  }
  return model;
}

template <typename Scalar>
SampleSizeParams<Scalar> config_sizing(const ExperimentConfig& cfg) {
  SampleSizeParams<Scalar> s;
  s.rho = static_cast<Scalar>(cfg.sizing_rho);
  s.c_psi = static_cast<Scalar>(cfg.sizing_c_psi);
  if (cfg.sizing_psi_const) s.psi_const = static_cast<Scalar>(*cfg.sizing_psi_const);
  s.alpha = static_cast<Scalar>(cfg.sizing_alpha);
  return s;
}

// ---- Monte Carlo harness ----

struct ReplicateRow {
  long index = 0;
  std::uint64_t seed = 0;
  bool success = false;
  std::string reason;  // ok | cert-false | empty-set | singular-gram | overflow | solver-nonconv
  bool has_radius = false;
  double closed_loop_radius = 0.0;
  double epsilon_tilde = 0.0;
  long long episode_length = 0;
  double wall_ms = 0.0;  // measured; excluded from byte-stable emission
};

struct RunReport {
  std::vector<ReplicateRow> rows;
  long replicates = 0;
  long successes = 0;
  bool frequency_defined = false;
  double frequency = 0.0;
  double ci95_low = 0.0;  // Wilson score interval
  double ci95_high = 0.0;
  std::uint64_t master_seed = 0;
  std::string effective_config;  // compact JSON echo
};

namespace detail {

inline void wilson_interval(long successes, long n, double& low, double& high) {
  if (n <= 0) {
    low = high = 0.0;
    return;
  }
  const double z = 1.959963984540054;
  const double phat = static_cast<double>(successes) / static_cast<double>(n);
  const double z2n = z * z / static_cast<double>(n);
  const double denom = 1.0 + z2n;
  const double center = (phat + z2n / 2.0) / denom;
  const double half =
      z * std::sqrt(phat * (1.0 - phat) / static_cast<double>(n) + z2n / (4.0 * static_cast<double>(n))) /
      denom;
  low = std::max(0.0, center - half);
  high = std::min(1.0, center + half);
}

}  // namespace detail

/// Runs `replicates` independent stabilization-plus-certification trials
/// with per-replicate derived seeds. Failure modes become tagged rows, never
/// abort the batch. Deterministic for a fixed master seed regardless of
/// worker count.
template <typename Scalar>
RunReport run_montecarlo(const ExperimentConfig& cfg, int workers = 0) {
  const SystemParams<Scalar> theta0 = config_system<Scalar>(cfg);
  const CostMatrices<Scalar> cost = config_cost<Scalar>(cfg);
  const std::optional<NoiseModel<Scalar>> noise = config_noise<Scalar>(cfg);
  const SampleSizeParams<Scalar> sizing = config_sizing<Scalar>(cfg);
  const Vector<Scalar> x0 = cfg.x0.template cast<Scalar>();

  RunReport report;
  report.replicates = cfg.replicates;
  report.master_seed = cfg.master_seed;
  report.effective_config = cfg.effective.dump();
  report.rows.resize(static_cast<std::size_t>(std::max<long>(cfg.replicates, 0)));

  StabilizationOptions<Scalar> opts;
  opts.eps_floor = static_cast<Scalar>(cfg.eps_floor);
  opts.max_redraws = cfg.max_redraws;

  parallel_for(cfg.replicates, workers, [&](long i) {
    ReplicateRow row;
    row.index = i;
    row.seed = rng::derive_stream(cfg.master_seed, static_cast<std::uint64_t>(i));
    const auto start = std::chrono::steady_clock::now();
    try {
      const StabilizingSet<Scalar> set = run_stabilization<Scalar>(
          theta0, noise, static_cast<Scalar>(cfg.epsilon0), static_cast<Scalar>(cfg.delta), sizing,
          row.seed, x0, cfg.episode_length_override, opts);
      row.epsilon_tilde = static_cast<double>(set.epsilon_tilde);
      row.episode_length = set.episode_boundaries[1] - set.episode_boundaries[0];
      const CertificationResult<Scalar> cert = certify<Scalar>(theta0, set.theta_hat, cost);
      if (cert.diagnostic.empty()) {
        row.has_radius = true;
        row.closed_loop_radius = static_cast<double>(cert.closed_loop_radius);
      }
      if (set.empty_intersection) {
        row.reason = "empty-set";
      } else if (!cert.diagnostic.empty()) {
        row.reason = "solver-nonconv";
      } else if (!cert.certified) {
        row.reason = "cert-false";
      } else {
        row.success = true;
        row.reason = "ok";
      }
    } catch (const SingularGramError&) {
      row.reason = "singular-gram";
    } catch (const OverflowError&) {
      row.reason = "overflow";
    } catch (const NonConvergenceError&) {
      row.reason = "solver-nonconv";
    } catch (const DegenerateDrawError&) {
      row.reason = "degenerate-draw";
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                      .count();
    report.rows[static_cast<std::size_t>(i)] = std::move(row);
  });

  for (const auto& row : report.rows) {
    if (row.success) ++report.successes;
  }
  if (report.replicates > 0) {
    report.frequency_defined = true;
    report.frequency = static_cast<double>(report.successes) / static_cast<double>(report.replicates);
    detail::wilson_interval(report.successes, report.replicates, report.ci95_low, report.ci95_high);
  }
  return report;
}

/// Empirical average cost of a fixed gain: n_reps simulations of length T
/// from x(0) = 0, each scored by average_cost; returns (mean, standard
/// error of the mean).
template <typename Scalar>
std::pair<double, double> evaluate_policy_cost(const SystemParams<Scalar>& theta,
                                               const Matrix<Scalar>& gain,
                                               const CostMatrices<Scalar>& cost,
                                               const std::optional<NoiseModel<Scalar>>& noise,
                                               long T, long n_reps, std::uint64_t seed,
                                               int workers = 0) {
  if (T < 1 || n_reps < 1) throw ConfigError("evaluate_policy_cost: T and n_reps must be positive");
  std::vector<double> costs(static_cast<std::size_t>(n_reps), 0.0);
  parallel_for(n_reps, workers, [&](long i) {
    const Trajectory<Scalar> traj =
        simulate<Scalar>(theta, gain, Vector<Scalar>::Zero(theta.p()), T, noise,
                         rng::derive_stream(seed, static_cast<std::uint64_t>(i)));
    costs[static_cast<std::size_t>(i)] = static_cast<double>(average_cost<Scalar>(traj, cost.Q, cost.R));
  });
  double mean = 0.0;
  for (double c : costs) mean += c;
  mean /= static_cast<double>(n_reps);
  double var = 0.0;
  for (double c : costs) var += (c - mean) * (c - mean);
  const double stderr_mean =
      n_reps > 1 ? std::sqrt(var / (static_cast<double>(n_reps) * (static_cast<double>(n_reps) - 1)))
                 : 0.0;
  return {mean, stderr_mean};
}

// ---- report emission / parsing ----

/// Byte-stable CSV emission (17 significant digits, fixed column order).
/// Wall-clock timings are volatile and only included on request.
inline void emit_report(const RunReport& report, std::ostream& os, bool include_timings = false) {
  os << "# lqstab-report v1\n";
  os << "# config," << report.effective_config << "\n";
  os << "# master_seed," << report.master_seed << "\n";
  os << "# replicates," << report.replicates << "\n";
  os << "# successes," << report.successes << "\n";
  os << "# frequency,";
  if (report.frequency_defined) {
    os << detail::format_g17(report.frequency);
  } else {
    os << "undefined";
  }
  os << "\n";
  os << "# ci95_low," << detail::format_g17(report.ci95_low) << "\n";
  os << "# ci95_high," << detail::format_g17(report.ci95_high) << "\n";
  os << "replicate,seed,success,reason,closed_loop_radius,epsilon_tilde,episode_length";
  if (include_timings) os << ",wall_ms";
  os << "\n";
  for (const auto& row : report.rows) {
    os << row.index << "," << row.seed << "," << (row.success ? 1 : 0) << "," << row.reason << ",";
    if (row.has_radius) os << detail::format_g17(row.closed_loop_radius);
    os << "," << detail::format_g17(row.epsilon_tilde) << "," << row.episode_length;
    if (include_timings) os << "," << detail::format_g17(row.wall_ms);
    os << "\n";
  }
}

inline void emit_report(const RunReport& report, const std::string& path,
                        bool include_timings = false) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  emit_report(report, f, include_timings);
  if (!f.good()) throw IoError("write failed: " + path);
}

/// Parses the emit_report CSV back into a RunReport (timings absent).
inline RunReport parse_report(std::istream& is) {
  RunReport report;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const std::string body = line.substr(2);
      const std::size_t comma = body.find(',');
      if (comma == std::string::npos) continue;  // version banner
      const std::string key = body.substr(0, comma);
      const std::string value = body.substr(comma + 1);
      if (key == "config") {
        report.effective_config = value;
      } else if (key == "master_seed") {
        report.master_seed = std::strtoull(value.c_str(), nullptr, 10);
      } else if (key == "replicates") {
        report.replicates = std::strtol(value.c_str(), nullptr, 10);
      } else if (key == "successes") {
        report.successes = std::strtol(value.c_str(), nullptr, 10);
      } else if (key == "frequency") {
        if (value != "undefined") {
          report.frequency_defined = true;
          report.frequency = std::strtod(value.c_str(), nullptr);
        }
      } else if (key == "ci95_low") {
        report.ci95_low = std::strtod(value.c_str(), nullptr);
      } else if (key == "ci95_high") {
        report.ci95_high = std::strtod(value.c_str(), nullptr);
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;  // column header row
      continue;
    }
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < 7) cells.emplace_back();
    ReplicateRow row;
    row.index = std::strtol(cells[0].c_str(), nullptr, 10);
    row.seed = std::strtoull(cells[1].c_str(), nullptr, 10);
    row.success = cells[2] == "1";
    row.reason = cells[3];
    row.has_radius = !cells[4].empty();
    if (row.has_radius) row.closed_loop_radius = std::strtod(cells[4].c_str(), nullptr);
    row.epsilon_tilde = std::strtod(cells[5].c_str(), nullptr);
    row.episode_length = std::strtoll(cells[6].c_str(), nullptr, 10);
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline RunReport parse_report_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for reading: " + path);
  return parse_report(f);
}

}  // namespace lqstab

#endif  // LQSTAB_EXPERIMENT_HPP
