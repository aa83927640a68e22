#include "dcg/io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dcg/version.hpp"

namespace dcg {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ensure_parent_dir(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

const char* const kKnownKeys[] = {
    "engine",        "N",

    "U_over_omega",  "omega",
    "epsilon",       "M",
    "dt",            "t_final",
    "time_unit",     "n_out",
    "n_traj",        "base_seed",
    "output_path",   "gram_cutoff",
    "safety",        "workers",
    "sign",          "eps_list",
    "N_list",        "checkpoint_path",
    "checkpoint_interval_s",
    "debug_path",    "gram_spectrum_path",
    "chebyshev_tol", "alignment_tol",
    "block_size",    "stop_after_blocks",
};

template <typename T>
T get_checked(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key +
                      "': wrong type or value");
  }
}

}  // namespace

std::string engine_name(Engine e) {
  switch (e) {
    case Engine::kExact: return "exact";
    case Engine::kMeanfield: return "meanfield";
    case Engine::kMaster: return "master";
    case Engine::kSnlseSingle: return "snlse-single";
    case Engine::kSnlseEnsemble: return "snlse-ensemble";
    case Engine::kGammaLadder: return "gamma-ladder";
    case Engine::kStepScaling: return "step-scaling";
  }
  return "unknown";
}

Engine engine_from_name(const std::string& name) {
  for (Engine e : {Engine::kExact, Engine::kMeanfield, Engine::kMaster,
                   Engine::kSnlseSingle, Engine::kSnlseEnsemble,
                   Engine::kGammaLadder, Engine::kStepScaling}) {
    if (engine_name(e) == name) return e;
  }
  throw ConfigError("config key 'engine': unknown engine '" + name + "'");
}

RunConfig parse_config(const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : kKnownKeys) {
      if (key == k) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("config key '" + key + "' is not recognized");
  }
  RunConfig cfg;
  if (!j.contains("engine")) throw ConfigError("config key 'engine' is required");
  cfg.engine = engine_from_name(get_checked<std::string>(j, "engine", ""));
  cfg.n_particles = get_checked<int>(j, "N", cfg.n_particles);
  cfg.u_over_omega = get_checked<double>(j, "U_over_omega", cfg.u_over_omega);
  cfg.omega = get_checked<double>(j, "omega", cfg.omega);
  cfg.epsilon = get_checked<double>(j, "epsilon", cfg.epsilon);
  cfg.m_states = get_checked<int>(j, "M", cfg.m_states);
  cfg.dt = get_checked<double>(j, "dt", cfg.dt);
  cfg.t_final = get_checked<double>(j, "t_final", cfg.t_final);
  const std::string unit =
      get_checked<std::string>(j, "time_unit", "inverse_omega");
  if (unit == "inverse_omega") {
    cfg.time_unit = TimeUnit::kInverseOmega;
  } else if (unit == "inverse_omega_log_n") {
    cfg.time_unit = TimeUnit::kInverseOmegaLogN;
  } else {
    throw ConfigError(
        "config key 'time_unit': expected 'inverse_omega' or "
        "'inverse_omega_log_n'");
  }
  cfg.n_out = get_checked<int>(j, "n_out", cfg.n_out);
  cfg.n_traj = get_checked<int>(j, "n_traj", cfg.n_traj);
  cfg.base_seed = get_checked<uint64_t>(j, "base_seed", cfg.base_seed);
  cfg.output_path = get_checked<std::string>(j, "output_path", cfg.output_path);
  cfg.gram_cutoff = get_checked<double>(j, "gram_cutoff", cfg.gram_cutoff);
  cfg.safety = get_checked<double>(j, "safety", cfg.safety);
  cfg.workers = get_checked<int>(j, "workers", cfg.workers);
  cfg.sign = get_checked<int>(j, "sign", cfg.sign);
  cfg.eps_list = get_checked<std::vector<double>>(j, "eps_list", cfg.eps_list);
  cfg.n_list = get_checked<std::vector<int>>(j, "N_list", cfg.n_list);
  cfg.checkpoint_path =
      get_checked<std::string>(j, "checkpoint_path", cfg.checkpoint_path);
  cfg.checkpoint_interval_s = get_checked<double>(j, "checkpoint_interval_s",
                                                  cfg.checkpoint_interval_s);
  cfg.debug_path = get_checked<std::string>(j, "debug_path", cfg.debug_path);
  cfg.gram_spectrum_path =
      get_checked<std::string>(j, "gram_spectrum_path", cfg.gram_spectrum_path);
  cfg.chebyshev_tol =
      get_checked<double>(j, "chebyshev_tol", cfg.chebyshev_tol);
  cfg.alignment_tol =
      get_checked<double>(j, "alignment_tol", cfg.alignment_tol);
  cfg.block_size = get_checked<int>(j, "block_size", cfg.block_size);
  cfg.stop_after_blocks =
      get_checked<int>(j, "stop_after_blocks", cfg.stop_after_blocks);
  validate(cfg);
  return cfg;
}

RunConfig parse_config_file(const std::string& path,
                            const nlohmann::json& flag_overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file '" + path + "' is not readable");
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file '" + path + "': " + e.what());
    }
    if (!j.is_object()) {
      throw ConfigError("config file '" + path + "': expected a JSON object");
    }
  }
  for (const auto& [key, value] : flag_overrides.items()) {
    j[key] = value;
  }
  return parse_config(j);
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["engine"] = engine_name(cfg.engine);
  j["N"] = cfg.n_particles;
  j["U_over_omega"] = cfg.u_over_omega;
  j["omega"] = cfg.omega;
  j["epsilon"] = cfg.epsilon;
  j["M"] = cfg.m_states;
  j["dt"] = cfg.dt;
  j["t_final"] = cfg.t_final;
  j["time_unit"] = cfg.time_unit == TimeUnit::kInverseOmega
                       ? "inverse_omega"
                       : "inverse_omega_log_n";
  j["n_out"] = cfg.n_out;
  j["n_traj"] = cfg.n_traj;
  j["base_seed"] = cfg.base_seed;
  j["output_path"] = cfg.output_path;
  j["gram_cutoff"] = cfg.gram_cutoff;
  j["safety"] = cfg.safety;
  j["workers"] = cfg.workers;
  j["sign"] = cfg.sign;
  j["eps_list"] = cfg.eps_list;
  j["N_list"] = cfg.n_list;
  j["checkpoint_path"] = cfg.checkpoint_path;
  j["checkpoint_interval_s"] = cfg.checkpoint_interval_s;
  j["debug_path"] = cfg.debug_path;
  j["gram_spectrum_path"] = cfg.gram_spectrum_path;
  j["chebyshev_tol"] = cfg.chebyshev_tol;
  j["alignment_tol"] = cfg.alignment_tol;
  j["block_size"] = cfg.block_size;
  j["stop_after_blocks"] = cfg.stop_after_blocks;
  return j;
}

void validate(const RunConfig& cfg) {
  const bool needs_n = cfg.engine != Engine::kStepScaling;
  if (needs_n && cfg.n_particles < 1) {
    throw ConfigError("config key 'N': expected a positive particle count");
  }
  if (!(cfg.omega > 0.0)) {
    throw ConfigError("config key 'omega': expected a positive rate");
  }
  if (cfg.dt < 0.0) {
    throw ConfigError("config key 'dt': expected a positive step (or 0 for "
                      "the suggested value)");
  }
  if (cfg.m_states < 0 ||
      (needs_n && cfg.m_states > cfg.n_particles + 1)) {
    throw ConfigError("config key 'M': expected 0 (auto) or 1 <= M <= N+1");
  }
  if (cfg.n_out < 2) {
    throw ConfigError("config key 'n_out': expected at least 2 grid points");
  }
  if (!(cfg.gram_cutoff > 0.0) || cfg.gram_cutoff >= 1.0) {
    throw ConfigError("config key 'gram_cutoff': expected a value in (0,1)");
  }
  if (!(cfg.safety >= 5.0)) {
    throw ConfigError("config key 'safety': expected safety >= 5");
  }
  if (cfg.sign != 1 && cfg.sign != -1) {
    throw ConfigError("config key 'sign': expected +1 or -1");
  }
  if (cfg.workers < 0) {
    throw ConfigError("config key 'workers': expected 0 (auto) or a positive "
                      "count");
  }
  if (cfg.block_size < 1) {
    throw ConfigError("config key 'block_size': expected a positive count");
  }

  const bool needs_time = cfg.engine != Engine::kStepScaling;
  if (needs_time && !(cfg.t_final > 0.0)) {
    throw ConfigError("config key 't_final': expected a positive horizon");
  }
  switch (cfg.engine) {
    case Engine::kExact:
    case Engine::kMeanfield:
      break;
    case Engine::kMaster:
      if (!(cfg.epsilon > 0.0)) {
        throw ConfigError("config key 'epsilon': required and positive for "
                          "the master engine");
      }
      if (cfg.n_particles > 256) {
        throw ConfigError("config key 'N': master engine is limited to N <= "
                          "256");
      }
      break;
    case Engine::kSnlseSingle:
      if (!(cfg.epsilon > 0.0)) {
        throw ConfigError("config key 'epsilon': required and positive for "
                          "sNLSE engines");
      }
      break;
    case Engine::kSnlseEnsemble:
      if (!(cfg.epsilon > 0.0)) {
        throw ConfigError("config key 'epsilon': required and positive for "
                          "sNLSE engines");
      }
      if (cfg.n_traj < 2) {
        throw ConfigError("config key 'n_traj': expected at least 2 for the "
                          "ensemble engine");
      }
      break;
    case Engine::kGammaLadder:
      if (cfg.eps_list.size() < 1) {
        throw ConfigError("config key 'eps_list': required for gamma-ladder");
      }
      if (cfg.n_traj < 2) {
        throw ConfigError("config key 'n_traj': expected at least 2 for "
                          "gamma-ladder");
      }
      break;
    case Engine::kStepScaling:
      if (cfg.n_list.size() < 2) {
        throw ConfigError("config key 'N_list': need at least two sizes; fit "
                          "refused otherwise");
      }
      break;
  }
}

ResolvedParams resolve_params(const RunConfig& cfg) {
  ResolvedParams p;
  const double log_n =
      std::log(static_cast<double>(std::max(cfg.n_particles, 2)));
  p.t_final = cfg.t_final * (cfg.time_unit == TimeUnit::kInverseOmegaLogN
                                 ? log_n
                                 : 1.0) /
              cfg.omega;
  if (cfg.engine == Engine::kExact || cfg.engine == Engine::kMeanfield) {
    return p;
  }
  p.gamma = cfg.epsilon * cfg.omega / (cfg.n_particles * log_n);
  if (cfg.engine == Engine::kMaster) return p;
  const SuggestedParams sp = suggest_parameters(cfg.n_particles, cfg.epsilon,
                                                cfg.safety, cfg.m_states);
  p.m_states = sp.m_states;
  p.dt = (cfg.dt > 0.0 ? cfg.dt : sp.omega_dt) / cfg.omega;
  p.steps_per_unit_time =
      static_cast<int>(std::ceil(1.0 / (p.dt * cfg.omega)));
  return p;
}

void write_series_csv(const ObservableSeries& series, const std::string& path,
                      double time_divisor) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_series_csv: cannot open " + path);
  out << "t,jx,jy,jz,purity\n";
  for (int i = 0; i < series.size(); ++i) {
    out << fmt(series.times(i) / time_divisor) << ',' << fmt(series.jx(i))
        << ',' << fmt(series.jy(i)) << ',' << fmt(series.jz(i)) << ','
        << fmt(series.purity(i)) << '\n';
  }
}

void write_ensemble_csv(const EnsembleResult& result, const std::string& path,
                        double time_divisor) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_ensemble_csv: cannot open " + path);
  out << "t,jx,jy,jz,purity,stderr_jx,stderr_jy,stderr_jz,"
         "purity_mean_of_traj\n";
  const auto& s = result.mean;
  for (int i = 0; i < s.size(); ++i) {
    out << fmt(s.times(i) / time_divisor) << ',' << fmt(s.jx(i)) << ','
        << fmt(s.jy(i)) << ',' << fmt(s.jz(i)) << ',' << fmt(s.purity(i))
        << ',' << fmt(result.stderr_jx(i)) << ',' << fmt(result.stderr_jy(i))
        << ',' << fmt(result.stderr_jz(i)) << ','
        << fmt(result.purity_mean_of_traj(i)) << '\n';
  }
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_json_file: cannot open " + path);
  out << j.dump(2) << '\n';
}

namespace {

std::string sidecar_path(const std::string& output_path) {
  return output_path + ".meta.json";
}

TrajectoryConfig make_traj_config(const RunConfig& cfg,
                                  const ResolvedParams& p) {
  TrajectoryConfig tc;
  tc.n_particles = cfg.n_particles;
  tc.omega = cfg.omega;
  tc.u = cfg.u_over_omega * cfg.omega;
  tc.gamma = p.gamma;
  tc.dt = p.dt;
  tc.t_final = p.t_final;
  tc.n_out = cfg.n_out;
  tc.sign = cfg.sign;
  tc.alignment_tol = cfg.alignment_tol;
  tc.debug_path = cfg.debug_path;
  return tc;
}

std::string eps_tag(double eps) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", eps);
  std::string tag(buf);
  for (auto& c : tag) {
    if (c == '.') c = 'p';
  }
  return tag;
}

}  // namespace

int run_app(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  validate(cfg);
  if (const char* env = std::getenv("DCG_WORKERS")) {
    cfg.workers = std::max(0, std::atoi(env));
  }
  if (cfg.output_path.empty()) {
    throw ConfigError("config key 'output_path': required");
  }
  const auto wall_start = std::chrono::steady_clock::now();
  const ResolvedParams p = resolve_params(cfg);
  const double log_n =
      std::log(static_cast<double>(std::max(cfg.n_particles, 2)));
  const double time_div =
      cfg.time_unit == TimeUnit::kInverseOmegaLogN ? log_n / cfg.omega : 1.0;

  nlohmann::json meta;
  meta["config"] = config_to_json(cfg);
  meta["version"] = kVersion;
  meta["resolved"] = {{"gamma", p.gamma},
                      {"M", p.m_states},
                      {"dt", p.dt},
                      {"t_final_inverse_omega", p.t_final},
                      {"steps_per_unit_time", p.steps_per_unit_time}};
  int exit_code = kExitOk;
  std::vector<std::string> outputs;

  switch (cfg.engine) {
    case Engine::kExact: {
      const auto h = build_tridiag_hamiltonian(cfg.n_particles, cfg.omega,
                                               cfg.u_over_omega * cfg.omega);
      const auto psi0 = dicke_extremal_state(cfg.n_particles, cfg.sign);
      const auto grid = uniform_grid(p.t_final, cfg.n_out);
      const auto res = chebyshev_propagate(h, psi0, grid, cfg.chebyshev_tol);
      write_series_csv(res.series, cfg.output_path, time_div);
      outputs.push_back(cfg.output_path);
      break;
    }
    case Engine::kMeanfield: {
      const Eigen::Vector3d s0(0.0, 0.0, static_cast<double>(cfg.sign));
      const auto grid = uniform_grid(p.t_final, cfg.n_out);
      const auto series =
          meanfield_propagate(cfg.omega, cfg.u_over_omega * cfg.omega, s0, grid);
      write_series_csv(series, cfg.output_path, time_div);
      outputs.push_back(cfg.output_path);
      break;
    }
    case Engine::kMaster: {
      const auto ops = build_collective_operators(cfg.n_particles);
      const auto h = build_hamiltonian(ops, cfg.omega,
                                       cfg.u_over_omega * cfg.omega);
      const auto psi0 = dicke_extremal_state(cfg.n_particles, cfg.sign);
      const Eigen::MatrixXcd rho0 = psi0 * psi0.adjoint();
      const auto grid = uniform_grid(p.t_final, cfg.n_out);
      const auto res = master_propagate(ops, h, p.gamma, rho0, grid);
      write_series_csv(res.series, cfg.output_path, time_div);
      meta["master"] = {{"max_trace_deviation", res.max_trace_deviation},
                        {"min_eigenvalue", res.min_eigenvalue}};
      outputs.push_back(cfg.output_path);
      break;
    }
    case Engine::kSnlseSingle: {
      const auto basis =
          build_cap_basis(cfg.n_particles, p.m_states, cfg.gram_cutoff);
      if (!cfg.gram_spectrum_path.empty()) {
        write_gram_spectrum(basis, cfg.gram_spectrum_path);
      }
      const auto tc = make_traj_config(cfg, p);
      const auto res = run_trajectory(basis, tc, cfg.base_seed, 0);
      write_series_csv(res.series, cfg.output_path, time_div);
      meta["trajectory"] = {
          {"max_norm_drift", res.diag.max_norm_drift},
          {"max_recenter_angle", res.diag.max_recenter_angle},
          {"max_boundary_weight", res.diag.max_boundary_weight},
          {"under_resolved", res.diag.under_resolved},
          {"dt_effective", res.dt_effective},
          {"n_steps", res.n_steps}};
      meta["basis"] = {{"rank", basis.rank()}, {"M", basis.size()}};
      outputs.push_back(cfg.output_path);
      break;
    }
    case Engine::kSnlseEnsemble: {
      const auto basis =
          build_cap_basis(cfg.n_particles, p.m_states, cfg.gram_cutoff);
      if (!cfg.gram_spectrum_path.empty()) {
        write_gram_spectrum(basis, cfg.gram_spectrum_path);
      }
      EnsembleConfig ens;
      ens.traj = make_traj_config(cfg, p);
      ens.n_traj = cfg.n_traj;
      ens.base_seed = cfg.base_seed;
      ens.workers = cfg.workers;
      ens.block_size = cfg.block_size;
      ens.checkpoint_path = cfg.checkpoint_path;
      ens.checkpoint_interval_s = cfg.checkpoint_interval_s;
      ens.stop_after_blocks = cfg.stop_after_blocks;
      ens.gram_cutoff = cfg.gram_cutoff;
      const auto res = run_ensemble(basis, ens);
      write_ensemble_csv(res, cfg.output_path, time_div);
      meta["ensemble"] = {{"n_traj", res.n_traj},
                          {"n_succeeded", res.n_succeeded},
                          {"n_failed", res.n_failed},
                          {"complete", res.complete},
                          {"max_boundary_weight", res.max_boundary_weight},
                          {"max_norm_drift", res.max_norm_drift}};
      meta["basis"] = {{"rank", basis.rank()}, {"M", basis.size()}};
      outputs.push_back(cfg.output_path);
      break;
    }
    case Engine::kGammaLadder: {
      LadderConfig lc;
      lc.n_particles = cfg.n_particles;
      lc.omega = cfg.omega;
      lc.u = cfg.u_over_omega * cfg.omega;
      lc.t_final = p.t_final;
      lc.n_out = cfg.n_out;
      lc.n_traj = cfg.n_traj;
      lc.base_seed = cfg.base_seed;
      lc.workers = cfg.workers;
      lc.safety = cfg.safety;
      lc.gram_cutoff = cfg.gram_cutoff;
      lc.sign = cfg.sign;
      lc.m_override = cfg.m_states;
      lc.eps_list = cfg.eps_list;
      const auto report = gamma_ladder(lc);
      nlohmann::json entries = nlohmann::json::array();
      for (const auto& entry : report.entries) {
        const std::string path =
            cfg.output_path + "_eps" + eps_tag(entry.epsilon) + ".csv";
        write_ensemble_csv(entry.result, path, time_div);
        outputs.push_back(path);
        entries.push_back({{"epsilon", entry.epsilon},
                           {"M", entry.params.m_states},
                           {"gamma_over_omega", entry.params.gamma_over_omega},
                           {"omega_dt", entry.params.omega_dt},
                           {"output", path}});
      }
      meta["ladder"] = {{"entries", entries},
                        {"successive_distance", report.successive_distance},
                        {"successive_band", report.successive_band},
                        {"converged", report.converged},
                        {"verdict", report.verdict}};
      std::cout << "gamma-ladder: " << report.verdict << "\n";
      if (!report.converged) exit_code = kExitNonConvergence;
      break;
    }
    case Engine::kStepScaling: {
      ScalingProtocol protocol;
      protocol.omega = cfg.omega;
      protocol.u = cfg.u_over_omega * cfg.omega;
      if (cfg.epsilon > 0.0) protocol.epsilon = cfg.epsilon;
      protocol.seed = cfg.base_seed;
      protocol.gram_cutoff = cfg.gram_cutoff;
      const int m = cfg.m_states > 0 ? cfg.m_states : 60;
      const auto report = step_scaling_experiment(cfg.n_list, m, protocol);
      ensure_parent_dir(cfg.output_path);
      std::ofstream out(cfg.output_path);
      out << "N,n,M,k_min,bracketed,doubled_stable\n";
      for (const auto& pt : report.points) {
        out << pt.n_particles << ',' << (pt.n_particles + 1) << ','
            << pt.m_states << ',' << pt.k_min << ',' << (pt.bracketed ? 1 : 0)
            << ',' << (pt.doubled_stable ? 1 : 0) << '\n';
      }
      outputs.push_back(cfg.output_path);
      meta["scaling"] = {{"slope", report.slope},
                         {"intercept", report.intercept},
                         {"slope_stderr", report.slope_stderr},
                         {"residuals", report.residuals},
                         {"fit_ok", report.fit_ok}};
      std::cout << "step-scaling: slope " << report.slope << " +- "
                << report.slope_stderr << "\n";
      break;
    }
  }

  const double wall_s = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - wall_start)
                            .count();
  meta["wall_time_s"] = wall_s;
  meta["outputs"] = outputs;
  write_json_file(meta, sidecar_path(cfg.output_path));
  return exit_code;
}

}  // namespace dcg
