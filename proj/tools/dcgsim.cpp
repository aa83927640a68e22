#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>

#include "dcg/io.hpp"
#include "dcg/version.hpp"

namespace {

struct FlagSet {
  std::string config_path;
  int n = 0;
  double u_over_omega = 0.0;
  double omega = 0.0;
  double epsilon = 0.0;
  int m = 0;
  double dt = 0.0;
  double t_final = 0.0;
  std::string time_unit;
  int n_out = 0;
  int n_traj = 0;
  std::uint64_t base_seed = 0;
  std::string output;
  double gram_cutoff = 0.0;
  double safety = 0.0;
  int workers = 0;
  int sign = 0;
  std::vector<double> eps_list;
  std::vector<int> n_list;
  std::string checkpoint;
  double checkpoint_interval = 0.0;
  std::string debug_path;
  std::string gram_spectrum;
  double chebyshev_tol = 0.0;
};

void add_common_options(CLI::App* cmd, FlagSet& f) {
  cmd->add_option("--config", f.config_path, "JSON config file; flags override");
  cmd->add_option("-N,--particles", f.n, "particle count N");
  cmd->add_option("-U,--U-over-omega", f.u_over_omega, "interaction U/omega");
  cmd->add_option("--omega", f.omega, "hopping rate omega (time unit)");
  cmd->add_option("--epsilon", f.epsilon,
                  "measurement strength, gamma = epsilon*omega/(N ln N)");
  cmd->add_option("-M,--basis-size", f.m, "coherent basis size (0 = suggested)");
  cmd->add_option("--dt", f.dt, "omega*dt (0 = suggested)");
  cmd->add_option("-T,--t-final", f.t_final, "horizon in the selected unit");
  cmd->add_option("--time-unit", f.time_unit,
                  "inverse_omega or inverse_omega_log_n");
  cmd->add_option("--n-out", f.n_out, "output grid points");
  cmd->add_option("--n-traj", f.n_traj, "trajectories in the ensemble");
  cmd->add_option("--seed", f.base_seed, "base seed");
  cmd->add_option("-o,--output", f.output, "output CSV path");
  cmd->add_option("--gram-cutoff", f.gram_cutoff,
                  "relative Gram eigenvalue cutoff");
  cmd->add_option("--safety", f.safety, "steps-per-unit-time safety factor");
  cmd->add_option("--workers", f.workers,
                  "worker threads (0 = all cores; DCG_WORKERS overrides)");
  cmd->add_option("--sign", f.sign, "initial lab pole, +1 or -1");
  cmd->add_option("--eps-list", f.eps_list, "descending epsilon ladder");
  cmd->add_option("--N-list", f.n_list, "particle counts for step scaling");
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint path stem");
  cmd->add_option("--checkpoint-interval", f.checkpoint_interval,
                  "seconds between checkpoints");
  cmd->add_option("--debug-stream", f.debug_path,
                  "per-step diagnostics CSV (single trajectory)");
  cmd->add_option("--gram-spectrum", f.gram_spectrum,
                  "dump Gram eigenvalues to this path");
  cmd->add_option("--chebyshev-tol", f.chebyshev_tol,
                  "Chebyshev truncation tolerance");
}

nlohmann::json flags_to_json(const CLI::App* cmd, const FlagSet& f) {
  nlohmann::json j = nlohmann::json::object();
  auto set_if = [&](const char* flag, const char* key, auto value) {
    if (cmd->count(flag) > 0) j[key] = value;
  };
  set_if("--particles", "N", f.n);
  set_if("--U-over-omega", "U_over_omega", f.u_over_omega);
  set_if("--omega", "omega", f.omega);
  set_if("--epsilon", "epsilon", f.epsilon);
  set_if("--basis-size", "M", f.m);
  set_if("--dt", "dt", f.dt);
  set_if("--t-final", "t_final", f.t_final);
  set_if("--time-unit", "time_unit", f.time_unit);
  set_if("--n-out", "n_out", f.n_out);
  set_if("--n-traj", "n_traj", f.n_traj);
  set_if("--seed", "base_seed", f.base_seed);
  set_if("--output", "output_path", f.output);
  set_if("--gram-cutoff", "gram_cutoff", f.gram_cutoff);
  set_if("--safety", "safety", f.safety);
  set_if("--workers", "workers", f.workers);
  set_if("--sign", "sign", f.sign);
  set_if("--eps-list", "eps_list", f.eps_list);
  set_if("--N-list", "N_list", f.n_list);
  set_if("--checkpoint", "checkpoint_path", f.checkpoint);
  set_if("--checkpoint-interval", "checkpoint_interval_s",
         f.checkpoint_interval);
  set_if("--debug-stream", "debug_path", f.debug_path);
  set_if("--gram-spectrum", "gram_spectrum_path", f.gram_spectrum);
  set_if("--chebyshev-tol", "chebyshev_tol", f.chebyshev_tol);
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"collective-spin dynamics simulators: measurement-localized "
               "stochastic trajectories with exact, master-equation and "
               "mean-field references"};
  app.set_version_flag("--version", dcg::kVersion);
  app.require_subcommand(1);

  const char* const engines[] = {"exact",        "meanfield",
                                 "master",       "snlse-single",
                                 "snlse-ensemble", "gamma-ladder",
                                 "step-scaling"};
  const char* const descriptions[] = {
      "unitary reference propagation (Chebyshev expansion)",
      "classical spin flow",
      "isotropic weak-measurement master equation (dense, N <= 256)",
      "one stochastic trajectory",
      "parallel trajectory ensemble with running statistics",
      "ensembles over a descending measurement-strength ladder",
      "minimal stable steps-per-unit-time versus system size"};

  std::vector<FlagSet> flags(std::size(engines));
  std::vector<CLI::App*> cmds;
  for (size_t i = 0; i < std::size(engines); ++i) {
    CLI::App* cmd = app.add_subcommand(engines[i], descriptions[i]);
    add_common_options(cmd, flags[i]);
    cmds.push_back(cmd);
  }

  CLI11_PARSE(app, argc, argv);

  for (size_t i = 0; i < cmds.size(); ++i) {
    if (!cmds[i]->parsed()) continue;
    try {
      nlohmann::json j = flags_to_json(cmds[i], flags[i]);
      j["engine"] = engines[i];
      const dcg::RunConfig cfg =
          dcg::parse_config_file(flags[i].config_path, j);
      return dcg::run_app(cfg);
    } catch (const dcg::ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return dcg::kExitConfig;
    } catch (const std::invalid_argument& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return dcg::kExitConfig;
    } catch (const dcg::NumericalError& e) {
      std::cerr << "numerical failure: " << e.what() << "\n";
      return dcg::kExitNumerical;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return dcg::kExitNumerical;
    }
  }
  return dcg::kExitConfig;
}
