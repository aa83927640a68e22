#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dcg/ensemble.hpp"

namespace dcg {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class Engine {
  kExact,
  kMeanfield,
  kMaster,
  kSnlseSingle,
  kSnlseEnsemble,
  kGammaLadder,
  kStepScaling,
};

std::string engine_name(Engine e);
Engine engine_from_name(const std::string& name);

enum class TimeUnit { kInverseOmega, kInverseOmegaLogN };

/// Flat run configuration shared by all engines. Times are entered in the
/// selected display unit; internally everything runs in 1/omega.
struct RunConfig {
  Engine engine = Engine::kExact;
  int n_particles = 0;
  double u_over_omega = 0.0;
  double omega = 1.0;
  double epsilon = 0.0;
  int m_states = 0;    // 0: suggested from epsilon
  double dt = 0.0;     // omega*dt; 0: suggested
  double t_final = 0.0;
  TimeUnit time_unit = TimeUnit::kInverseOmega;
  int n_out = 201;
  int n_traj = 0;
  uint64_t base_seed = 12345;
  std::string output_path;
  double gram_cutoff = 1e-12;
  double safety = 10.0;
  int workers = 0;
  int sign = +1;  // +1 places the initial condensate at <J'_z> = +1
  std::vector<double> eps_list;
  std::vector<int> n_list;
  std::string checkpoint_path;
  double checkpoint_interval_s = 60.0;
  std::string debug_path;
  std::string gram_spectrum_path;
  double chebyshev_tol = 1e-12;
  double alignment_tol = 1e-9;
  int block_size = 32;
  int stop_after_blocks = 0;

  bool operator==(const RunConfig&) const = default;
};

/// Strict parse: unknown keys and out-of-domain values are rejected with
/// the key name in the message.
RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_file(const std::string& path,
                            const nlohmann::json& flag_overrides);
nlohmann::json config_to_json(const RunConfig& cfg);
void validate(const RunConfig& cfg);

/// Resolved per-run values echoed into the metadata sidecar.
struct ResolvedParams {
  double gamma = 0.0;
  int m_states = 0;
  double dt = 0.0;        // in 1/omega
  double t_final = 0.0;   // in 1/omega
  int steps_per_unit_time = 0;
};
ResolvedParams resolve_params(const RunConfig& cfg);

void write_series_csv(const ObservableSeries& series, const std::string& path,
                      double time_divisor);
void write_ensemble_csv(const EnsembleResult& result, const std::string& path,
                        double time_divisor);
void write_json_file(const nlohmann::json& j, const std::string& path);

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitNonConvergence = 4;

/// Execute the configured engine, write CSV outputs plus a JSON sidecar,
/// and return the process exit code.
int run_app(const RunConfig& cfg);

}  // namespace dcg
