#pragma once

#include <optional>
#include <vector>

#include "dcg/snlse.hpp"

namespace dcg {

struct EnsembleConfig {
  TrajectoryConfig traj;
  int n_traj = 0;
  uint64_t base_seed = 12345;
  int workers = 0;     // 0 = hardware concurrency
  int block_size = 32; // trajectories per accumulation block
  double max_failure_fraction = 0.01;
  std::string checkpoint_path;          // stem; empty disables
  double checkpoint_interval_s = 60.0;
  int stop_after_blocks = 0;            // 0 = run to completion
  double gram_cutoff = 1e-12;           // recorded in the checkpoint hash
};

/// Per-block partial sums, accumulated in trajectory-index order.
/// Merging blocks in index order makes the ensemble mean independent of
/// the worker schedule.
struct BlockSums {
  long b_index = 0;
  long count = 0;
  long failures = 0;
  double max_boundary_weight = 0.0;
  double max_norm_drift = 0.0;
  Eigen::ArrayXXd sums;  // n_times x 8: jx jy jz purity then squares
};

struct EnsembleResult {
  ObservableSeries mean;  // purity column = purity of the mean spin
  Eigen::VectorXd stderr_jx, stderr_jy, stderr_jz;
  Eigen::VectorXd purity_mean_of_traj;
  int n_traj = 0;
  int n_succeeded = 0;
  int n_failed = 0;
  bool complete = true;
  double max_boundary_weight = 0.0;
  double max_norm_drift = 0.0;
};

EnsembleResult run_ensemble(const CoherentBasis& basis,
                            const EnsembleConfig& cfg);

/// Accumulator core, exposed for direct tests of the merge and failure
/// policy. `series` entries are nullopt for failed trajectories.
EnsembleResult merge_blocks(const std::vector<BlockSums>& blocks,
                            const EnsembleConfig& cfg, bool complete);
BlockSums accumulate_block(
    long b_index,
    const std::vector<std::optional<TrajectoryResult>>& results);

struct LadderConfig {
  int n_particles = 0;
  double omega = 1.0;
  double u = 0.0;
  double t_final = 0.0;
  int n_out = 201;
  int n_traj = 0;
  uint64_t base_seed = 12345;
  int workers = 0;
  double safety = 10.0;
  double gram_cutoff = 1e-12;
  int sign = +1;
  int m_override = 0;  // 0: M per the heuristic for each epsilon
  std::vector<double> eps_list;  // descending measurement strengths
};

struct LadderEntry {
  double epsilon = 0.0;
  SuggestedParams params;
  EnsembleResult result;
};

struct LadderReport {
  std::vector<LadderEntry> entries;
  // distance/band between entry k and k+1, max over observables of the
  // RMS over the grid
  std::vector<double> successive_distance;
  std::vector<double> successive_band;
  bool converged = false;
  std::string verdict;
};

LadderReport gamma_ladder(const LadderConfig& cfg);

struct ScalingProtocol {
  double epsilon = 0.3;
  double horizon_log_n_factor = 0.5;  // horizon = factor * ln(N) / omega
  double drift_threshold = 0.10;      // pre-renormalization norm drift
  double bracket_rtol = 0.10;
  double safety_start = 10.0;
  uint64_t seed = 777;
  double omega = 1.0;
  double u = 2.0;
  double gram_cutoff = 1e-12;
};

struct ScalingPoint {
  int n_particles = 0;
  int m_states = 0;
  int k_min = 0;            // minimal stable steps per unit time
  bool bracketed = false;
  bool doubled_stable = false;
};

struct ScalingReport {
  std::vector<ScalingPoint> points;
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  std::vector<double> residuals;
  bool fit_ok = false;
};

ScalingReport step_scaling_experiment(const std::vector<int>& n_list,
                                      int m_states,
                                      const ScalingProtocol& protocol);

}  // namespace dcg
