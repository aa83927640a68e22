#pragma once

#include <cstdint>
#include <string>

#include "dcg/coherent.hpp"
#include "dcg/exact.hpp"
#include "dcg/su2.hpp"

namespace dcg {

/// Parameter heuristics:
///   gamma/omega = eps / (N ln N)
///   M = ceil(ln N / eps), clamped to [8, N+1] (or the explicit override)
///   omega dt = 1 / (safety sqrt(N M))
struct SuggestedParams {
  double gamma_over_omega = 0.0;
  int m_states = 0;
  double omega_dt = 0.0;
  int steps_per_unit_time = 0;
};

SuggestedParams suggest_parameters(int n_particles, double epsilon,
                                   double safety, int m_override = 0);

struct TrajectoryConfig {
  int n_particles = 0;
  double omega = 1.0;
  double u = 0.0;
  double gamma = 0.0;  // absolute measurement strength
  double dt = 0.0;     // target step; shrunk to land on the output grid
  double t_final = 0.0;
  int n_out = 201;
  int sign = +1;  // lab-frame pole of the initial condensate
  double alignment_tol = 1e-8;
  double angle_cap = 0.1;
  int max_recenter_iter = 96;
  double norm_drift_abort = 0.5;  // pre-renormalization |norm-1| abort level
  double boundary_warn = 0.01;
  bool measurement_only = false;  // drop the Hamiltonian (H = 0 analytics)
  // extra fixed rotation of the initial condition (frame-covariance checks)
  Eigen::Vector3d init_rot_axis = Eigen::Vector3d::UnitZ();
  double init_rot_angle = 0.0;
  std::string debug_path;  // per-step diagnostics CSV when non-empty
};

struct TrajectoryDiagnostics {
  double max_norm_drift = 0.0;
  double max_recenter_angle = 0.0;
  double max_boundary_weight = 0.0;
  int max_recenter_iters = 0;
  bool under_resolved = false;
};

class TrajectoryError : public NumericalError {
 public:
  TrajectoryError(const std::string& what, long step)
      : NumericalError(what), step(step) {}
  long step = 0;
  TrajectoryDiagnostics diag;  // state of the diagnostics at failure
};

/// Body-frame state: coefficients in the orthonormalized coordinates of
/// the fixed cap basis, plus the accumulated body-to-lab rotation.
struct TrajectoryState {
  Eigen::VectorXcd ct;
  Rotation3 r_lab;
  double t = 0.0;
  long step_index = 0;
};

/// One weak-measurement realization: drift step in the fixed basis,
/// recentering rotation, renormalization. Holds preallocated workspace;
/// one engine per worker, the basis is shared read-only.
class TrajectoryEngine {
 public:
  TrajectoryEngine(const CoherentBasis& basis, const TrajectoryConfig& cfg);

  TrajectoryState initial_state();

  /// Stochastic drift update (pre-normalization coefficients). The
  /// Hamiltonian is shifted by its instantaneous expectation, which only
  /// changes the global phase.
  Eigen::VectorXcd t1_update(const TrajectoryState& st,
                             const Eigen::Vector3d& dxi) const;

  /// Rotate the state so the spin expectation points back along -z,
  /// updating r_lab; returns the applied angle.
  double recenter(TrajectoryState& st);

  /// Full step: t1 -> recenter -> renormalize.
  void step(TrajectoryState& st, const Eigen::Vector3d& dxi);

  Eigen::Vector3d body_spin(const TrajectoryState& st) const;
  Eigen::Vector3d lab_spin_normalized(const TrajectoryState& st) const;
  double purity(const TrajectoryState& st) const;
  double boundary_weight(const TrajectoryState& st) const;

  const TrajectoryDiagnostics& diagnostics() const { return diag_; }
  const CoherentBasis& basis() const { return basis_; }
  const TrajectoryConfig& config() const { return cfg_; }

 private:
  void refresh_spin(const Eigen::VectorXcd& ct) const;

  const CoherentBasis& basis_;
  TrajectoryConfig cfg_;
  OperatorCoeffs h_lab_;
  double jj1_;

  // scratch; refreshed by each public entry point for the state it is
  // handed, so calls are order-independent
  mutable Eigen::VectorXcd w_[3];
  mutable Eigen::Vector3d v_;
  mutable Eigen::MatrixXcd quad_ws_, gen_ws_;
  mutable Eigen::VectorXcd hc_ws_, rhs_ws_, gx_ws_, ggx_ws_;
  TrajectoryDiagnostics diag_;
};

struct TrajectoryResult {
  ObservableSeries series;
  TrajectoryDiagnostics diag;
  double dt_effective = 0.0;
  long n_steps = 0;
};

uint64_t trajectory_seed(uint64_t base_seed, uint64_t traj_index);

/// Deterministic given (basis, cfg, base_seed, traj_index).
TrajectoryResult run_trajectory(const CoherentBasis& basis,
                                const TrajectoryConfig& cfg,
                                uint64_t base_seed, uint64_t traj_index);

}  // namespace dcg
