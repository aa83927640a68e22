#pragma once

#include <Eigen/Dense>
#include <string>

#include "dcg/su2.hpp"

namespace dcg {

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Time series of the normalized target observables J'_a = (2/N) <J_a>
/// and the generalized purity, on a strictly increasing grid in units of
/// 1/omega.
struct ObservableSeries {
  Eigen::VectorXd times;
  Eigen::VectorXd jx, jy, jz;
  Eigen::VectorXd purity;

  int size() const { return static_cast<int>(times.size()); }
  void resize(int n) {
    times.resize(n);
    jx.resize(n);
    jy.resize(n);
    jz.resize(n);
    purity.resize(n);
  }
};

Eigen::VectorXd uniform_grid(double t_final, int n_points);

/// |j, +j> for sign=+1 (all particles in the left well), |j, -j> for -1.
Eigen::VectorXcd dicke_extremal_state(int n_particles, int sign);

struct PropagationResult {
  ObservableSeries series;
  Eigen::VectorXcd final_state;
};

/// Unitary propagation by Chebyshev expansion of exp(-iH dt) with
/// Bessel coefficients, spectral bounds from Gershgorin circles plus a
/// 5% margin. Series truncation and the per-step norm check both use
/// `tol`; non-convergence aborts.
PropagationResult chebyshev_propagate(const TridiagHamiltonian& h,
                                      const Eigen::VectorXcd& psi0,
                                      const Eigen::VectorXd& t_grid,
                                      double tol);

struct MasterResult {
  ObservableSeries series;
  Eigen::MatrixXcd final_rho;
  double max_trace_deviation = 0.0;
  double max_hermiticity_deviation = 0.0;
  double min_eigenvalue = 0.0;  // most negative value seen at checks
};

/// Fourth-order integration of
///   drho/dt = -i[H, rho] - gamma sum_a [J_a, [J_a, rho]].
/// Dense, N <= 256. The internal step is step_scale * 0.1/|L|; the
/// default satisfies the stability bound, smaller values buy accuracy.
/// Positivity is monitored at grid times and a violation beyond -1e-6
/// aborts with step-size advice.
MasterResult master_propagate(const DickeOperators& ops,
                              const Eigen::MatrixXcd& h, double gamma,
                              const Eigen::MatrixXcd& rho0,
                              const Eigen::VectorXd& t_grid,
                              double step_scale = 1.0);

/// Classical spin flow
///   ds/dt = (-U sy sz, omega sz + U sx sz, -omega sy),
/// adaptive embedded 5(4) stepping; conserves |s| and
/// h(s) = -omega sx + (U/2) sz^2. Purity output is identically 1.
ObservableSeries meanfield_propagate(double omega, double u,
                                     const Eigen::Vector3d& s0,
                                     const Eigen::VectorXd& t_grid,
                                     double tol = 1e-12);

double meanfield_energy(double omega, double u, const Eigen::Vector3d& s);

}  // namespace dcg
