#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "dcg/su2.hpp"

namespace dcg {

/// Spin-coherent state on the sphere, stereographic parameter
/// z = tan(theta/2) e^{i phi} relative to the minimal-weight state |j,-j>
/// at theta = 0.
struct CoherentPoint {
  double theta = 0.0;
  double phi = 0.0;
  Complex z{0.0, 0.0};
};

/// log <z1|z2> of normalized spin-coherent states,
///   N [ log(1 + conj(z1) z2) - log(1+|z1|^2)/2 - log(1+|z2|^2)/2 ],
/// evaluated entirely in the log domain. Antipodal pairs return a
/// -infinity real part. NaN inputs are rejected.
Complex log_overlap(Complex z1, Complex z2, double n_particles);

struct GramSolveResult {
  Eigen::VectorXcd x;
  double rel_residual = 0.0;
  bool flagged = false;  // rel_residual above the adequacy threshold
};

/// Fixed non-orthogonal computational basis: M spin-coherent states on a
/// polar cap of area 4*pi*M/(N+1) around theta = 0, golden-angle layout,
/// point 0 exactly at the center. Holds the Gram matrix, its truncated
/// spectral factorization, the matrices of all first and symmetrized
/// second order monomials in J, and the same matrices transformed to the
/// orthonormalized (rank-r) coordinates used by the trajectory engine.
/// Immutable after construction.
class CoherentBasis {
 public:
  CoherentBasis(int n_particles, int m_states, double gram_cutoff);

  int n_particles() const { return n_particles_; }
  int size() const { return m_states_; }
  int rank() const { return rank_; }
  double j() const { return 0.5 * n_particles_; }
  double gram_cutoff() const { return cutoff_; }
  double cap_theta_max() const { return theta_max_; }
  double cap_area() const { return area_; }
  bool truncated() const { return rank_ < m_states_; }

  const std::vector<CoherentPoint>& points() const { return points_; }
  const Eigen::MatrixXcd& gram() const { return gram_; }
  /// Gram eigenvalues, descending, all M of them.
  const Eigen::VectorXd& gram_eigenvalues() const { return eigenvalues_; }

  /// Monomial matrices in the raw basis; a, b in {0,1,2} = {x,y,z}.
  const Eigen::MatrixXcd& monomial1(int a) const { return mono1_[a]; }
  const Eigen::MatrixXcd& monomial2(int a, int b) const {
    return mono2_[quad_index(a, b)];
  }

  /// Same operators in the orthonormalized coordinates (r x r).
  const Eigen::MatrixXcd& ortho_monomial1(int a) const { return omono1_[a]; }
  const Eigen::MatrixXcd& ortho_monomial2(int a, int b) const {
    return omono2_[quad_index(a, b)];
  }

  /// c~ = Lambda^{1/2} V^dag c  (length r).
  Eigen::VectorXcd to_ortho(const Eigen::VectorXcd& c) const;
  /// Minimum-norm representative c = V Lambda^{-1/2} c~ (length M).
  Eigen::VectorXcd from_ortho(const Eigen::VectorXcd& ct) const;

  /// Minimum-norm solution of gram * x = rhs via the truncated spectral
  /// factorization, with the relative residual reported.
  GramSolveResult solve_gram(const Eigen::VectorXcd& rhs) const;

  double gram_norm(const Eigen::VectorXcd& c) const;

  /// Index of the first point in the outermost 10% of the cap (by area).
  int boundary_start() const { return boundary_start_; }

  static int quad_index(int a, int b);

 private:
  int n_particles_;
  int m_states_;
  double cutoff_;
  double theta_max_ = 0.0;
  double area_ = 0.0;
  int rank_ = 0;
  int boundary_start_ = 0;
  std::vector<CoherentPoint> points_;
  Eigen::MatrixXcd gram_;
  Eigen::VectorXd eigenvalues_;       // descending, all M
  Eigen::MatrixXcd vectors_;          // M x r, retained
  Eigen::VectorXd kept_;              // retained eigenvalues, size r
  std::array<Eigen::MatrixXcd, 3> mono1_;
  std::array<Eigen::MatrixXcd, 6> mono2_;  // xx yy zz xy xz yz
  std::array<Eigen::MatrixXcd, 3> omono1_;
  std::array<Eigen::MatrixXcd, 6> omono2_;
};

CoherentBasis build_cap_basis(int n_particles, int m_states,
                              double gram_cutoff = 1e-12);

/// <c| scalar + sum linear_a J_a + sum Q_ab sym(J_a J_b) |c> for a
/// Gram-normalized coefficient vector c (raw basis). The imaginary
/// residue is checked and discarded.
double expectation(const Eigen::VectorXcd& c, const CoherentBasis& basis,
                   const OperatorCoeffs& coeffs);

/// (<Jx>, <Jy>, <Jz>) for Gram-normalized c.
Eigen::Vector3d spin_expectation(const Eigen::VectorXcd& c,
                                 const CoherentBasis& basis);

/// (4/N^2) sum_a <J_a>^2.
double generalized_purity(const Eigen::VectorXcd& c,
                          const CoherentBasis& basis);

/// Diagnostic dump: one "index,eigenvalue" line per Gram eigenvalue.
void write_gram_spectrum(const CoherentBasis& basis, const std::string& path);

}  // namespace dcg
