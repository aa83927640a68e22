#pragma once

#include <Eigen/Dense>
#include <complex>
#include <utility>

namespace dcg {

using Complex = std::complex<double>;

/// Collective spin operators J_x, J_y, J_z for N particles in the
/// (N+1)-dimensional symmetric sector, basis |j,m>, j = N/2, m ascending.
/// Dense storage; intended for reference engines and oracles, not for
/// large-N trajectory work.
struct DickeOperators {
  int n_particles = 0;
  Eigen::MatrixXcd jx, jy, jz;

  int dim() const { return n_particles + 1; }
  double j() const { return 0.5 * n_particles; }
};

DickeOperators build_collective_operators(int n_particles);

/// H = -omega*Jx + (U/N)*Jz^2, dense.
Eigen::MatrixXcd build_hamiltonian(const DickeOperators& ops, double omega,
                                   double u);

/// Same Hamiltonian in banded form: real symmetric tridiagonal.
struct TridiagHamiltonian {
  int n_particles = 0;
  Eigen::VectorXd diag;     // (U/N) m^2
  Eigen::VectorXd offdiag;  // -(omega/2) * ladder, size dim-1

  int dim() const { return n_particles + 1; }
  void apply(const Eigen::VectorXcd& in, Eigen::VectorXcd& out) const;
  /// Gershgorin bounds (emin, emax), no safety padding.
  std::pair<double, double> gershgorin() const;
};

TridiagHamiltonian build_tridiag_hamiltonian(int n_particles, double omega,
                                             double u);

/// Proper rotation with drift control. Compositions re-orthonormalize
/// via polar decomposition after a fixed count or when R^T R leaves the
/// identity by more than 1e-12.
class Rotation3 {
 public:
  Rotation3() : m_(Eigen::Matrix3d::Identity()) {}

  static Rotation3 identity() { return Rotation3(); }
  static Rotation3 axis_angle(const Eigen::Vector3d& axis, double angle);
  static Rotation3 from_matrix(const Eigen::Matrix3d& m);

  const Eigen::Matrix3d& matrix() const { return m_; }
  Rotation3 inverse() const;
  Rotation3 operator*(const Rotation3& rhs) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return m_ * v; }

  /// (unit axis, angle in [0, pi]). Axis is arbitrary for angle 0.
  std::pair<Eigen::Vector3d, double> to_axis_angle() const;

  double orthogonality_defect() const;

 private:
  explicit Rotation3(const Eigen::Matrix3d& m, int compositions = 0)
      : m_(m), compositions_(compositions) {}
  void renormalize();

  Eigen::Matrix3d m_;
  int compositions_ = 0;
};

/// Linear-plus-quadratic coefficient form over {Jx, Jy, Jz}:
///   scalar + sum_a linear[a] J_a + sum_ab quadratic(a,b) sym(J_a J_b),
/// with sym(A,B) = (AB + BA)/2 and quadratic symmetric.
struct OperatorCoeffs {
  double scalar = 0.0;
  Eigen::Vector3d linear = Eigen::Vector3d::Zero();
  Eigen::Matrix3d quadratic = Eigen::Matrix3d::Zero();
};

/// Lab-frame Hamiltonian coefficients: linear = (-omega, 0, 0),
/// quadratic = diag(0, 0, U/N).
OperatorCoeffs hamiltonian_coeffs(int n_particles, double omega, double u);

/// Image of the coefficients under conjugation by the unitary U(R)
/// fixed by the convention U(R)^dag J_a U(R) = sum_b R_ab J_b:
/// linear -> R^T linear, quadratic -> R^T Q R, scalar unchanged.
OperatorCoeffs rotate_coeffs(const OperatorCoeffs& coeffs, const Rotation3& r);

/// Dense unitary U(R) in the Dicke basis realizing the convention above;
/// used by reference engines and tests.
Eigen::MatrixXcd rotation_unitary(const DickeOperators& ops,
                                  const Eigen::Vector3d& axis, double angle);

}  // namespace dcg
