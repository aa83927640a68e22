#include "dcg/su2.hpp"

#include <cmath>
#include <stdexcept>

namespace dcg {

namespace {
constexpr int kMaxOracleParticles = 4096;
constexpr int kRenormEvery = 1000;
constexpr double kOrthTol = 1e-12;
}  // namespace

DickeOperators build_collective_operators(int n_particles) {
  if (n_particles < 1) {
    throw std::invalid_argument("build_collective_operators: N must be >= 1");
  }
  if (n_particles > kMaxOracleParticles) {
    throw std::invalid_argument(
        "build_collective_operators: dense operators limited to N <= 4096");
  }
  const int n = n_particles + 1;
  const double j = 0.5 * n_particles;

  DickeOperators ops;
  ops.n_particles = n_particles;
  ops.jx = Eigen::MatrixXcd::Zero(n, n);
  ops.jy = Eigen::MatrixXcd::Zero(n, n);
  ops.jz = Eigen::MatrixXcd::Zero(n, n);

  for (int i = 0; i < n; ++i) {
    const double m = -j + i;
    ops.jz(i, i) = m;
  }
  for (int i = 0; i + 1 < n; ++i) {
    const double m = -j + i;
    const double s = std::sqrt(j * (j + 1.0) - m * (m + 1.0));  // J+ ladder
    ops.jx(i + 1, i) = 0.5 * s;
    ops.jx(i, i + 1) = 0.5 * s;
    ops.jy(i + 1, i) = Complex(0.0, -0.5 * s);
    ops.jy(i, i + 1) = Complex(0.0, 0.5 * s);
  }
  return ops;
}

Eigen::MatrixXcd build_hamiltonian(const DickeOperators& ops, double omega,
                                   double u) {
  if (!(omega > 0.0)) {
    throw std::invalid_argument("build_hamiltonian: omega must be positive");
  }
  const double un = u / ops.n_particles;
  return -omega * ops.jx + un * (ops.jz * ops.jz);
}

void TridiagHamiltonian::apply(const Eigen::VectorXcd& in,
                               Eigen::VectorXcd& out) const {
  const int n = dim();
  out.resize(n);
  for (int i = 0; i < n; ++i) {
    Complex v = diag(i) * in(i);
    if (i > 0) v += offdiag(i - 1) * in(i - 1);
    if (i + 1 < n) v += offdiag(i) * in(i + 1);
    out(i) = v;
  }
}

std::pair<double, double> TridiagHamiltonian::gershgorin() const {
  const int n = dim();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int i = 0; i < n; ++i) {
    double r = 0.0;
    if (i > 0) r += std::abs(offdiag(i - 1));
    if (i + 1 < n) r += std::abs(offdiag(i));
    lo = std::min(lo, diag(i) - r);
    hi = std::max(hi, diag(i) + r);
  }
  return {lo, hi};
}

TridiagHamiltonian build_tridiag_hamiltonian(int n_particles, double omega,
                                             double u) {
  if (n_particles < 1) {
    throw std::invalid_argument("build_tridiag_hamiltonian: N must be >= 1");
  }
  if (!(omega > 0.0)) {
    throw std::invalid_argument(
        "build_tridiag_hamiltonian: omega must be positive");
  }
  const int n = n_particles + 1;
  const double j = 0.5 * n_particles;
  const double un = u / n_particles;

  TridiagHamiltonian h;
  h.n_particles = n_particles;
  h.diag.resize(n);
  h.offdiag.resize(n - 1);
  for (int i = 0; i < n; ++i) {
    const double m = -j + i;
    h.diag(i) = un * m * m;
  }
  for (int i = 0; i + 1 < n; ++i) {
    const double m = -j + i;
    h.offdiag(i) = -0.5 * omega * std::sqrt(j * (j + 1.0) - m * (m + 1.0));
  }
  return h;
}

Rotation3 Rotation3::axis_angle(const Eigen::Vector3d& axis, double angle) {
  const double norm = axis.norm();
  if (!(norm > 0.0) || !std::isfinite(norm) || !std::isfinite(angle)) {
    throw std::invalid_argument("Rotation3::axis_angle: bad axis or angle");
  }
  const Eigen::Vector3d n = axis / norm;
  return Rotation3(Eigen::AngleAxisd(angle, n).toRotationMatrix());
}

Rotation3 Rotation3::from_matrix(const Eigen::Matrix3d& m) {
  const double defect = (m.transpose() * m - Eigen::Matrix3d::Identity())
                            .cwiseAbs()
                            .maxCoeff();
  if (defect > 1e-9 || m.determinant() < 0.0) {
    throw std::invalid_argument("Rotation3::from_matrix: not a proper rotation");
  }
  Rotation3 r(m);
  r.renormalize();
  return r;
}

Rotation3 Rotation3::inverse() const {
  return Rotation3(m_.transpose(), compositions_);
}

Rotation3 Rotation3::operator*(const Rotation3& rhs) const {
  Rotation3 out(m_ * rhs.m_, compositions_ + rhs.compositions_ + 1);
  if (out.compositions_ >= kRenormEvery ||
      out.orthogonality_defect() > kOrthTol) {
    out.renormalize();
  }
  return out;
}

std::pair<Eigen::Vector3d, double> Rotation3::to_axis_angle() const {
  const Eigen::AngleAxisd aa(m_);
  return {aa.axis(), aa.angle()};
}

double Rotation3::orthogonality_defect() const {
  return (m_.transpose() * m_ - Eigen::Matrix3d::Identity())
      .cwiseAbs()
      .maxCoeff();
}

void Rotation3::renormalize() {
  // Polar decomposition: nearest orthogonal matrix.
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      m_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  m_ = svd.matrixU() * svd.matrixV().transpose();
  compositions_ = 0;
}

OperatorCoeffs hamiltonian_coeffs(int n_particles, double omega, double u) {
  if (n_particles < 1) {
    throw std::invalid_argument("hamiltonian_coeffs: N must be >= 1");
  }
  if (!(omega > 0.0)) {
    throw std::invalid_argument("hamiltonian_coeffs: omega must be positive");
  }
  OperatorCoeffs c;
  c.linear = Eigen::Vector3d(-omega, 0.0, 0.0);
  c.quadratic(2, 2) = u / n_particles;
  return c;
}

OperatorCoeffs rotate_coeffs(const OperatorCoeffs& coeffs, const Rotation3& r) {
  const Eigen::Matrix3d& m = r.matrix();
  OperatorCoeffs out;
  out.scalar = coeffs.scalar;
  out.linear = m.transpose() * coeffs.linear;
  out.quadratic = m.transpose() * coeffs.quadratic * m;
  // keep exactly symmetric against rounding
  out.quadratic = 0.5 * (out.quadratic + out.quadratic.transpose()).eval();
  return out;
}

Eigen::MatrixXcd rotation_unitary(const DickeOperators& ops,
                                  const Eigen::Vector3d& axis, double angle) {
  const Eigen::Vector3d n = axis.normalized();
  const Eigen::MatrixXcd g = n(0) * ops.jx + n(1) * ops.jy + n(2) * ops.jz;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(g);
  const auto& evals = es.eigenvalues();
  Eigen::VectorXcd phases(evals.size());
  for (int i = 0; i < evals.size(); ++i) {
    phases(i) = std::exp(Complex(0.0, -angle * evals(i)));
  }
  return es.eigenvectors() * phases.asDiagonal() *
         es.eigenvectors().adjoint();
}

}  // namespace dcg
