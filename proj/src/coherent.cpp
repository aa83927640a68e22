#include "dcg/coherent.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace dcg {

namespace {

constexpr double kGoldenAngle = 2.399963229728653;  // pi (3 - sqrt 5)
constexpr double kResidualFlag = 1e-8;

struct KernelRatios {
  Complex lin[3];   // x y z
  Complex quad[6];  // xx yy zz xy xz yz
};

// Matrix-element ratios <z_row| X |z_col> / <z_row|z_col> from the
// analytic overlap kernel. u = conj(z_row), z = z_col, 2j = N.
KernelRatios kernel_ratios(Complex u, Complex z, double n) {
  const Complex tau = u * z;
  const Complex s = 1.0 + tau;
  const Complex s2 = s * s;
  const double half_n = 0.5 * n;
  const Complex i_unit(0.0, 1.0);

  const Complex rp = n * u / s;
  const Complex rm = n * z / s;
  const Complex rz = half_n * (tau - 1.0) / s;

  const Complex app = n * (n - 1.0) * u * u / s2;
  const Complex amm = n * (n - 1.0) * z * z / s2;
  const Complex apm = half_n * (1.0 + 2.0 * n * tau + tau * tau) / s2;
  const Complex azz =
      half_n * (half_n * (tau - 1.0) * (tau - 1.0) + 2.0 * tau) / s2;
  const Complex azp = half_n * (n - 1.0) * u * (tau - 1.0) / s2;
  const Complex azm = half_n * (n - 1.0) * z * (tau - 1.0) / s2;

  KernelRatios r;
  r.lin[0] = 0.5 * (rp + rm);
  r.lin[1] = (rp - rm) / (2.0 * i_unit);
  r.lin[2] = rz;
  r.quad[0] = 0.25 * (app + amm + 2.0 * apm);   // xx
  r.quad[1] = 0.25 * (-app - amm + 2.0 * apm);  // yy
  r.quad[2] = azz;                              // zz
  r.quad[3] = (app - amm) / (4.0 * i_unit);     // sym(xy)
  r.quad[4] = 0.5 * (azp + azm);                // sym(xz)
  r.quad[5] = (azp - azm) / (2.0 * i_unit);     // sym(yz)
  return r;
}

}  // namespace

Complex log_overlap(Complex z1, Complex z2, double n_particles) {
  if (std::isnan(z1.real()) || std::isnan(z1.imag()) ||
      std::isnan(z2.real()) || std::isnan(z2.imag())) {
    throw std::invalid_argument("log_overlap: NaN input");
  }
  const Complex cross = 1.0 + std::conj(z1) * z2;
  if (cross == Complex(0.0, 0.0)) {
    return Complex(-std::numeric_limits<double>::infinity(), 0.0);
  }
  const double n1 = std::norm(z1);
  const double n2 = std::norm(z2);
  return n_particles *
         (std::log(cross) - Complex(0.5 * std::log1p(n1), 0.0) -
          Complex(0.5 * std::log1p(n2), 0.0));
}

int CoherentBasis::quad_index(int a, int b) {
  if (a == b) return a;  // xx yy zz
  const int lo = std::min(a, b), hi = std::max(a, b);
  if (lo == 0) return hi == 1 ? 3 : 4;  // xy, xz
  return 5;                             // yz
}

CoherentBasis::CoherentBasis(int n_particles, int m_states, double gram_cutoff)
    : n_particles_(n_particles), m_states_(m_states), cutoff_(gram_cutoff) {
  if (n_particles < 1) {
    throw std::invalid_argument("build_cap_basis: N must be >= 1");
  }
  if (m_states < 1 || m_states > n_particles + 1) {
    throw std::invalid_argument(
        "build_cap_basis: require 1 <= M <= N+1, got M=" +
        std::to_string(m_states));
  }
  if (!(gram_cutoff > 0.0) || gram_cutoff >= 1.0) {
    throw std::invalid_argument("build_cap_basis: gram_cutoff in (0,1)");
  }

  const int m = m_states;
  const double n = n_particles;
  const double fill = static_cast<double>(m) / (n + 1.0);
  area_ = 4.0 * std::numbers::pi * fill;
  theta_max_ = 2.0 * std::asin(std::sqrt(fill));
  boundary_start_ = static_cast<int>(std::ceil(0.9 * m));
  if (boundary_start_ >= m) boundary_start_ = m - 1;

  // Golden-angle spiral, area-uniform in the index; point 0 at the center,
  // last point on the rim.
  points_.resize(m);
  const double sin2_max = fill;
  // strict theta < pi: at fill = 1 (complete basis) the rim cell would
  // otherwise land on the antipode where z diverges
  const double theta_clamp = std::numbers::pi - 1e-3;
  for (int i = 0; i < m; ++i) {
    double frac = (m == 1) ? 0.0 : static_cast<double>(i) / (m - 1);
    const double sin_half = std::sqrt(frac * sin2_max);
    const double theta =
        std::min(2.0 * std::asin(std::min(1.0, sin_half)), theta_clamp);
    const double phi =
        std::fmod(i * kGoldenAngle, 2.0 * std::numbers::pi);
    CoherentPoint p;
    p.theta = theta;
    p.phi = phi;
    p.z = (i == 0) ? Complex(0.0, 0.0)
                   : std::tan(0.5 * theta) * std::exp(Complex(0.0, phi));
    points_[i] = p;
  }

  // Gram and monomial matrices from the analytic kernel. Upper triangle
  // computed, lower mirrored for exact Hermiticity.
  gram_.resize(m, m);
  for (auto& mat : mono1_) mat.resize(m, m);
  for (auto& mat : mono2_) mat.resize(m, m);
  for (int row = 0; row < m; ++row) {
    for (int col = row; col < m; ++col) {
      const Complex zr = points_[row].z;
      const Complex zc = points_[col].z;
      const Complex ov =
          (row == col) ? Complex(1.0, 0.0)
                       : std::exp(log_overlap(zr, zc, n));
      const KernelRatios kr = kernel_ratios(std::conj(zr), zc, n);
      gram_(row, col) = ov;
      gram_(col, row) = std::conj(ov);
      for (int a = 0; a < 3; ++a) {
        mono1_[a](row, col) = kr.lin[a] * ov;
        mono1_[a](col, row) = std::conj(kr.lin[a] * ov);
      }
      for (int q = 0; q < 6; ++q) {
        mono2_[q](row, col) = kr.quad[q] * ov;
        mono2_[q](col, row) = std::conj(kr.quad[q] * ov);
      }
    }
  }

  // Truncated spectral factorization of the Gram matrix.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram_);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("build_cap_basis: Gram eigendecomposition failed");
  }
  eigenvalues_ = es.eigenvalues().reverse();
  const Eigen::MatrixXcd vecs = es.eigenvectors().rowwise().reverse();
  const double lmax = eigenvalues_(0);
  const double cut = cutoff_ * lmax;
  int r = 0;
  while (r < m && eigenvalues_(r) > cut) ++r;
  rank_ = r;
  kept_ = eigenvalues_.head(r);
  vectors_ = vecs.leftCols(r);

  // Orthonormalized operator matrices X~ = L^{-1/2} V^dag X V L^{-1/2},
  // re-Hermitized against rounding.
  const Eigen::VectorXd inv_sqrt = kept_.cwiseSqrt().cwiseInverse();
  auto to_ortho_mat = [&](const Eigen::MatrixXcd& x) {
    Eigen::MatrixXcd t = inv_sqrt.asDiagonal() *
                         (vectors_.adjoint() * x * vectors_) *
                         inv_sqrt.asDiagonal();
    return Eigen::MatrixXcd(0.5 * (t + t.adjoint()));
  };
  for (int a = 0; a < 3; ++a) omono1_[a] = to_ortho_mat(mono1_[a]);
  for (int q = 0; q < 6; ++q) omono2_[q] = to_ortho_mat(mono2_[q]);
}

Eigen::VectorXcd CoherentBasis::to_ortho(const Eigen::VectorXcd& c) const {
  return kept_.cwiseSqrt().asDiagonal() * (vectors_.adjoint() * c);
}

Eigen::VectorXcd CoherentBasis::from_ortho(const Eigen::VectorXcd& ct) const {
  return vectors_ * (kept_.cwiseSqrt().cwiseInverse().asDiagonal() * ct);
}

GramSolveResult CoherentBasis::solve_gram(const Eigen::VectorXcd& rhs) const {
  if (rhs.size() != m_states_) {
    throw std::invalid_argument("solve_gram: rhs length mismatch");
  }
  GramSolveResult out;
  const Eigen::VectorXcd proj = vectors_.adjoint() * rhs;
  out.x = vectors_ * (kept_.cwiseInverse().asDiagonal() * proj);
  const double rhs_norm = rhs.norm();
  if (rhs_norm > 0.0) {
    out.rel_residual = (gram_ * out.x - rhs).norm() / rhs_norm;
  }
  out.flagged = out.rel_residual > kResidualFlag;
  return out;
}

double CoherentBasis::gram_norm(const Eigen::VectorXcd& c) const {
  const double sq = std::real(Complex(c.adjoint() * (gram_ * c)));
  return std::sqrt(std::max(0.0, sq));
}

CoherentBasis build_cap_basis(int n_particles, int m_states,
                              double gram_cutoff) {
  return CoherentBasis(n_particles, m_states, gram_cutoff);
}

double expectation(const Eigen::VectorXcd& c, const CoherentBasis& basis,
                   const OperatorCoeffs& coeffs) {
  const double norm = basis.gram_norm(c);
  if (std::abs(norm - 1.0) > 1e-6) {
    throw std::invalid_argument(
        "expectation: coefficients not Gram-normalized, |c|_C = " +
        std::to_string(norm));
  }
  Complex acc = coeffs.scalar;
  for (int a = 0; a < 3; ++a) {
    if (coeffs.linear(a) != 0.0) {
      acc += coeffs.linear(a) * Complex(c.adjoint() * (basis.monomial1(a) * c));
    }
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      const double q = coeffs.quadratic(a, b);
      if (q == 0.0) continue;
      const double w = (a == b) ? q : 2.0 * q;
      acc += w * Complex(c.adjoint() * (basis.monomial2(a, b) * c));
    }
  }
  const double scale = std::max({1.0, std::abs(acc.real())});
  if (std::abs(acc.imag()) > 1e-10 * scale) {
    throw std::runtime_error("expectation: non-Hermitian residue " +
                             std::to_string(acc.imag()));
  }
  return acc.real();
}

Eigen::Vector3d spin_expectation(const Eigen::VectorXcd& c,
                                 const CoherentBasis& basis) {
  Eigen::Vector3d v;
  for (int a = 0; a < 3; ++a) {
    v(a) = std::real(Complex(c.adjoint() * (basis.monomial1(a) * c)));
  }
  return v;
}

double generalized_purity(const Eigen::VectorXcd& c,
                          const CoherentBasis& basis) {
  const Eigen::Vector3d v = spin_expectation(c, basis);
  const double n = basis.n_particles();
  return 4.0 / (n * n) * v.squaredNorm();
}

void write_gram_spectrum(const CoherentBasis& basis, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_gram_spectrum: cannot open " + path);
  }
  const auto& ev = basis.gram_eigenvalues();
  char line[64];
  for (int i = 0; i < ev.size(); ++i) {
    std::snprintf(line, sizeof(line), "%d,%.17g\n", i, ev(i));
    out << line;
  }
}

}  // namespace dcg
