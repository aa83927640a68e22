#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

FockSu2 fock_su2(int n_particles) {
  const int n = n_particles + 1;
  Eigen::MatrixXcd ad1a2 = Eigen::MatrixXcd::Zero(n, n);  // a1^dag a2
  Eigen::MatrixXcd n1 = Eigen::MatrixXcd::Zero(n, n);
  Eigen::MatrixXcd n2 = Eigen::MatrixXcd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    n1(i, i) = i;
    n2(i, i) = n_particles - i;
    if (i + 1 < n) {
      // a1^dag a2 |n1, n2> = sqrt((n1+1) n2) |n1+1, n2-1>
      ad1a2(i + 1, i) = std::sqrt((i + 1.0) * (n_particles - i));
    }
  }
  const Eigen::MatrixXcd ad2a1 = ad1a2.adjoint();
  FockSu2 f;
  f.jx = 0.5 * (ad1a2 + ad2a1);
  f.jy = (ad1a2 - ad2a1) / std::complex<double>(0.0, 2.0);
  f.jz = 0.5 * (n1 - n2);
  return f;
}

Eigen::VectorXcd coherent_vector(int n_particles, std::complex<double> z) {
  const int n = n_particles + 1;
  Eigen::VectorXcd c(n);
  double log_binom = 0.0;  // ln binom(N, k)
  std::complex<double> zp(1.0, 0.0);
  for (int k = 0; k < n; ++k) {
    c(k) = std::exp(0.5 * log_binom) * zp;
    zp *= z;
    log_binom += std::log(static_cast<double>(n_particles - k)) -
                 std::log(static_cast<double>(k + 1));
  }
  c /= std::pow(1.0 + std::norm(z), 0.5 * n_particles);
  return c;
}

Eigen::MatrixXcd rotation_unitary(const dcg::DickeOperators& ops,
                                  const Eigen::Vector3d& axis, double angle) {
  const Eigen::Vector3d n = axis.normalized();
  const Eigen::MatrixXcd g = n(0) * ops.jx + n(1) * ops.jy + n(2) * ops.jz;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(g);
  Eigen::VectorXcd ph(es.eigenvalues().size());
  for (int i = 0; i < ph.size(); ++i) {
    ph(i) = std::exp(std::complex<double>(0.0, -angle * es.eigenvalues()(i)));
  }
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

Eigen::VectorXcd dense_evolve(const Eigen::MatrixXcd& h,
                              const Eigen::VectorXcd& psi0, double t) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  Eigen::VectorXcd ph(es.eigenvalues().size());
  for (int i = 0; i < ph.size(); ++i) {
    ph(i) = std::exp(std::complex<double>(0.0, -t * es.eigenvalues()(i)));
  }
  return es.eigenvectors() *
         (ph.asDiagonal() * (es.eigenvectors().adjoint() * psi0));
}

Eigen::Vector3d normalized_spin(const dcg::DickeOperators& ops,
                                const Eigen::VectorXcd& psi) {
  const double scale = 2.0 / ops.n_particles;
  Eigen::Vector3d v;
  v(0) = scale * std::real(std::complex<double>(psi.adjoint() * ops.jx * psi));
  v(1) = scale * std::real(std::complex<double>(psi.adjoint() * ops.jy * psi));
  v(2) = scale * std::real(std::complex<double>(psi.adjoint() * ops.jz * psi));
  return v;
}

std::vector<std::complex<double>> random_cap_points(int count,
                                                    double theta_max,
                                                    std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<std::complex<double>> pts;
  pts.reserve(count);
  const double s2 = std::sin(0.5 * theta_max) * std::sin(0.5 * theta_max);
  for (int i = 0; i < count; ++i) {
    const double theta = 2.0 * std::asin(std::sqrt(uni(rng) * s2));
    const double phi = 2.0 * M_PI * uni(rng);
    pts.push_back(std::tan(0.5 * theta) *
                  std::exp(std::complex<double>(0.0, phi)));
  }
  return pts;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  size_t i = 0, k = 0;
  double d = 0.0;
  while (i < a.size() && k < b.size()) {
    const double x = std::min(a[i], b[k]);
    while (i < a.size() && a[i] <= x) ++i;
    while (k < b.size() && b[k] <= x) ++k;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() -
                             static_cast<double>(k) / b.size()));
  }
  return d;
}

double ks_critical_5pct(size_t n, size_t m) {
  return 1.358 * std::sqrt(static_cast<double>(n + m) /
                           (static_cast<double>(n) * m));
}

}  // namespace oracle
