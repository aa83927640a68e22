#include "dcg/exact.hpp"

#include <cmath>
#include <stdexcept>

namespace dcg {

namespace {

constexpr double kSpectralPad = 1.05;
constexpr double kMaxBesselArg = 40.0;  // substep cap for the expansion

void record_tridiag_observables(const Eigen::VectorXcd& psi, int n_particles,
                                const Eigen::VectorXd& ladder, int idx,
                                ObservableSeries& out) {
  const int n = n_particles + 1;
  const double j = 0.5 * n_particles;
  double ex = 0.0, ey = 0.0, ez = 0.0;
  for (int i = 0; i < n; ++i) {
    ez += (-j + i) * std::norm(psi(i));
  }
  for (int i = 0; i + 1 < n; ++i) {
    const Complex w = std::conj(psi(i)) * psi(i + 1);
    ex += ladder(i) * w.real();
    ey -= ladder(i) * w.imag();
  }
  const double scale = 2.0 / n_particles;
  out.jx(idx) = scale * ex;
  out.jy(idx) = scale * ey;
  out.jz(idx) = scale * ez;
  out.purity(idx) = scale * scale * (ex * ex + ey * ey + ez * ez);
}

}  // namespace

Eigen::VectorXd uniform_grid(double t_final, int n_points) {
  if (!(t_final > 0.0) || n_points < 2) {
    throw std::invalid_argument("uniform_grid: need t_final > 0, n >= 2");
  }
  Eigen::VectorXd g(n_points);
  for (int i = 0; i < n_points; ++i) {
    g(i) = t_final * i / (n_points - 1);
  }
  return g;
}

Eigen::VectorXcd dicke_extremal_state(int n_particles, int sign) {
  if (sign != 1 && sign != -1) {
    throw std::invalid_argument("dicke_extremal_state: sign must be +-1");
  }
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(n_particles + 1);
  psi(sign > 0 ? n_particles : 0) = 1.0;
  return psi;
}

PropagationResult chebyshev_propagate(const TridiagHamiltonian& h,
                                      const Eigen::VectorXcd& psi0,
                                      const Eigen::VectorXd& t_grid,
                                      double tol) {
  if (!(tol > 1e-14 && tol < 1e-6)) {
    throw std::invalid_argument("chebyshev_propagate: tol outside (1e-14,1e-6)");
  }
  const int n = h.dim();
  if (psi0.size() != n) {
    throw std::invalid_argument("chebyshev_propagate: state dimension mismatch");
  }
  if (std::abs(psi0.norm() - 1.0) > 1e-8) {
    throw std::invalid_argument("chebyshev_propagate: psi0 not normalized");
  }
  const int n_times = static_cast<int>(t_grid.size());
  for (int i = 1; i < n_times; ++i) {
    if (!(t_grid(i) > t_grid(i - 1))) {
      throw std::invalid_argument("chebyshev_propagate: grid not increasing");
    }
  }

  const auto [emin, emax] = h.gershgorin();
  const double center = 0.5 * (emax + emin);
  const double half = std::max(0.5 * (emax - emin) * kSpectralPad, 1e-300);

  // ladder entries for observable sums
  const double j = 0.5 * h.n_particles;
  Eigen::VectorXd ladder(n - 1);
  for (int i = 0; i + 1 < n; ++i) {
    const double m = -j + i;
    ladder(i) = std::sqrt(j * (j + 1.0) - m * (m + 1.0));
  }

  PropagationResult res;
  res.series.resize(n_times);
  res.series.times = t_grid;

  Eigen::VectorXcd psi = psi0;
  Eigen::VectorXcd p_prev(n), p_curr(n), p_next(n), accum(n);
  const Complex i_unit(0.0, 1.0);

  auto apply_scaled = [&](const Eigen::VectorXcd& in, Eigen::VectorXcd& out) {
    h.apply(in, out);
    out -= center * in;
    out /= half;
  };

  auto expand_step = [&](double dt) {
    const double alpha = half * dt;
    const int nmax =
        static_cast<int>(alpha + 60.0 + 12.0 * std::cbrt(alpha + 1.0));
    p_prev = psi;
    accum = std::cyl_bessel_j(0, alpha) * p_prev;
    Complex ipow(1.0, 0.0);
    bool converged = false;
    for (int k = 1; k <= nmax; ++k) {
      if (k == 1) {
        apply_scaled(p_prev, p_curr);
      } else {
        apply_scaled(p_curr, p_next);
        p_next = 2.0 * p_next - p_prev;
        p_prev.swap(p_curr);
        p_curr.swap(p_next);
      }
      ipow *= -i_unit;
      const double jk = std::cyl_bessel_j(k, alpha);
      accum += (2.0 * ipow * jk) * p_curr;
      if (k > alpha && std::abs(jk) < tol) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw NumericalError(
          "chebyshev_propagate: series did not converge within " +
          std::to_string(nmax) +
          " terms; spectral bounds likely violated (alpha=" +
          std::to_string(alpha) + ")");
    }
    psi = std::exp(-i_unit * center * dt) * accum;
    const double drift = std::abs(psi.norm() - 1.0);
    if (drift > 10.0 * tol) {
      throw NumericalError(
          "chebyshev_propagate: norm drift " + std::to_string(drift) +
          " exceeds tolerance; spectral bounds likely violated");
    }
  };

  double t = t_grid(0);
  if (t != 0.0) {
    // propagate from t=0 to the first grid point
    double remaining = t;
    while (remaining > 0.0) {
      const double dt = std::min(remaining, kMaxBesselArg / half);
      expand_step(dt);
      remaining -= dt;
    }
  }
  record_tridiag_observables(psi, h.n_particles, ladder, 0, res.series);
  for (int g = 1; g < n_times; ++g) {
    double remaining = t_grid(g) - t_grid(g - 1);
    while (remaining > 0.0) {
      const double dt = std::min(remaining, kMaxBesselArg / half);
      expand_step(dt);
      remaining -= dt;
    }
    record_tridiag_observables(psi, h.n_particles, ladder, g, res.series);
  }
  res.final_state = psi;
  return res;
}

MasterResult master_propagate(const DickeOperators& ops,
                              const Eigen::MatrixXcd& h, double gamma,
                              const Eigen::MatrixXcd& rho0,
                              const Eigen::VectorXd& t_grid,
                              double step_scale) {
  if (!(step_scale > 0.0 && step_scale <= 1.0)) {
    throw std::invalid_argument("master_propagate: step_scale in (0,1]");
  }
  const int n = ops.dim();
  if (ops.n_particles > 256) {
    throw std::invalid_argument("master_propagate: dense path limited to N <= 256");
  }
  if (gamma < 0.0) {
    throw std::invalid_argument("master_propagate: gamma must be >= 0");
  }
  if (h.rows() != n || rho0.rows() != n) {
    throw std::invalid_argument("master_propagate: dimension mismatch");
  }
  if (std::abs(rho0.trace().real() - 1.0) > 1e-10 ||
      std::abs(rho0.trace().imag()) > 1e-12) {
    throw std::invalid_argument("master_propagate: rho0 trace must be 1");
  }
  const int n_times = static_cast<int>(t_grid.size());

  const double np = ops.n_particles;
  // Liouvillian magnitude: Hamiltonian spectral range plus the largest
  // double-commutator eigenvalue N(N+1) of the isotropic dissipator.
  double emin = 0.0, emax = 0.0;
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h,
                                                        Eigen::EigenvaluesOnly);
    emin = es.eigenvalues().minCoeff();
    emax = es.eigenvalues().maxCoeff();
  }
  const double lnorm = (emax - emin) + gamma * np * (np + 1.0);
  const double dt_cap = step_scale * 0.1 / std::max(lnorm, 1e-12);

  const Eigen::MatrixXcd jx2 = ops.jx * ops.jx;
  const Eigen::MatrixXcd jy2 = ops.jy * ops.jy;
  const Eigen::MatrixXcd jz2 = ops.jz * ops.jz;
  const Complex i_unit(0.0, 1.0);

  auto rhs = [&](const Eigen::MatrixXcd& p) -> Eigen::MatrixXcd {
    Eigen::MatrixXcd out = -i_unit * (h * p - p * h);
    if (gamma > 0.0) {
      Eigen::MatrixXcd d = jx2 * p + p * jx2 - 2.0 * (ops.jx * p * ops.jx);
      d += jy2 * p + p * jy2 - 2.0 * (ops.jy * p * ops.jy);
      d += jz2 * p + p * jz2 - 2.0 * (ops.jz * p * ops.jz);
      out -= gamma * d;
    }
    return out;
  };

  MasterResult res;
  res.series.resize(n_times);
  res.series.times = t_grid;
  res.min_eigenvalue = 1.0;

  Eigen::MatrixXcd rho = rho0;
  auto record = [&](int idx) {
    const double ex = (ops.jx.cwiseProduct(rho.transpose())).sum().real();
    const double ey = (ops.jy.cwiseProduct(rho.transpose())).sum().real();
    const double ez = (ops.jz.cwiseProduct(rho.transpose())).sum().real();
    const double scale = 2.0 / np;
    res.series.jx(idx) = scale * ex;
    res.series.jy(idx) = scale * ey;
    res.series.jz(idx) = scale * ez;
    res.series.purity(idx) = scale * scale * (ex * ex + ey * ey + ez * ez);

    res.max_trace_deviation = std::max(res.max_trace_deviation,
                                       std::abs(rho.trace().real() - 1.0));
    res.max_hermiticity_deviation =
        std::max(res.max_hermiticity_deviation,
                 (rho - rho.adjoint()).cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho,
                                                        Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    res.min_eigenvalue = std::min(res.min_eigenvalue, lmin);
    if (lmin < -1e-6) {
      throw NumericalError(
          "master_propagate: positivity violated (min eigenvalue " +
          std::to_string(lmin) + "); reduce the grid spacing or gamma*dt");
    }
  };

  Eigen::MatrixXcd k1, k2, k3, k4;
  double t = 0.0;
  for (int g = 0; g < n_times; ++g) {
    const double target = t_grid(g);
    if (target < t) {
      throw std::invalid_argument("master_propagate: grid not increasing");
    }
    const double span = target - t;
    if (span > 0.0) {
      const int steps = std::max(1, static_cast<int>(std::ceil(span / dt_cap)));
      const double dt = span / steps;
      for (int s = 0; s < steps; ++s) {
        k1 = rhs(rho);
        k2 = rhs(rho + 0.5 * dt * k1);
        k3 = rhs(rho + 0.5 * dt * k2);
        k4 = rhs(rho + dt * k3);
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        rho = 0.5 * (rho + rho.adjoint()).eval();
      }
      t = target;
    }
    record(g);
  }
  res.final_rho = rho;
  return res;
}

double meanfield_energy(double omega, double u, const Eigen::Vector3d& s) {
  return -omega * s(0) + 0.5 * u * s(2) * s(2);
}

ObservableSeries meanfield_propagate(double omega, double u,
                                     const Eigen::Vector3d& s0,
                                     const Eigen::VectorXd& t_grid,
                                     double tol) {
  if (std::abs(s0.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("meanfield_propagate: |s0| must equal 1");
  }
  if (!(omega > 0.0)) {
    throw std::invalid_argument("meanfield_propagate: omega must be positive");
  }
  const int n_times = static_cast<int>(t_grid.size());

  auto deriv = [&](const Eigen::Vector3d& s) -> Eigen::Vector3d {
    return {-u * s(1) * s(2), omega * s(2) + u * s(0) * s(2), -omega * s(1)};
  };

  // Dormand-Prince 5(4) pair.
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                      a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                      a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                      a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                      b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                      e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  ObservableSeries out;
  out.resize(n_times);
  out.times = t_grid;

  Eigen::Vector3d s = s0;
  double h_step = 0.01 / omega;
  double t = 0.0;

  auto advance_to = [&](double target) {
    while (t < target) {
      double h_try = std::min(h_step, target - t);
      for (;;) {
        const Eigen::Vector3d k1 = deriv(s);
        const Eigen::Vector3d k2 = deriv(s + h_try * a21 * k1);
        const Eigen::Vector3d k3 = deriv(s + h_try * (a31 * k1 + a32 * k2));
        const Eigen::Vector3d k4 =
            deriv(s + h_try * (a41 * k1 + a42 * k2 + a43 * k3));
        const Eigen::Vector3d k5 =
            deriv(s + h_try * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const Eigen::Vector3d k6 = deriv(
            s + h_try * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const Eigen::Vector3d s5 =
            s + h_try * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const Eigen::Vector3d k7 = deriv(s5);
        const Eigen::Vector3d err_v =
            h_try * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        const double err = err_v.cwiseAbs().maxCoeff() / tol;
        if (err <= 1.0 || h_try <= 1e-14) {
          t += h_try;
          s = s5;
          const double grow =
              (err > 0.0) ? 0.9 * std::pow(err, -0.2) : 5.0;
          h_step = h_try * std::min(5.0, std::max(0.2, grow));
          break;
        }
        h_try *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      }
    }
  };

  for (int g = 0; g < n_times; ++g) {
    advance_to(t_grid(g));
    out.jx(g) = s(0);
    out.jy(g) = s(1);
    out.jz(g) = s(2);
    out.purity(g) = 1.0;
  }
  return out;
}

}  // namespace dcg
