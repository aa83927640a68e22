#include <doctest.h>

#include <random>

#include "dcg/exact.hpp"
#include "oracles.hpp"

using namespace dcg;

TEST_SUITE("exact") {

TEST_CASE("chebyshev: free spin precesses about x") {
  const int n = 32;
  const auto h = build_tridiag_hamiltonian(n, 1.0, 0.0);
  const auto psi0 = dicke_extremal_state(n, +1);
  const auto grid = uniform_grid(6.0, 61);
  const auto res = chebyshev_propagate(h, psi0, grid, 1e-12);
  for (int i = 0; i < grid.size(); ++i) {
    CHECK(res.series.jz(i) == doctest::Approx(std::cos(grid(i))).epsilon(1e-9));
    CHECK(res.series.purity(i) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("chebyshev matches dense diagonalization at N=64, U/omega=2, t=10") {
  const int n = 64;
  const auto tri = build_tridiag_hamiltonian(n, 1.0, 2.0);
  const auto ops = build_collective_operators(n);
  const auto dense = build_hamiltonian(ops, 1.0, 2.0);
  const auto psi0 = dicke_extremal_state(n, +1);
  const auto grid = uniform_grid(10.0, 41);
  const auto res = chebyshev_propagate(tri, psi0, grid, 1e-12);
  for (int i = 0; i < grid.size(); ++i) {
    const auto psi_ref = oracle::dense_evolve(dense, psi0, grid(i));
    const auto v = oracle::normalized_spin(ops, psi_ref);
    CHECK(std::abs(res.series.jx(i) - v(0)) < 1e-10);
    CHECK(std::abs(res.series.jy(i) - v(1)) < 1e-10);
    CHECK(std::abs(res.series.jz(i) - v(2)) < 1e-10);
  }
  CHECK(std::abs(res.final_state.norm() - 1.0) < 1e-11);
}

TEST_CASE("chebyshev: observables invariant under H -> H + c*I") {
  const int n = 24;
  auto h = build_tridiag_hamiltonian(n, 1.0, 2.0);
  const auto psi0 = dicke_extremal_state(n, +1);
  const auto grid = uniform_grid(3.0, 13);
  const auto base = chebyshev_propagate(h, psi0, grid, 1e-12);
  h.diag.array() += 17.5;
  const auto shifted = chebyshev_propagate(h, psi0, grid, 1e-12);
  for (int i = 0; i < grid.size(); ++i) {
    CHECK(std::abs(base.series.jx(i) - shifted.series.jx(i)) < 1e-10);
    CHECK(std::abs(base.series.jz(i) - shifted.series.jz(i)) < 1e-10);
  }
}

TEST_CASE("chebyshev: input validation") {
  const auto h = build_tridiag_hamiltonian(8, 1.0, 1.0);
  const auto psi0 = dicke_extremal_state(8, +1);
  const auto grid = uniform_grid(1.0, 5);
  CHECK_THROWS_AS(chebyshev_propagate(h, psi0, grid, 1e-3),
                  std::invalid_argument);
  CHECK_THROWS_AS(chebyshev_propagate(h, 2.0 * psi0, grid, 1e-10),
                  std::invalid_argument);
  Eigen::VectorXd bad(3);
  bad << 0.0, 0.5, 0.4;
  CHECK_THROWS_AS(chebyshev_propagate(h, psi0, bad, 1e-10),
                  std::invalid_argument);
}

TEST_CASE("chebyshev: purity decay separates U/omega = 1 from 2 at N=64") {
  const int n = 64;
  const auto psi0 = dicke_extremal_state(n, +1);
  const double horizon = 1.5 * std::log(static_cast<double>(n));
  const auto grid = uniform_grid(horizon, 41);
  const auto weak =
      chebyshev_propagate(build_tridiag_hamiltonian(n, 1.0, 1.0), psi0, grid,
                          1e-10);
  const auto strong =
      chebyshev_propagate(build_tridiag_hamiltonian(n, 1.0, 2.0), psi0, grid,
                          1e-10);
  CHECK(weak.series.purity.minCoeff() > 0.8);
  CHECK(strong.series.purity.minCoeff() < 0.5);
}

TEST_CASE("master: decay of the observables under measurement alone") {
  const int n = 32;
  const double gamma = 0.01;
  const auto ops = build_collective_operators(n);
  const Eigen::MatrixXcd h0 = Eigen::MatrixXcd::Zero(n + 1, n + 1);
  const auto psi0 = dicke_extremal_state(n, +1);
  const Eigen::MatrixXcd rho0 = psi0 * psi0.adjoint();
  const auto grid = uniform_grid(20.0, 21);
  const auto res = master_propagate(ops, h0, gamma, rho0, grid);
  const double j = 0.5 * n;
  for (int i = 0; i < grid.size(); ++i) {
    const double expected = std::exp(-2.0 * gamma * grid(i));
    CHECK(res.series.jz(i) == doctest::Approx(expected).epsilon(1e-6));
    CHECK(std::abs(res.series.jx(i)) < 1e-8);
    CHECK(std::abs(res.series.jy(i)) < 1e-8);
    // total uncertainty j(j+1) - j^2 exp(-4 gamma t)
    const double delta = j * (j + 1.0) -
                         0.25 * n * n * res.series.purity(i);
    const double expected_delta =
        j * (j + 1.0) - j * j * std::exp(-4.0 * gamma * grid(i));
    CHECK(delta == doctest::Approx(expected_delta).epsilon(1e-6));
  }
  CHECK(res.max_trace_deviation < 1e-9);
  CHECK(res.max_hermiticity_deviation < 1e-9);
  CHECK(res.min_eigenvalue > -1e-8);
}

TEST_CASE("master: sum of squared expectations never grows under the "
          "dissipator alone") {
  const int n = 16;
  const auto ops = build_collective_operators(n);
  const Eigen::MatrixXcd h0 = Eigen::MatrixXcd::Zero(n + 1, n + 1);
  // tilted coherent state so all three components are active
  const auto u = oracle::rotation_unitary(ops, Eigen::Vector3d(1, 1, 0), 0.7);
  const Eigen::VectorXcd psi0 = u * dicke_extremal_state(n, +1);
  const Eigen::MatrixXcd rho0 = psi0 * psi0.adjoint();
  const auto grid = uniform_grid(30.0, 31);
  const auto res = master_propagate(ops, h0, 0.02, rho0, grid);
  for (int i = 1; i < grid.size(); ++i) {
    CHECK(res.series.purity(i) <= res.series.purity(i - 1) + 1e-10);
  }
}

TEST_CASE("master: gamma=0 reduces to unitary evolution" *
          doctest::test_suite("slow")) {
  const int n = 64;
  const auto ops = build_collective_operators(n);
  const auto h = build_hamiltonian(ops, 1.0, 2.0);
  const auto tri = build_tridiag_hamiltonian(n, 1.0, 2.0);
  const auto psi0 = dicke_extremal_state(n, +1);
  const Eigen::MatrixXcd rho0 = psi0 * psi0.adjoint();
  const auto grid = uniform_grid(0.25, 6);
  const auto cheb = chebyshev_propagate(tri, psi0, grid, 1e-12);
  const auto master = master_propagate(ops, h, 0.0, rho0, grid, 0.12);
  for (int i = 0; i < grid.size(); ++i) {
    CHECK(std::abs(master.series.jx(i) - cheb.series.jx(i)) < 1e-8);
    CHECK(std::abs(master.series.jy(i) - cheb.series.jy(i)) < 1e-8);
    CHECK(std::abs(master.series.jz(i) - cheb.series.jz(i)) < 1e-8);
  }
}

TEST_CASE("master: input validation") {
  const auto ops = build_collective_operators(8);
  const auto h = build_hamiltonian(ops, 1.0, 1.0);
  const auto psi0 = dicke_extremal_state(8, +1);
  const Eigen::MatrixXcd rho0 = psi0 * psi0.adjoint();
  const auto grid = uniform_grid(1.0, 3);
  CHECK_THROWS_AS(master_propagate(ops, h, -0.1, rho0, grid),
                  std::invalid_argument);
  CHECK_THROWS_AS(master_propagate(ops, h, 0.1, 2.0 * rho0, grid),
                  std::invalid_argument);
}

TEST_CASE("meanfield: free precession about x") {
  const auto grid = uniform_grid(8.0, 33);
  const auto res =
      meanfield_propagate(1.0, 0.0, Eigen::Vector3d(0, 0, 1), grid);
  for (int i = 0; i < grid.size(); ++i) {
    CHECK(res.jz(i) == doctest::Approx(std::cos(grid(i))).epsilon(1e-9));
    CHECK(res.jy(i) == doctest::Approx(std::sin(grid(i))).epsilon(1e-9));
    CHECK(res.purity(i) == 1.0);
  }
}

TEST_CASE("meanfield: |s| and h(s) conserved to 1e-10 over 20/omega") {
  const double omega = 1.0, u = 2.0;
  const Eigen::Vector3d s0(0, 0, 1);
  const auto grid = uniform_grid(20.0, 201);
  const auto res = meanfield_propagate(omega, u, s0, grid);
  const double h0 = meanfield_energy(omega, u, s0);
  for (int i = 0; i < grid.size(); ++i) {
    const Eigen::Vector3d s(res.jx(i), res.jy(i), res.jz(i));
    CHECK(std::abs(s.norm() - 1.0) < 1e-10);
    CHECK(std::abs(meanfield_energy(omega, u, s) - h0) < 1e-10);
  }
}

TEST_CASE("meanfield: non-unit initial condition rejected") {
  const auto grid = uniform_grid(1.0, 3);
  CHECK_THROWS_AS(
      meanfield_propagate(1.0, 1.0, Eigen::Vector3d(0, 0, 1.01), grid),
      std::invalid_argument);
}

TEST_CASE("meanfield: two nearby separatrix states separate at rate ~omega") {
  // U/omega = 2 puts the pole on the separatrix through the saddle at
  // (-1, 0, 0); neighboring initial conditions diverge exponentially
  const auto grid = uniform_grid(6.0, 61);
  const double delta0 = 1e-6;
  const Eigen::Vector3d s0a(0, 0, 1);
  const Eigen::Vector3d s0b =
      Eigen::Vector3d(delta0, 0, std::sqrt(1.0 - delta0 * delta0));
  const auto ra = meanfield_propagate(1.0, 2.0, s0a, grid);
  const auto rb = meanfield_propagate(1.0, 2.0, s0b, grid);
  double dist_end = 0.0;
  for (int i = 0; i < grid.size(); ++i) {
    const double d = std::hypot(ra.jx(i) - rb.jx(i), ra.jy(i) - rb.jy(i),
                                ra.jz(i) - rb.jz(i));
    if (i == grid.size() - 1) dist_end = d;
  }
  // over t=6 an exponent near omega grows by e^6 ~ 400
  CHECK(dist_end > 50.0 * delta0);
  CHECK(dist_end < 5e4 * delta0);
}

}  // TEST_SUITE
