#include <doctest.h>

#include <random>

#include "dcg/ensemble.hpp"
#include "dcg/snlse.hpp"
#include "oracles.hpp"

using namespace dcg;

namespace {

TrajectoryConfig basic_config(int n, int m_unused, double gamma, double dt,
                              double t_final) {
  (void)m_unused;
  TrajectoryConfig cfg;
  cfg.n_particles = n;
  cfg.omega = 1.0;
  cfg.u = 2.0;
  cfg.gamma = gamma;
  cfg.dt = dt;
  cfg.t_final = t_final;
  return cfg;
}

Eigen::Vector3d lab_spin_from_state(const TrajectoryEngine& engine,
                                    const TrajectoryState& st) {
  return engine.lab_spin_normalized(st);
}

}  // namespace

TEST_SUITE("snlse") {

TEST_CASE("suggest_parameters: headline values") {
  SUBCASE("gamma at N=2e4, eps=0.3") {
    const auto p = suggest_parameters(20000, 0.3, 10.0);
    CHECK(p.gamma_over_omega == doctest::Approx(1.5146e-6).epsilon(1e-3));
    CHECK(p.m_states == 34);  // ceil(ln(2e4)/0.3)
  }
  SUBCASE("dt with the M=60 override, safety=10") {
    const auto p = suggest_parameters(20000, 0.3, 10.0, 60);
    CHECK(p.m_states == 60);
    CHECK(p.omega_dt == doctest::Approx(9.1287e-5).epsilon(1e-3));
    CHECK(p.steps_per_unit_time == 10955);
  }
  SUBCASE("eps -> 0 clamps M to the complete basis") {
    const auto p = suggest_parameters(100, 1e-12, 5.0);
    CHECK(p.m_states == 101);
  }
  SUBCASE("small-N floor") {
    const auto p = suggest_parameters(1000, 5.0, 5.0);
    CHECK(p.m_states == 8);
  }
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(suggest_parameters(1, 0.3, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(suggest_parameters(100, 0.0, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(suggest_parameters(100, 0.3, 4.0), std::invalid_argument);
  }
}

TEST_CASE("initial state: pole in the body frame, configured lab pole") {
  const int n = 16;
  const auto basis = build_cap_basis(n, 9);
  for (int sign : {+1, -1}) {
    auto cfg = basic_config(n, 9, 0.01, 1e-3, 1.0);
    cfg.sign = sign;
    TrajectoryEngine engine(basis, cfg);
    const auto st = engine.initial_state();
    const Eigen::Vector3d v = engine.body_spin(st);
    CHECK(v(2) == doctest::Approx(-0.5 * n).epsilon(1e-10));
    CHECK(std::abs(v(0)) < 1e-9);
    CHECK(std::abs(v(1)) < 1e-9);
    const Eigen::Vector3d lab = lab_spin_from_state(engine, st);
    CHECK(lab(2) == doctest::Approx(static_cast<double>(sign)).epsilon(1e-10));
    CHECK(engine.purity(st) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("t1: one deterministic step converges at second order locally") {
  const int n = 8;
  const auto basis = build_cap_basis(n, 9);
  const auto ops = build_collective_operators(n);
  const auto h_lab = build_hamiltonian(ops, 1.0, 2.0);
  const auto psi0 = dicke_extremal_state(n, +1);

  auto lab_after_t1 = [&](double dt) {
    auto cfg = basic_config(n, 9, 0.0, dt, 1.0);
    TrajectoryEngine engine(basis, cfg);
    auto st = engine.initial_state();
    Eigen::VectorXcd next = engine.t1_update(st, Eigen::Vector3d::Zero());
    st.ct = next / next.norm();
    return lab_spin_from_state(engine, st);
  };
  auto lab_exact = [&](double dt) {
    return oracle::normalized_spin(ops, oracle::dense_evolve(h_lab, psi0, dt));
  };

  const double dt = 2e-3;
  const double e1 = (lab_after_t1(dt) - lab_exact(dt)).norm();
  const double e2 = (lab_after_t1(0.5 * dt) - lab_exact(0.5 * dt)).norm();
  CHECK(e1 > 1e-12);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("t1: measurement drift leaves a centered coherent state still") {
  // coherent states minimize the total variance, so with H off and no
  // noise the expectation vector must not move to first order
  const int n = 16;
  const auto basis = build_cap_basis(n, 9);
  auto cfg = basic_config(n, 9, 0.5, 1e-6, 1.0);
  cfg.measurement_only = true;
  TrajectoryEngine engine(basis, cfg);
  auto st = engine.initial_state();
  const Eigen::Vector3d before = engine.body_spin(st) * (2.0 / n);
  Eigen::VectorXcd next = engine.t1_update(st, Eigen::Vector3d::Zero());
  st.ct = next / next.norm();
  const Eigen::Vector3d after = engine.body_spin(st) * (2.0 / n);
  CHECK((after - before).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("recenter: aligned state is untouched") {
  const int n = 16;
  const auto basis = build_cap_basis(n, 9);
  auto cfg = basic_config(n, 9, 0.01, 1e-3, 1.0);
  TrajectoryEngine engine(basis, cfg);
  auto st = engine.initial_state();
  const Eigen::VectorXcd ct_before = st.ct;
  const double angle = engine.recenter(st);
  CHECK(angle == 0.0);
  CHECK((st.ct - ct_before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("recenter: purity preserved through a small-angle recentering") {
  // complete basis, so the recentering rotation is exact up to the cubic
  // generator truncation
  const int n = 16;
  const auto basis = build_cap_basis(n, 17);
  auto cfg = basic_config(n, 17, 0.05, 1e-4, 1.0);
  TrajectoryEngine engine(basis, cfg);
  auto st = engine.initial_state();
  // knock the state slightly off center with one noisy drift step
  Eigen::VectorXcd next = engine.t1_update(st, Eigen::Vector3d(2e-5, -1e-5, 0));
  st.ct = next / next.norm();
  const double p_before = engine.purity(st);
  const double angle = engine.recenter(st);
  const double p_after = engine.purity(st);
  CHECK(angle > 0.0);
  CHECK(angle < 1e-4);
  CHECK(std::abs(p_after - p_before) < 1e-10);
}

TEST_CASE("recenter: lab observables preserved, small angles") {
  const int n = 8;
  const auto basis = build_cap_basis(n, 9);
  auto cfg = basic_config(n, 9, 0.2, 5e-4, 1.0);
  TrajectoryEngine engine(basis, cfg);
  auto st = engine.initial_state();

  std::mt19937_64 rng(31);
  std::normal_distribution<double> g;
  const double sigma = std::sqrt(2.0 * cfg.gamma * cfg.dt);
  for (int s = 0; s < 50; ++s) {
    // manual t1 followed by recenter, watching the lab spin across T2
    Eigen::VectorXcd next = engine.t1_update(
        st, Eigen::Vector3d(sigma * g(rng), sigma * g(rng), sigma * g(rng)));
    st.ct = next / next.norm();
    const Eigen::Vector3d lab_before = engine.lab_spin_normalized(st);
    const double angle = engine.recenter(st);
    const Eigen::Vector3d lab_after = engine.lab_spin_normalized(st);
    CHECK((lab_after - lab_before).norm() <
          std::max(5.0 * angle * angle * angle, 1e-12));
    // alignment invariant after recentering
    const Eigen::Vector3d v = engine.body_spin(st);
    CHECK(std::abs(v(0)) + std::abs(v(1)) <= cfg.alignment_tol * n);
  }
}

TEST_CASE("recenter: angle above the cap aborts with dt advice") {
  const int n = 16;
  const auto basis = build_cap_basis(n, 11);
  auto cfg = basic_config(n, 11, 0.5, 1e-3, 1.0);
  TrajectoryEngine engine(basis, cfg);
  auto st = engine.initial_state();
  // a violent noise kick tilts the spin well past 0.1 rad
  CHECK_THROWS_WITH_AS(engine.step(st, Eigen::Vector3d(0.5, 0.0, 0.0)),
                       doctest::Contains("dt too large"), TrajectoryError);
}

TEST_CASE("step: norm restored to machine precision") {
  const int n = 32;
  const auto p = suggest_parameters(n, 1.0, 10.0);
  const auto basis = build_cap_basis(n, p.m_states);
  auto cfg = basic_config(n, p.m_states, p.gamma_over_omega, p.omega_dt, 1.0);
  TrajectoryEngine engine(basis, cfg);
  auto st = engine.initial_state();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  const double sigma = std::sqrt(2.0 * cfg.gamma * cfg.dt);
  for (int s = 0; s < 200; ++s) {
    engine.step(st, Eigen::Vector3d(sigma * g(rng), sigma * g(rng),
                                    sigma * g(rng)));
    CHECK(std::abs(st.ct.norm() - 1.0) < 1e-12);
  }
  CHECK(engine.diagnostics().max_norm_drift < 0.05);
}

TEST_CASE("step: mean pre-renormalization norm drift is O(dt^2)") {
  const int n = 8;
  const auto basis = build_cap_basis(n, 9);
  const double gamma = 0.5;

  auto mean_drift = [&](double dt, int samples) {
    auto cfg = basic_config(n, 9, gamma, dt, 1.0);
    TrajectoryEngine engine(basis, cfg);
    const auto st0 = engine.initial_state();
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g;
    const double sigma = std::sqrt(2.0 * gamma * dt);
    double acc = 0.0;
    for (int s = 0; s < samples; ++s) {
      const Eigen::Vector3d dxi(sigma * g(rng), sigma * g(rng),
                                sigma * g(rng));
      acc += engine.t1_update(st0, dxi).squaredNorm() - 1.0;
    }
    return acc / samples;
  };

  // common random numbers: identical gaussian draws, noise scaled by
  // sqrt(dt), so the O(dt) fluctuations correlate across the two runs
  const double m1 = mean_drift(0.02, 40000);
  const double m2 = mean_drift(0.01, 40000);
  CHECK(m1 > 0.0);
  CHECK(m1 / m2 == doctest::Approx(4.0).epsilon(0.4));
}

TEST_CASE("trajectory: deterministic and seed-sensitive") {
  const int n = 32;
  const auto p = suggest_parameters(n, 0.5, 10.0);
  const auto basis = build_cap_basis(n, p.m_states);
  auto cfg = basic_config(n, p.m_states, p.gamma_over_omega, p.omega_dt, 1.5);
  cfg.n_out = 16;
  const auto a = run_trajectory(basis, cfg, 42, 7);
  const auto b = run_trajectory(basis, cfg, 42, 7);
  const auto c = run_trajectory(basis, cfg, 42, 8);
  CHECK((a.series.jz - b.series.jz).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.series.jx - b.series.jx).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.series.purity - b.series.purity).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.series.jz - c.series.jz).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("trajectory: closed-system limit tracks the exact solution") {
  // gamma = 0 with a complete basis reduces to Euler integration of the
  // Schroedinger equation; with a small dt the observables follow the
  // Chebyshev reference closely on a short horizon
  const int n = 16;
  const auto basis = build_cap_basis(n, n + 1);
  auto cfg = basic_config(n, n + 1, 0.0, 2e-5, 0.5);
  cfg.n_out = 6;
  const auto traj = run_trajectory(basis, cfg, 1, 0);
  const auto tri = build_tridiag_hamiltonian(n, 1.0, 2.0);
  const auto cheb = chebyshev_propagate(tri, dicke_extremal_state(n, +1),
                                        traj.series.times, 1e-12);
  for (int i = 0; i < traj.series.size(); ++i) {
    CHECK(std::abs(traj.series.jx(i) - cheb.series.jx(i)) < 2e-4);
    CHECK(std::abs(traj.series.jz(i) - cheb.series.jz(i)) < 2e-4);
  }
}

TEST_CASE("trajectory: statistics match the master equation at N=16") {
  const int n = 16;
  const double eps = 1.0;
  const auto p = suggest_parameters(n, eps, 40.0);
  const int m = n + 1;  // complete basis
  const auto basis = build_cap_basis(n, m);
  auto cfg = basic_config(n, m, p.gamma_over_omega, 0.0, 2.0);
  cfg.dt = 1.0 / (40.0 * std::sqrt(static_cast<double>(n) * m));
  cfg.n_out = 9;
  cfg.angle_cap = 0.5;

  const int n_traj = 400;
  Eigen::ArrayXXd mean = Eigen::ArrayXXd::Zero(cfg.n_out, 3);
  Eigen::ArrayXXd sq = Eigen::ArrayXXd::Zero(cfg.n_out, 3);
  for (int k = 0; k < n_traj; ++k) {
    const auto r = run_trajectory(basis, cfg, 2024, k);
    mean.col(0) += r.series.jx.array();
    mean.col(1) += r.series.jy.array();
    mean.col(2) += r.series.jz.array();
    sq.col(0) += r.series.jx.array().square();
    sq.col(1) += r.series.jy.array().square();
    sq.col(2) += r.series.jz.array().square();
  }
  mean /= n_traj;
  sq = (sq / n_traj - mean.square()).cwiseMax(0.0);

  const auto ops = build_collective_operators(n);
  const auto h = build_hamiltonian(ops, 1.0, 2.0);
  const auto psi0 = dicke_extremal_state(n, +1);
  const Eigen::MatrixXcd rho0 = psi0 * psi0.adjoint();
  const auto master = master_propagate(ops, h, cfg.gamma, rho0,
                                       uniform_grid(cfg.t_final, cfg.n_out));
  const Eigen::VectorXd* ref[3] = {&master.series.jx, &master.series.jy,
                                   &master.series.jz};
  for (int t = 0; t < cfg.n_out; ++t) {
    for (int obs = 0; obs < 3; ++obs) {
      const double se = std::sqrt(sq(t, obs) / n_traj);
      const double dev = std::abs(mean(t, obs) - (*ref[obs])(t));
      CHECK(dev < 4.0 * se + 5e-3);
    }
  }
}

TEST_CASE("trajectory: measurement statistics are frame covariant") {
  // with the Hamiltonian off the weak measurement is isotropic, so a
  // fixed extra rotation of the initial frame must not change the
  // distribution of the rotated-back observables
  const int n = 16;
  const int m = 11;
  const auto basis = build_cap_basis(n, m);
  auto cfg = basic_config(n, m, 0.1, 5e-4, 1.0);
  cfg.measurement_only = true;
  cfg.n_out = 3;
  cfg.angle_cap = 1.0;

  const int samples = 220;
  std::vector<double> base, rotated_back;
  for (int k = 0; k < samples; ++k) {
    const auto r = run_trajectory(basis, cfg, 10, k);
    base.push_back(r.series.jz(cfg.n_out - 1));
  }
  auto cfg_rot = cfg;
  cfg_rot.init_rot_axis = Eigen::Vector3d::UnitX();
  cfg_rot.init_rot_angle = 0.7;
  const Rotation3 r0 =
      Rotation3::axis_angle(Eigen::Vector3d::UnitX(), 0.7);
  for (int k = 0; k < samples; ++k) {
    const auto r = run_trajectory(basis, cfg_rot, 33, 100000 + k);
    const Eigen::Vector3d lab(r.series.jx(cfg.n_out - 1),
                              r.series.jy(cfg.n_out - 1),
                              r.series.jz(cfg.n_out - 1));
    rotated_back.push_back((r0.inverse() * lab)(2));
  }
  const double d = oracle::ks_statistic(base, rotated_back);
  CHECK(d < oracle::ks_critical_5pct(samples, samples));
}

TEST_CASE("trajectory: stronger measurement keeps single runs purer") {
  const int n = 64;
  const double t_final = std::log(64.0);
  auto run_mean_final_purity = [&](double eps) {
    const auto p = suggest_parameters(n, eps, 5.0);
    const auto basis = build_cap_basis(n, p.m_states);
    auto cfg = basic_config(n, p.m_states, p.gamma_over_omega, p.omega_dt,
                            t_final);
    cfg.n_out = 5;
    cfg.angle_cap = 0.5;
    double acc = 0.0;
    const int n_traj = 24;
    for (int k = 0; k < n_traj; ++k) {
      const auto r = run_trajectory(basis, cfg, 7, k);
      acc += r.series.purity(cfg.n_out - 1);
    }
    return acc / n_traj;
  };
  const double strong = run_mean_final_purity(2.0);
  const double weak = run_mean_final_purity(0.1);
  CHECK(strong > weak);
  CHECK(strong > 0.9);
}

TEST_CASE("trajectory: boundary weight flags an under-resolved basis") {
  const int n = 64;
  // weak measurement with a deliberately tiny basis: the state spreads to
  // the cap rim and the diagnostic must say so, whether or not the run
  // survives the horizon
  const auto basis = build_cap_basis(n, 8);
  auto cfg = basic_config(n, 8, 1e-4, 2e-3, std::log(64.0));
  cfg.n_out = 9;
  cfg.norm_drift_abort = 10.0;  // keep it running to observe the weight
  cfg.angle_cap = 3.0;
  double weight = 0.0;
  bool flagged = false;
  try {
    const auto r = run_trajectory(basis, cfg, 3, 0);
    weight = r.diag.max_boundary_weight;
    flagged = r.diag.under_resolved;
  } catch (const TrajectoryError& e) {
    weight = e.diag.max_boundary_weight;
    flagged = e.diag.under_resolved;
  }
  CHECK(weight > 0.01);
  CHECK(flagged);
}

TEST_CASE("trajectory: input validation") {
  const auto basis = build_cap_basis(16, 9);
  auto cfg = basic_config(16, 9, 0.01, 0.0, 1.0);
  CHECK_THROWS_AS(run_trajectory(basis, cfg, 1, 0), std::invalid_argument);
  cfg.dt = 1e-3;
  cfg.t_final = 0.0;
  CHECK_THROWS_AS(run_trajectory(basis, cfg, 1, 0), std::invalid_argument);
  cfg.t_final = 1.0;
  cfg.n_particles = 8;  // basis mismatch
  CHECK_THROWS_AS(run_trajectory(basis, cfg, 1, 0), std::invalid_argument);
}

}  // TEST_SUITE
