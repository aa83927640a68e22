#include "dcg/snlse.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace dcg {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t trajectory_seed(uint64_t base_seed, uint64_t traj_index) {
  return splitmix64(splitmix64(base_seed) ^ (traj_index + 1));
}

SuggestedParams suggest_parameters(int n_particles, double epsilon,
                                   double safety, int m_override) {
  if (n_particles < 2) {
    throw std::invalid_argument("suggest_parameters: N must be >= 2");
  }
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("suggest_parameters: epsilon must be positive");
  }
  if (!(safety >= 5.0)) {
    throw std::invalid_argument("suggest_parameters: safety must be >= 5");
  }
  const double log_n = std::log(static_cast<double>(n_particles));
  SuggestedParams p;
  p.gamma_over_omega = epsilon / (n_particles * log_n);
  if (m_override > 0) {
    p.m_states = std::min(m_override, n_particles + 1);
  } else {
    const double raw = log_n / epsilon;
    int m = (raw >= static_cast<double>(n_particles + 1))
                ? n_particles + 1
                : static_cast<int>(std::ceil(raw));
    m = std::max(m, 8);
    p.m_states = std::min(m, n_particles + 1);
  }
  p.omega_dt =
      1.0 / (safety * std::sqrt(static_cast<double>(n_particles) * p.m_states));
  p.steps_per_unit_time = static_cast<int>(std::ceil(1.0 / p.omega_dt));
  return p;
}

TrajectoryEngine::TrajectoryEngine(const CoherentBasis& basis,
                                   const TrajectoryConfig& cfg)
    : basis_(basis), cfg_(cfg) {
  if (cfg.n_particles != basis.n_particles()) {
    throw std::invalid_argument("TrajectoryEngine: basis/config N mismatch");
  }
  if (!(cfg.dt > 0.0) || !(cfg.gamma >= 0.0)) {
    throw std::invalid_argument("TrajectoryEngine: need dt > 0, gamma >= 0");
  }
  h_lab_ = cfg.measurement_only
               ? OperatorCoeffs{}
               : hamiltonian_coeffs(cfg.n_particles, cfg.omega, cfg.u);
  const double j = basis.j();
  jj1_ = j * (j + 1.0);
  const int r = basis.rank();
  for (auto& w : w_) w.resize(r);
  quad_ws_.resize(r, r);
  gen_ws_.resize(r, r);
  hc_ws_.resize(r);
  rhs_ws_.resize(r);
  gx_ws_.resize(r);
  ggx_ws_.resize(r);
}

TrajectoryState TrajectoryEngine::initial_state() {
  TrajectoryState st;
  Eigen::VectorXcd e0 = Eigen::VectorXcd::Zero(basis_.size());
  e0(0) = 1.0;
  st.ct = basis_.to_ortho(e0);
  st.ct /= st.ct.norm();
  // Body frame sits at the -z pole; map it to the configured lab pole.
  st.r_lab = (cfg_.sign > 0)
                 ? Rotation3::axis_angle(Eigen::Vector3d::UnitY(), M_PI)
                 : Rotation3::identity();
  if (cfg_.init_rot_angle != 0.0) {
    st.r_lab =
        Rotation3::axis_angle(cfg_.init_rot_axis, cfg_.init_rot_angle) *
        st.r_lab;
  }
  refresh_spin(st.ct);
  return st;
}

void TrajectoryEngine::refresh_spin(const Eigen::VectorXcd& ct) const {
  for (int a = 0; a < 3; ++a) {
    w_[a].noalias() = basis_.ortho_monomial1(a) * ct;
    v_(a) = std::real(ct.dot(w_[a]));
  }
}

Eigen::Vector3d TrajectoryEngine::body_spin(const TrajectoryState& st) const {
  Eigen::Vector3d v;
  for (int a = 0; a < 3; ++a) {
    v(a) = std::real(st.ct.dot(basis_.ortho_monomial1(a) * st.ct));
  }
  return v;
}

Eigen::Vector3d TrajectoryEngine::lab_spin_normalized(
    const TrajectoryState& st) const {
  return (2.0 / cfg_.n_particles) * (st.r_lab * body_spin(st));
}

double TrajectoryEngine::purity(const TrajectoryState& st) const {
  const double n = cfg_.n_particles;
  return 4.0 / (n * n) * body_spin(st).squaredNorm();
}

double TrajectoryEngine::boundary_weight(const TrajectoryState& st) const {
  const Eigen::VectorXcd c = basis_.from_ortho(st.ct);
  const double total = c.squaredNorm();
  if (!(total > 0.0)) return 0.0;
  double outer = 0.0;
  for (int i = basis_.boundary_start(); i < basis_.size(); ++i) {
    outer += std::norm(c(i));
  }
  return outer / total;
}

Eigen::VectorXcd TrajectoryEngine::t1_update(const TrajectoryState& st,
                                             const Eigen::Vector3d& dxi) const {
  refresh_spin(st.ct);
  const OperatorCoeffs hb = rotate_coeffs(h_lab_, st.r_lab);
  const double dt = cfg_.dt;
  const Complex i_unit(0.0, 1.0);

  // body-frame Hamiltonian applied to the state
  quad_ws_.setZero();
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      const double q = hb.quadratic(a, b);
      if (q == 0.0) continue;
      quad_ws_ += ((a == b) ? q : 2.0 * q) * basis_.ortho_monomial2(a, b);
    }
  }
  hc_ws_.noalias() = quad_ws_ * st.ct;
  if (hb.scalar != 0.0) hc_ws_ += hb.scalar * st.ct;
  for (int a = 0; a < 3; ++a) {
    if (hb.linear(a) != 0.0) hc_ws_ += hb.linear(a) * w_[a];
  }
  const double e_h = std::real(st.ct.dot(hc_ws_));

  rhs_ws_ = st.ct;
  rhs_ws_ += (-i_unit * dt) * (hc_ws_ - e_h * st.ct);
  if (cfg_.gamma > 0.0) {
    // gamma sum_a (J_a - <J_a>)^2, with sum_a J_a^2 = j(j+1) exactly
    rhs_ws_ -= (cfg_.gamma * dt) * ((jj1_ + v_.squaredNorm()) * st.ct);
    for (int a = 0; a < 3; ++a) {
      rhs_ws_ += (2.0 * cfg_.gamma * dt * v_(a)) * w_[a];
    }
  }
  for (int a = 0; a < 3; ++a) {
    if (dxi(a) != 0.0) rhs_ws_ += dxi(a) * (w_[a] - v_(a) * st.ct);
  }
  return rhs_ws_;
}

double TrajectoryEngine::recenter(TrajectoryState& st) {
  const double n = cfg_.n_particles;
  const Complex i_unit(0.0, 1.0);
  double first_angle = 0.0;
  int iter = 0;
  for (; iter < cfg_.max_recenter_iter; ++iter) {
    refresh_spin(st.ct);
    const double miss = std::abs(v_(0)) + std::abs(v_(1));
    if (miss <= cfg_.alignment_tol * n && v_(2) < 0.0) break;

    const Eigen::Vector3d v_before = v_;
    const double rho = std::hypot(v_(0), v_(1));
    const double angle = std::atan2(rho, -v_(2));
    if (iter == 0) first_angle = angle;
    if (angle > cfg_.angle_cap) {
      throw TrajectoryError(
          "recenter: angle " + std::to_string(angle) +
              " exceeds cap " + std::to_string(cfg_.angle_cap) +
              "; dt too large",
          st.step_index);
    }
    Eigen::Vector3d axis;
    if (rho > 0.0) {
      axis = Eigen::Vector3d(-v_(1) / rho, v_(0) / rho, 0.0);
    } else {
      axis = Eigen::Vector3d::UnitX();
    }
    gen_ws_.noalias() = axis(0) * basis_.ortho_monomial1(0);
    gen_ws_ += axis(1) * basis_.ortho_monomial1(1);
    // axis(2) = 0 by construction

    // exp(-i angle G) to second order in the angle
    gx_ws_.noalias() = gen_ws_ * st.ct;
    ggx_ws_.noalias() = gen_ws_ * gx_ws_;
    st.ct += (-i_unit * angle) * gx_ws_;
    st.ct += (-0.5 * angle * angle) * ggx_ws_;
    st.ct /= st.ct.norm();

    // In a truncated span the projected generator under-rotates, so the
    // frame update records the rotation the spin actually performed;
    // lab-frame expectations are then invariant by construction.
    refresh_spin(st.ct);
    const Eigen::Vector3d cross = v_before.cross(v_);
    const double cross_norm = cross.norm();
    if (cross_norm > 0.0) {
      const double turned = std::atan2(cross_norm, v_before.dot(v_));
      st.r_lab =
          st.r_lab * Rotation3::axis_angle(cross / cross_norm, turned)
                         .inverse();
    }
  }
  if (iter == cfg_.max_recenter_iter) {
    throw TrajectoryError("recenter: alignment not reached after " +
                              std::to_string(iter) + " iterations",
                          st.step_index);
  }
  diag_.max_recenter_angle = std::max(diag_.max_recenter_angle, first_angle);
  diag_.max_recenter_iters = std::max(diag_.max_recenter_iters, iter);
  return first_angle;
}

void TrajectoryEngine::step(TrajectoryState& st, const Eigen::Vector3d& dxi) {
  Eigen::VectorXcd next = t1_update(st, dxi);
  const double norm = next.norm();
  const double drift = std::abs(norm - 1.0);
  if (!std::isfinite(norm) || drift > cfg_.norm_drift_abort) {
    throw TrajectoryError(
        "t1 step unstable: pre-renormalization norm drift " +
            std::to_string(drift),
        st.step_index);
  }
  diag_.max_norm_drift = std::max(diag_.max_norm_drift, drift);
  st.ct = next / norm;
  if (!st.ct.allFinite()) {
    throw TrajectoryError("t1 step produced non-finite coefficients",
                          st.step_index);
  }
  recenter(st);
  st.ct /= st.ct.norm();
  st.t += cfg_.dt;
  ++st.step_index;
}

TrajectoryResult run_trajectory(const CoherentBasis& basis,
                                const TrajectoryConfig& cfg,
                                uint64_t base_seed, uint64_t traj_index) {
  if (!(cfg.t_final > 0.0) || cfg.n_out < 2) {
    throw std::invalid_argument("run_trajectory: need t_final > 0, n_out >= 2");
  }
  if (!(cfg.dt > 0.0)) {
    throw std::invalid_argument("run_trajectory: dt must be positive");
  }
  const int segments = cfg.n_out - 1;
  const long per = std::max<long>(
      1, static_cast<long>(std::ceil(cfg.t_final / cfg.dt / segments - 1e-12)));
  const long n_steps = per * segments;
  const double dt_eff = cfg.t_final / n_steps;

  TrajectoryConfig run_cfg = cfg;
  run_cfg.dt = dt_eff;
  TrajectoryEngine engine(basis, run_cfg);
  TrajectoryState st = engine.initial_state();

  std::mt19937_64 rng(trajectory_seed(base_seed, traj_index));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma = std::sqrt(2.0 * cfg.gamma * dt_eff);

  TrajectoryResult res;
  res.dt_effective = dt_eff;
  res.n_steps = n_steps;
  res.series.resize(cfg.n_out);

  std::ofstream debug;
  if (!cfg.debug_path.empty()) {
    debug.open(cfg.debug_path);
    debug << "step,t,norm_drift,recenter_angle,boundary_weight\n";
  }

  auto record = [&](int idx) {
    res.series.times(idx) = st.t;
    const Eigen::Vector3d jlab = engine.lab_spin_normalized(st);
    res.series.jx(idx) = jlab(0);
    res.series.jy(idx) = jlab(1);
    res.series.jz(idx) = jlab(2);
    res.series.purity(idx) = engine.purity(st);
    const double bw = engine.boundary_weight(st);
    // engine diagnostics are engine-owned; track boundary weight here
    res.diag.max_boundary_weight = std::max(res.diag.max_boundary_weight, bw);
  };

  try {
    record(0);
    for (long s = 1; s <= n_steps; ++s) {
      const Eigen::Vector3d dxi(sigma * gauss(rng), sigma * gauss(rng),
                                sigma * gauss(rng));
      engine.step(st, dxi);
      if (debug.is_open()) {
        char line[160];
        std::snprintf(line, sizeof(line), "%ld,%.17g,%.3e,%.3e,%.3e\n", s,
                      st.t, engine.diagnostics().max_norm_drift,
                      engine.diagnostics().max_recenter_angle,
                      engine.boundary_weight(st));
        debug << line;
      }
      if (s % per == 0) record(static_cast<int>(s / per));
    }
  } catch (const TrajectoryError& e) {
    TrajectoryError out(
        "trajectory (base_seed=" + std::to_string(base_seed) +
            ", index=" + std::to_string(traj_index) + ") failed at step " +
            std::to_string(e.step) + ": " + e.what(),
        e.step);
    out.diag = engine.diagnostics();
    out.diag.max_boundary_weight = std::max(res.diag.max_boundary_weight,
                                            engine.boundary_weight(st));
    out.diag.under_resolved =
        out.diag.max_boundary_weight > cfg.boundary_warn;
    throw out;
  }

  const auto& ed = engine.diagnostics();
  res.diag.max_norm_drift = ed.max_norm_drift;
  res.diag.max_recenter_angle = ed.max_recenter_angle;
  res.diag.max_recenter_iters = ed.max_recenter_iters;
  res.diag.under_resolved = res.diag.max_boundary_weight > cfg.boundary_warn;
  // exact grid times, shared across runs with different dt
  for (int g = 0; g < cfg.n_out; ++g) {
    res.series.times(g) = cfg.t_final * g / segments;
  }
  return res;
}

}  // namespace dcg
