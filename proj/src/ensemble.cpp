#include "dcg/ensemble.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

namespace dcg {

namespace {

using Clock = std::chrono::steady_clock;

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t ensemble_hash(const EnsembleConfig& cfg, int m_states) {
  char buf[512];
  const auto& t = cfg.traj;
  std::snprintf(buf, sizeof(buf),
                "N=%d M=%d omega=%.17g u=%.17g gamma=%.17g dt=%.17g "
                "tf=%.17g nout=%d sign=%d seed=%llu ntraj=%d bs=%d cutoff=%.17g",
                t.n_particles, m_states, t.omega, t.u, t.gamma, t.dt, t.t_final,
                t.n_out, t.sign, static_cast<unsigned long long>(cfg.base_seed),
                cfg.n_traj, cfg.block_size, cfg.gram_cutoff);
  return fnv1a(buf);
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void atomic_write(const std::string& path, const std::string& payload,
                  bool binary) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
    if (!out) throw std::runtime_error("cannot open " + tmp);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  std::filesystem::rename(tmp, path);
}

struct CheckpointFiles {
  std::string meta, data;
};

CheckpointFiles checkpoint_files(const std::string& stem) {
  return {stem + ".meta.json", stem + ".bin"};
}

void save_checkpoint(const std::string& stem, uint64_t hash, int n_times,
                     const std::map<long, BlockSums>& done) {
  nlohmann::json meta;
  meta["format"] = "dcg-checkpoint-1";
  meta["config_hash"] = hash;
  meta["n_times"] = n_times;
  std::vector<long> indices;
  indices.reserve(done.size());
  for (const auto& [idx, blk] : done) indices.push_back(idx);
  meta["blocks"] = indices;

  std::string payload;
  const size_t rec_doubles = 3 + static_cast<size_t>(n_times) * 8;
  payload.reserve(done.size() * rec_doubles * sizeof(double) +
                  done.size() * sizeof(int64_t));
  for (const auto& [idx, blk] : done) {
    const int64_t bi = idx;
    payload.append(reinterpret_cast<const char*>(&bi), sizeof(bi));
    const double header[3] = {static_cast<double>(blk.count),
                              static_cast<double>(blk.failures),
                              blk.max_boundary_weight};
    payload.append(reinterpret_cast<const char*>(header), sizeof(header));
    payload.append(reinterpret_cast<const char*>(&blk.max_norm_drift),
                   sizeof(double));
    payload.append(reinterpret_cast<const char*>(blk.sums.data()),
                   static_cast<size_t>(blk.sums.size()) * sizeof(double));
  }
  const auto files = checkpoint_files(stem);
  atomic_write(files.data, payload, true);
  atomic_write(files.meta, meta.dump(2), false);
}

std::map<long, BlockSums> load_checkpoint(const std::string& stem,
                                          uint64_t hash, int n_times) {
  std::map<long, BlockSums> done;
  const auto files = checkpoint_files(stem);
  if (!std::filesystem::exists(files.meta) ||
      !std::filesystem::exists(files.data)) {
    return done;
  }
  nlohmann::json meta;
  {
    std::ifstream in(files.meta);
    in >> meta;
  }
  if (meta.value("format", "") != "dcg-checkpoint-1") {
    throw std::runtime_error("checkpoint " + files.meta + ": unknown format");
  }
  if (meta.value("config_hash", 0ULL) != hash) {
    throw std::runtime_error(
        "checkpoint " + files.meta +
        " belongs to a different configuration; delete it to start over");
  }
  if (meta.value("n_times", -1) != n_times) {
    throw std::runtime_error("checkpoint " + files.meta + ": grid mismatch");
  }
  std::ifstream in(files.data, std::ios::binary);
  for (long idx : meta["blocks"].get<std::vector<long>>()) {
    int64_t bi = 0;
    double header[4];
    BlockSums blk;
    blk.sums.resize(n_times, 8);
    in.read(reinterpret_cast<char*>(&bi), sizeof(bi));
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    in.read(reinterpret_cast<char*>(blk.sums.data()),
            static_cast<std::streamsize>(blk.sums.size()) * sizeof(double));
    if (!in || bi != idx) {
      throw std::runtime_error("checkpoint " + files.data + ": corrupt data");
    }
    blk.b_index = idx;
    blk.count = static_cast<long>(header[0]);
    blk.failures = static_cast<long>(header[1]);
    blk.max_boundary_weight = header[2];
    blk.max_norm_drift = header[3];
    done.emplace(idx, std::move(blk));
  }
  return done;
}

}  // namespace

BlockSums accumulate_block(
    long b_index,
    const std::vector<std::optional<TrajectoryResult>>& results) {
  BlockSums blk;
  blk.b_index = b_index;
  int n_times = 0;
  for (const auto& r : results) {
    if (r) {
      n_times = r->series.size();
      break;
    }
  }
  blk.sums = Eigen::ArrayXXd::Zero(std::max(n_times, 1), 8);
  for (const auto& r : results) {
    if (!r) {
      ++blk.failures;
      continue;
    }
    const auto& s = r->series;
    blk.sums.col(0) += s.jx.array();
    blk.sums.col(1) += s.jy.array();
    blk.sums.col(2) += s.jz.array();
    blk.sums.col(3) += s.purity.array();
    blk.sums.col(4) += s.jx.array().square();
    blk.sums.col(5) += s.jy.array().square();
    blk.sums.col(6) += s.jz.array().square();
    blk.sums.col(7) += s.purity.array().square();
    ++blk.count;
    blk.max_boundary_weight =
        std::max(blk.max_boundary_weight, r->diag.max_boundary_weight);
    blk.max_norm_drift = std::max(blk.max_norm_drift, r->diag.max_norm_drift);
  }
  return blk;
}

EnsembleResult merge_blocks(const std::vector<BlockSums>& blocks,
                            const EnsembleConfig& cfg, bool complete) {
  const int n_times = cfg.traj.n_out;
  Eigen::ArrayXXd total = Eigen::ArrayXXd::Zero(n_times, 8);
  long count = 0, failures = 0;
  EnsembleResult res;
  for (const auto& blk : blocks) {
    if (blk.count > 0) total += blk.sums;
    count += blk.count;
    failures += blk.failures;
    res.max_boundary_weight =
        std::max(res.max_boundary_weight, blk.max_boundary_weight);
    res.max_norm_drift = std::max(res.max_norm_drift, blk.max_norm_drift);
  }
  res.n_traj = cfg.n_traj;
  res.n_succeeded = static_cast<int>(count);
  res.n_failed = static_cast<int>(failures);
  res.complete = complete;
  if (complete &&
      failures > cfg.max_failure_fraction * std::max(cfg.n_traj, 1)) {
    throw NumericalError("run_ensemble: " + std::to_string(failures) + " of " +
                         std::to_string(cfg.n_traj) +
                         " trajectories failed (limit " +
                         std::to_string(cfg.max_failure_fraction * 100) + "%)");
  }
  if (count < 2) {
    throw NumericalError("run_ensemble: fewer than two trajectories succeeded");
  }

  res.mean.resize(n_times);
  res.mean.times = uniform_grid(cfg.traj.t_final, n_times);
  res.stderr_jx.resize(n_times);
  res.stderr_jy.resize(n_times);
  res.stderr_jz.resize(n_times);
  res.purity_mean_of_traj.resize(n_times);
  const double n = static_cast<double>(count);
  auto stderr_col = [&](int sum_col, int sq_col, int t) {
    const double mean = total(t, sum_col) / n;
    const double var =
        std::max(0.0, (total(t, sq_col) - n * mean * mean) / (n - 1.0));
    return std::sqrt(var / n);
  };
  for (int t = 0; t < n_times; ++t) {
    const double mx = total(t, 0) / n;
    const double my = total(t, 1) / n;
    const double mz = total(t, 2) / n;
    res.mean.jx(t) = mx;
    res.mean.jy(t) = my;
    res.mean.jz(t) = mz;
    res.mean.purity(t) = mx * mx + my * my + mz * mz;
    res.purity_mean_of_traj(t) = total(t, 3) / n;
    res.stderr_jx(t) = stderr_col(0, 4, t);
    res.stderr_jy(t) = stderr_col(1, 5, t);
    res.stderr_jz(t) = stderr_col(2, 6, t);
  }
  return res;
}

EnsembleResult run_ensemble(const CoherentBasis& basis,
                            const EnsembleConfig& cfg) {
  if (cfg.n_traj < 2) {
    throw std::invalid_argument("run_ensemble: n_traj must be >= 2");
  }
  const int bs = std::max(1, cfg.block_size);
  const long n_blocks = (cfg.n_traj + bs - 1) / bs;
  const uint64_t hash = ensemble_hash(cfg, basis.size());

  std::map<long, BlockSums> done;
  if (!cfg.checkpoint_path.empty()) {
    done = load_checkpoint(cfg.checkpoint_path, hash, cfg.traj.n_out);
  }

  std::mutex mu;
  std::atomic<long> next_block{0};
  std::atomic<long> claimed_new{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  auto last_save = Clock::now();

  auto worker = [&]() {
    for (;;) {
      if (failed.load()) return;
      if (cfg.stop_after_blocks > 0 &&
          claimed_new.load() >= cfg.stop_after_blocks) {
        return;
      }
      const long b = next_block.fetch_add(1);
      if (b >= n_blocks) return;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (done.count(b)) continue;
      }
      if (cfg.stop_after_blocks > 0 &&
          claimed_new.fetch_add(1) >= cfg.stop_after_blocks) {
        return;
      }
      const long lo = b * bs;
      const long hi = std::min<long>(cfg.n_traj, lo + bs);
      std::vector<std::optional<TrajectoryResult>> results;
      results.reserve(hi - lo);
      try {
        for (long idx = lo; idx < hi; ++idx) {
          try {
            results.emplace_back(
                run_trajectory(basis, cfg.traj, cfg.base_seed,
                               static_cast<uint64_t>(idx)));
          } catch (const TrajectoryError&) {
            results.emplace_back(std::nullopt);
          }
        }
        BlockSums blk = accumulate_block(b, results);
        std::lock_guard<std::mutex> lock(mu);
        done.emplace(b, std::move(blk));
        if (!cfg.checkpoint_path.empty()) {
          const auto now = Clock::now();
          const double elapsed =
              std::chrono::duration<double>(now - last_save).count();
          if (elapsed >= cfg.checkpoint_interval_s) {
            save_checkpoint(cfg.checkpoint_path, hash, cfg.traj.n_out, done);
            last_save = now;
          }
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };

  const int n_workers =
      std::min<long>(resolve_workers(cfg.workers), n_blocks);
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);

  const bool complete = static_cast<long>(done.size()) == n_blocks;
  if (!cfg.checkpoint_path.empty()) {
    save_checkpoint(cfg.checkpoint_path, hash, cfg.traj.n_out, done);
  }

  std::vector<BlockSums> ordered;
  ordered.reserve(done.size());
  for (auto& [idx, blk] : done) ordered.push_back(std::move(blk));
  EnsembleConfig effective = cfg;
  if (!complete) {
    long counted = 0;
    for (const auto& blk : ordered) counted += blk.count + blk.failures;
    effective.n_traj = static_cast<int>(counted);
  }
  return merge_blocks(ordered, effective, complete);
}

namespace {

struct CurveDistance {
  double dist = 0.0;
  double band = 0.0;
};

CurveDistance curve_distance(const EnsembleResult& a, const EnsembleResult& b) {
  const int n = a.mean.size();
  CurveDistance out;
  const Eigen::VectorXd* means_a[3] = {&a.mean.jx, &a.mean.jy, &a.mean.jz};
  const Eigen::VectorXd* means_b[3] = {&b.mean.jx, &b.mean.jy, &b.mean.jz};
  const Eigen::VectorXd* se_a[3] = {&a.stderr_jx, &a.stderr_jy, &a.stderr_jz};
  const Eigen::VectorXd* se_b[3] = {&b.stderr_jx, &b.stderr_jy, &b.stderr_jz};
  for (int obs = 0; obs < 3; ++obs) {
    double d2 = 0.0, b2 = 0.0;
    for (int t = 0; t < n; ++t) {
      const double d = (*means_a[obs])(t) - (*means_b[obs])(t);
      d2 += d * d;
      b2 += (*se_a[obs])(t) * (*se_a[obs])(t) +
            (*se_b[obs])(t) * (*se_b[obs])(t);
    }
    out.dist = std::max(out.dist, std::sqrt(d2 / n));
    out.band = std::max(out.band, std::sqrt(b2 / n));
  }
  return out;
}

}  // namespace

LadderReport gamma_ladder(const LadderConfig& cfg) {
  if (cfg.eps_list.empty()) {
    throw std::invalid_argument("gamma_ladder: eps_list is empty");
  }
  for (size_t i = 1; i < cfg.eps_list.size(); ++i) {
    if (!(cfg.eps_list[i] < cfg.eps_list[i - 1])) {
      throw std::invalid_argument("gamma_ladder: eps_list must be descending");
    }
  }

  LadderReport report;
  for (double eps : cfg.eps_list) {
    LadderEntry entry;
    entry.epsilon = eps;
    entry.params =
        suggest_parameters(cfg.n_particles, eps, cfg.safety, cfg.m_override);
    const CoherentBasis basis =
        build_cap_basis(cfg.n_particles, entry.params.m_states, cfg.gram_cutoff);
    EnsembleConfig ens;
    ens.traj.n_particles = cfg.n_particles;
    ens.traj.omega = cfg.omega;
    ens.traj.u = cfg.u;
    ens.traj.gamma = entry.params.gamma_over_omega * cfg.omega;
    ens.traj.dt = entry.params.omega_dt / cfg.omega;
    ens.traj.t_final = cfg.t_final;
    ens.traj.n_out = cfg.n_out;
    ens.traj.sign = cfg.sign;
    ens.n_traj = cfg.n_traj;
    ens.base_seed = cfg.base_seed;
    ens.workers = cfg.workers;
    ens.gram_cutoff = cfg.gram_cutoff;
    entry.result = run_ensemble(basis, ens);
    report.entries.push_back(std::move(entry));
  }

  if (report.entries.size() < 2) {
    report.converged = false;
    report.verdict = "insufficient ladder";
    return report;
  }
  for (size_t k = 0; k + 1 < report.entries.size(); ++k) {
    const CurveDistance cd =
        curve_distance(report.entries[k].result, report.entries[k + 1].result);
    report.successive_distance.push_back(cd.dist);
    report.successive_band.push_back(cd.band);
  }
  const double final_dist = report.successive_distance.back();
  const double final_band = report.successive_band.back();
  report.converged = final_dist <= 3.0 * final_band;
  report.verdict = report.converged
                       ? "converged: final successive distance " +
                             std::to_string(final_dist) +
                             " within 3x stderr band " +
                             std::to_string(final_band)
                       : "not converged at smallest epsilon: distance " +
                             std::to_string(final_dist) + " exceeds 3x band " +
                             std::to_string(final_band);
  return report;
}

ScalingReport step_scaling_experiment(const std::vector<int>& n_list,
                                      int m_states,
                                      const ScalingProtocol& protocol) {
  if (n_list.size() < 2) {
    throw std::invalid_argument(
        "step_scaling_experiment: need at least two sizes; fit refused");
  }

  ScalingReport report;
  for (int n : n_list) {
    ScalingPoint point;
    point.n_particles = n;
    point.m_states = std::min(m_states, n + 1);
    const CoherentBasis basis =
        build_cap_basis(n, point.m_states, protocol.gram_cutoff);
    const double log_n = std::log(static_cast<double>(n));
    const double horizon = protocol.horizon_log_n_factor * log_n / protocol.omega;
    const double gamma =
        protocol.epsilon * protocol.omega / (n * log_n);

    auto stable = [&](long k) -> bool {
      TrajectoryConfig tc;
      tc.n_particles = n;
      tc.omega = protocol.omega;
      tc.u = protocol.u;
      tc.gamma = gamma;
      tc.dt = 1.0 / (k * protocol.omega);
      tc.t_final = horizon;
      tc.n_out = 9;
      tc.norm_drift_abort = protocol.drift_threshold;
      try {
        const TrajectoryResult r =
            run_trajectory(basis, tc, protocol.seed, 0);
        return r.diag.max_norm_drift <= protocol.drift_threshold;
      } catch (const TrajectoryError&) {
        return false;
      }
    };

    long k_hi = static_cast<long>(std::ceil(
        protocol.safety_start * std::sqrt(static_cast<double>(n) *
                                          point.m_states)));
    int expansions = 0;
    while (!stable(k_hi) && expansions < 8) {
      k_hi *= 2;
      ++expansions;
    }
    if (expansions == 8) {
      point.bracketed = false;
      report.points.push_back(point);
      continue;
    }
    long k_lo = std::max<long>(1, k_hi / 16);
    while (k_lo > 1 && stable(k_lo)) {
      k_hi = k_lo;
      k_lo = std::max<long>(1, k_lo / 2);
    }
    if (k_lo == 1 && stable(1)) {
      point.k_min = 1;
      point.bracketed = true;
    } else {
      while (k_hi > static_cast<long>(k_lo * (1.0 + protocol.bracket_rtol)) + 1) {
        const long k_mid = static_cast<long>(
            std::llround(std::sqrt(static_cast<double>(k_hi) * k_lo)));
        if (k_mid <= k_lo || k_mid >= k_hi) break;
        if (stable(k_mid)) {
          k_hi = k_mid;
        } else {
          k_lo = k_mid;
        }
      }
      point.k_min = static_cast<int>(k_hi);
      point.bracketed = true;
    }
    point.doubled_stable = stable(2L * point.k_min);
    report.points.push_back(point);
  }

  // least-squares fit of ln k against ln n, n = N+1
  std::vector<double> xs, ys;
  for (const auto& p : report.points) {
    if (!p.bracketed) continue;
    xs.push_back(std::log(static_cast<double>(p.n_particles + 1)));
    ys.push_back(std::log(static_cast<double>(p.k_min)));
  }
  const size_t m = xs.size();
  if (m < 2) {
    report.fit_ok = false;
    return report;
  }
  double sx = 0, sy = 0;
  for (size_t i = 0; i < m; ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < m; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  report.slope = sxy / sxx;
  report.intercept = my - report.slope * mx;
  double ss_res = 0;
  for (size_t i = 0; i < m; ++i) {
    const double r = ys[i] - (report.intercept + report.slope * xs[i]);
    report.residuals.push_back(r);
    ss_res += r * r;
  }
  report.slope_stderr =
      (m > 2) ? std::sqrt(ss_res / (m - 2) / sxx) : 0.0;
  report.fit_ok = true;
  return report;
}

}  // namespace dcg
