// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#include "hdfm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "hdfm/errors.hpp"
#include "hdfm/rng.hpp"
#include "hdfm/tensor_io.hpp"

namespace hdfm {

namespace {

// The scalar update expressions live here once, shared by the per-chain and
// the batched integrators, so the two produce identical bits.
void velocity_row(double* v, const double* vb, const double* dl, double beta,
                  std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) v[i] = vb[i] - beta * dl[i];
}

void euler_row(double* znext, const double* z, const double* v, double h,
               std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) znext[i] = z[i] + h * v[i];
}

void heun_row(double* znext, const double* z, const double* v1,
              const double* v2, double h, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    znext[i] = z[i] + 0.5 * h * (v1[i] + v2[i]);
}

double sigma_change(const double* prev, const double* cand, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = cand[i] - prev[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double beta_from_sigmas(double sigma_full, double sigma_no, double lo,
                        double hi) {
  if (sigma_full == 0.0 && sigma_no == 0.0) return 0.5;
  const double raw = sigma_no / (sigma_full + sigma_no);
  return std::clamp(raw, lo, hi);
}

// Candidate one-step advances from row z; returns the clamped weight.
double row_adaptive_beta(const double* z, const double* vb, const double* dl,
                         double h, std::size_t n, double lo, double hi,
                         double* vf, double* cf, double* cn) {
  velocity_row(vf, vb, dl, 1.0, n);
  euler_row(cf, z, vf, h, n);
  euler_row(cn, z, vb, h, n);
  return beta_from_sigmas(sigma_change(z, cf, n), sigma_change(z, cn, n), lo,
                          hi);
}

bool row_all_finite(const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

double row_norm2(const double* p, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += p[i] * p[i];
  return std::sqrt(s);
}

void record_state(Trajectory& traj, const SamplerConfig& cfg, double t,
                  const GridField& z) {
  if (!cfg.record_states && !cfg.record_dct) return;
  traj.times.push_back(t);
  if (cfg.record_states) traj.states.push_back(z);
  if (cfg.record_dct) traj.dct_states.push_back(dct_forward(z));
}

// One full ODE run. force_beta_one pins the correction weight to the exact
// dynamics, which the pure-blur variant needs (its v_base is identically 0).
SampleResult run_ode(const Predictor& pred, const GridField& z0,
                     const SamplerConfig& cfg, const HeatSchedule& sched,
                     std::optional<std::uint32_t> y, PathKind kind,
                     bool force_beta_one) {
  cfg.validate();
  if (z0.dims() != pred.data_dims())
    throw std::invalid_argument("start state shape " + shape_string(z0.dims()) +
                                " does not match predictor shape " +
                                shape_string(pred.data_dims()));
  sched.require_compatible(z0);
  require_finite(z0, "sampler start state");

  const std::vector<double> ts = time_grid(sched, cfg.steps, cfg.grid);
  const std::size_t n = z0.size();
  GridField z = z0;
  GridField v(z.dims()), znext(z.dims());
  GridField vf(z.dims()), cf(z.dims()), cn(z.dims());

  SampleResult res;
  res.traj.steps.reserve(cfg.steps);
  record_state(res.traj, cfg, ts[0], z);

  for (std::uint32_t i = 0; i < cfg.steps; ++i) {
    const double t = ts[i];
    const double h = ts[i + 1] - ts[i];

    double alpha_eff = 1.0;
    VelocityParts parts = guided_parts(pred, z, t, y, sched, kind, cfg,
                                       &alpha_eff);

    double beta;
    if (force_beta_one)
      beta = 1.0;
    else if (cfg.beta_mode == BetaMode::FIXED)
      beta = cfg.beta_fixed;
    else if (i == 0)
      beta = 0.5;  // no preceding interval to measure
    else
      beta = row_adaptive_beta(z.data(), parts.v_base.data(),
                               parts.delta.data(), h, n, cfg.beta_lo,
                               cfg.beta_hi, vf.data(), cf.data(), cn.data());

    velocity_row(v.data(), parts.v_base.data(), parts.delta.data(), beta, n);

    if (cfg.solver == Solver::EULER) {
      euler_row(znext.data(), z.data(), v.data(), h, n);
    } else {
      GridField zstar(z.dims());
      euler_row(zstar.data(), z.data(), v.data(), h, n);
      VelocityParts parts2 =
          guided_parts(pred, zstar, ts[i + 1], y, sched, kind, cfg, nullptr);
      GridField v2(z.dims());
      velocity_row(v2.data(), parts2.v_base.data(), parts2.delta.data(), beta,
                   n);
      heun_row(znext.data(), z.data(), v.data(), v2.data(), h, n);
    }

    if (!row_all_finite(znext.data(), n))
      throw ValidationError("sampler state is non-finite at step " +
                            std::to_string(i));

    res.traj.steps.push_back({i, t, beta, alpha_eff,
                              row_norm2(parts.v_base.data(), n),
                              row_norm2(parts.delta.data(), n)});
    z = znext;
    record_state(res.traj, cfg, ts[i + 1], z);
  }
  res.x = std::move(z);
  return res;
}

// Batched velocity assembly on 1-D fields, mirroring assemble_velocity_parts
// row for row (same expressions, heat_rows in place of heat_endpoint).
void assemble_rows(const MlpModel& m, const Mat& z, double t,
                   const HeatSchedule& sched, PathKind kind,
                   std::uint32_t workers, Mat& v_base, Mat& delta) {
  const std::size_t B = z.rows, D = z.cols;
  Mat input(B, m.cfg.input_dim());
  for (std::size_t b = 0; b < B; ++b)
    fill_input_row(m, z.row(b), t, std::nullopt, input.row(b));
  Activations acts;
  mlp_forward(m, input, acts, workers);
  const Mat& out = acts.out;

  const double tc = sched.clamp_t(t);
  const double sden = sched.s(t);
  v_base = Mat(B, D);
  delta = Mat(B, D);

  if (m.cfg.head == Head::V_PRED) {
    std::copy(out.v.begin(), out.v.end(), v_base.v.begin());
    return;
  }

  Mat uhat(B, D);
  if (m.cfg.head == Head::X_PRED) {
    std::copy(out.v.begin(), out.v.end(), uhat.v.begin());
  } else {
    for (std::size_t i = 0; i < uhat.v.size(); ++i)
      uhat.v[i] = (z.v[i] - (1.0 - t) * out.v[i]) / tc;
  }

  if (kind == PathKind::NOISE_FM) {
    for (std::size_t i = 0; i < uhat.v.size(); ++i)
      v_base.v[i] = (uhat.v[i] - z.v[i]) / sden;
    return;
  }

  const double tau =
      m.cfg.head == Head::X_PRED ? sched.tau(t) : sched.tau(1.0);
  std::vector<double> taus(B, tau);
  Mat u(0, 0), lap(0, 0);
  heat_rows(uhat, taus, sched.eigen, u, lap);
  for (std::size_t i = 0; i < u.v.size(); ++i)
    v_base.v[i] = (u.v[i] - z.v[i]) / sden;
  delta = std::move(lap);
}

}  // namespace

const char* solver_name(Solver s) {
  return s == Solver::EULER ? "euler" : "heun";
}

Solver solver_from_name(const std::string& name) {
  if (name == "euler") return Solver::EULER;
  if (name == "heun") return Solver::HEUN;
  throw std::invalid_argument("unknown solver \"" + name +
                              "\" (expected euler or heun)");
}

const char* beta_mode_name(BetaMode m) {
  return m == BetaMode::FIXED ? "fixed" : "adaptive";
}

BetaMode beta_mode_from_name(const std::string& name) {
  if (name == "fixed") return BetaMode::FIXED;
  if (name == "adaptive") return BetaMode::ADAPTIVE;
  throw std::invalid_argument("unknown beta mode \"" + name +
                              "\" (expected fixed or adaptive)");
}

const char* time_grid_name(TimeGrid g) {
  return g == TimeGrid::UNIFORM_T ? "uniform" : "log";
}

TimeGrid time_grid_from_name(const std::string& name) {
  if (name == "uniform") return TimeGrid::UNIFORM_T;
  if (name == "log") return TimeGrid::LOG_T;
  throw std::invalid_argument("unknown time grid \"" + name +
                              "\" (expected uniform or log)");
}

void SamplerConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("sampler needs at least one step");
  if (!(cfg_scale >= 1.0))
    throw std::invalid_argument("guidance scale must be at least 1");
  if (!(cfg_t_min >= 0.0 && cfg_t_min < cfg_t_max && cfg_t_max <= 1.0))
    throw std::invalid_argument(
        "guidance interval needs 0 <= t_min < t_max <= 1");
  if (!(std::isfinite(beta_fixed) && beta_fixed >= 0.0))
    throw std::invalid_argument("fixed beta must be finite and nonnegative");
  if (!(beta_lo > 0.0 && beta_lo < beta_hi && beta_hi < 1.0))
    throw std::invalid_argument("beta clamp needs 0 < lo < hi < 1");
  if (!(sigma > 0.0))
    throw std::invalid_argument("noise scale must be positive");
  if (workers < 1)
    throw std::invalid_argument("workers must be at least 1");
}

std::vector<double> time_grid(const HeatSchedule& sched, std::uint32_t steps,
                              TimeGrid grid) {
  if (steps < 1) throw std::invalid_argument("sampler needs at least one step");
  const double t0 = sched.t_floor;
  std::vector<double> ts(steps + 1);
  ts[0] = t0;
  ts[steps] = 1.0;
  const double log_t0 = std::log(t0);
  for (std::uint32_t i = 1; i < steps; ++i) {
    const double f = static_cast<double>(i) / steps;
    ts[i] = grid == TimeGrid::UNIFORM_T ? t0 + (1.0 - t0) * f
                                        : std::exp((1.0 - f) * log_t0);
  }
  for (std::uint32_t i = 0; i < steps; ++i)
    if (!(ts[i + 1] > ts[i]))
      throw std::invalid_argument("time grid is not strictly increasing");
  return ts;
}

double effective_alpha(double alpha, double t, double t_min, double t_max) {
  return (t > t_min && t < t_max) ? alpha : 1.0;
}

VelocityParts cfg_combine(const VelocityParts& cond, const VelocityParts& uncond,
                          double alpha) {
  require_same_shape(cond.v_base, uncond.v_base, "cfg_combine");
  require_same_shape(cond.delta, uncond.delta, "cfg_combine");
  if (alpha == 1.0) return cond;
  VelocityParts out{GridField(cond.v_base.dims()), GridField(cond.delta.dims())};
  for (std::size_t i = 0; i < cond.v_base.size(); ++i)
    out.v_base[i] =
        uncond.v_base[i] + alpha * (cond.v_base[i] - uncond.v_base[i]);
  for (std::size_t i = 0; i < cond.delta.size(); ++i)
    out.delta[i] = uncond.delta[i] + alpha * (cond.delta[i] - uncond.delta[i]);
  return out;
}

double adaptive_beta(const GridField& prev, const GridField& cand_full,
                     const GridField& cand_nodelta, double lo, double hi) {
  require_same_shape(prev, cand_full, "adaptive_beta");
  require_same_shape(prev, cand_nodelta, "adaptive_beta");
  if (!(lo > 0.0 && lo < hi && hi < 1.0))
    throw std::invalid_argument("beta clamp needs 0 < lo < hi < 1");
  const double sf = sigma_change(prev.data(), cand_full.data(), prev.size());
  const double sn = sigma_change(prev.data(), cand_nodelta.data(), prev.size());
  return beta_from_sigmas(sf, sn, lo, hi);
}

VelocityParts guided_parts(const Predictor& pred, const GridField& z, double t,
                           std::optional<std::uint32_t> y,
                           const HeatSchedule& sched, PathKind kind,
                           const SamplerConfig& cfg, double* alpha_eff_out) {
  const bool active =
      y.has_value() && pred.conditional() && cfg.cfg_scale > 1.0;
  const double alpha_eff =
      active ? effective_alpha(cfg.cfg_scale, t, cfg.cfg_t_min, cfg.cfg_t_max)
             : 1.0;
  if (alpha_eff_out) *alpha_eff_out = alpha_eff;
  VelocityParts cond =
      assemble_velocity_parts(pred.head(), pred.predict(z, t, y), z, t, sched,
                              kind);
  if (alpha_eff == 1.0) return cond;
  VelocityParts uncond = assemble_velocity_parts(
      pred.head(), pred.predict(z, t, std::nullopt), z, t, sched, kind);
  return cfg_combine(cond, uncond, alpha_eff);
}

SampleResult sample_from(const Predictor& pred, const GridField& z0,
                         const SamplerConfig& cfg, const HeatSchedule& sched,
                         std::optional<std::uint32_t> y, PathKind kind) {
  if (kind == PathKind::PURE_BLUR)
    throw std::invalid_argument(
        "pure blur runs start from data; use sample_pure_blur");
  return run_ode(pred, z0, cfg, sched, y, kind, false);
}

SampleResult sample(const Predictor& pred, const SamplerConfig& cfg,
                    const HeatSchedule& sched, std::optional<std::uint32_t> y,
                    PathKind kind) {
  if (kind == PathKind::PURE_BLUR)
    throw std::invalid_argument(
        "pure blur runs start from data; use sample_pure_blur");
  cfg.validate();
  Rng rng(cfg.seed);
  GridField z0 = normal_field(rng, pred.data_dims(), cfg.sigma);
  return run_ode(pred, z0, cfg, sched, y, kind, false);
}

SampleResult sample_pure_blur(const Predictor& pred, const SamplerConfig& cfg,
                              const HeatSchedule& sched,
                              const GridField& x_init) {
  if (pred.head() == Head::EPS_PRED)
    throw std::invalid_argument("eps head is undefined on the pure blur path");
  cfg.validate();
  sched.require_compatible(x_init);
  GridField z0 = heat_endpoint(x_init, sched.t_floor, sched).u;
  return run_ode(pred, z0, cfg, sched, std::nullopt, PathKind::PURE_BLUR, true);
}

std::vector<GridField> sample_batch(const Predictor& pred,
                                    const SamplerConfig& cfg,
                                    const HeatSchedule& sched,
                                    std::uint32_t count, PathKind kind) {
  if (kind == PathKind::PURE_BLUR)
    throw std::invalid_argument(
        "pure blur runs start from data; use sample_pure_blur");
  cfg.validate();
  std::vector<GridField> out;
  out.reserve(count);
  const std::vector<std::uint32_t> dims = pred.data_dims();
  const auto* mp = dynamic_cast<const MlpPredictor*>(&pred);
  const bool batched = mp != nullptr && dims.size() == 1;

  if (!batched) {
    for (std::uint32_t i = 0; i < count; ++i) {
      SamplerConfig ci = cfg;
      ci.seed = Rng::mix(cfg.seed, i);
      ci.record_states = false;
      ci.record_dct = false;
      out.push_back(sample(pred, ci, sched, std::nullopt, kind).x);
    }
    return out;
  }

  const MlpModel& m = mp->model();
  const std::size_t B = count, D = dims[0];
  Mat z(B, D);
  for (std::size_t b = 0; b < B; ++b) {
    Rng rng(Rng::mix(cfg.seed, b));
    GridField z0 = normal_field(rng, dims, cfg.sigma);
    std::copy(z0.data(), z0.data() + D, z.row(b));
  }

  const std::vector<double> ts = time_grid(sched, cfg.steps, cfg.grid);
  Mat vb(0, 0), dl(0, 0), vb2(0, 0), dl2(0, 0);
  Mat v(B, D), znext(B, D), zstar(B, D), v2(B, D);
  std::vector<double> vf(D), cf(D), cn(D), betas(B);

  for (std::uint32_t i = 0; i < cfg.steps; ++i) {
    const double t = ts[i];
    const double h = ts[i + 1] - ts[i];
    assemble_rows(m, z, t, sched, kind, cfg.workers, vb, dl);

    for (std::size_t b = 0; b < B; ++b) {
      if (cfg.beta_mode == BetaMode::FIXED)
        betas[b] = cfg.beta_fixed;
      else if (i == 0)
        betas[b] = 0.5;
      else
        betas[b] = row_adaptive_beta(z.row(b), vb.row(b), dl.row(b), h, D,
                                     cfg.beta_lo, cfg.beta_hi, vf.data(),
                                     cf.data(), cn.data());
      velocity_row(v.row(b), vb.row(b), dl.row(b), betas[b], D);
    }

    if (cfg.solver == Solver::EULER) {
      for (std::size_t b = 0; b < B; ++b)
        euler_row(znext.row(b), z.row(b), v.row(b), h, D);
    } else {
      for (std::size_t b = 0; b < B; ++b)
        euler_row(zstar.row(b), z.row(b), v.row(b), h, D);
      assemble_rows(m, zstar, ts[i + 1], sched, kind, cfg.workers, vb2, dl2);
      for (std::size_t b = 0; b < B; ++b) {
        velocity_row(v2.row(b), vb2.row(b), dl2.row(b), betas[b], D);
        heun_row(znext.row(b), z.row(b), v.row(b), v2.row(b), h, D);
      }
    }

    for (std::size_t b = 0; b < B; ++b)
      if (!row_all_finite(znext.row(b), D))
        throw ValidationError("sampler state is non-finite at step " +
                              std::to_string(i) + " (chain " +
                              std::to_string(b) + ")");
    std::swap(z, znext);
  }

  for (std::size_t b = 0; b < B; ++b) {
    GridField f(dims);
    std::copy(z.row(b), z.row(b) + D, f.data());
    out.push_back(std::move(f));
  }
  return out;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  CsvWriter w(path, {"step", "t", "beta", "alpha_eff", "v_base_norm",
                     "delta_norm"});
  for (const StepRecord& r : traj.steps)
    w.row({std::to_string(r.step), format_double(r.t), format_double(r.beta),
           format_double(r.alpha_eff), format_double(r.v_base_norm),
           format_double(r.delta_norm)});
}

}  // namespace hdfm
