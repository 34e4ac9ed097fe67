// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hdfm/field.hpp"
#include "hdfm/neural.hpp"
#include "hdfm/path.hpp"
#include "hdfm/spectral.hpp"

namespace hdfm {

// Probability-flow ODE integration. Each step assembles the velocity in its
// two components, v = v_base - beta * delta, so classifier-free guidance and
// the dissipation-correction fusion act on them separately.

enum class Solver { EULER, HEUN };
const char* solver_name(Solver s);
Solver solver_from_name(const std::string& name);

enum class BetaMode { FIXED, ADAPTIVE };
const char* beta_mode_name(BetaMode m);
BetaMode beta_mode_from_name(const std::string& name);

// The integration grid runs from t_floor to 1. UNIFORM_T is the default;
// LOG_T concentrates steps near t_floor, where the pure-blur velocity
// -(1/t) lap u is stiff.
enum class TimeGrid { UNIFORM_T, LOG_T };
const char* time_grid_name(TimeGrid g);
TimeGrid time_grid_from_name(const std::string& name);

struct SamplerConfig {
  std::uint32_t steps = 64;
  Solver solver = Solver::HEUN;
  // Guidance acts only for t inside (cfg_t_min, cfg_t_max) on conditional
  // runs with a label; elsewhere the effective scale is exactly 1.
  double cfg_scale = 3.5;
  double cfg_t_min = 0.1, cfg_t_max = 0.9;
  BetaMode beta_mode = BetaMode::ADAPTIVE;
  // FIXED mode echoes beta_fixed without clamping; 1 gives the exact
  // dynamics. The clamp below applies to adaptively produced values.
  double beta_fixed = 1.0;
  double beta_lo = 0.05, beta_hi = 0.95;
  double sigma = 1.0;  // scale of the z(t_floor) prior draw
  std::uint64_t seed = 0;
  TimeGrid grid = TimeGrid::UNIFORM_T;
  std::uint32_t workers = 1;  // threads inside batched matrix work
  bool record_states = false;
  bool record_dct = false;  // store DCT coefficients of each recorded state

  void validate() const;
};

struct StepRecord {
  std::uint32_t step = 0;
  double t = 0.0;  // time the step velocity was assembled at
  double beta = 0.0;
  double alpha_eff = 1.0;
  double v_base_norm = 0.0;  // after guidance combination
  double delta_norm = 0.0;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  // Filled when record_states / record_dct is set: the state grid includes
  // both endpoints, so there is one more entry than integration steps.
  std::vector<double> times;
  std::vector<GridField> states;
  std::vector<GridField> dct_states;
};

struct SampleResult {
  GridField x;
  Trajectory traj;
};

// steps + 1 strictly increasing times from t_floor to exactly 1.
std::vector<double> time_grid(const HeatSchedule& sched, std::uint32_t steps,
                              TimeGrid grid);

// alpha when t lies strictly inside (t_min, t_max), else exactly 1.
double effective_alpha(double alpha, double t, double t_min, double t_max);

// Componentwise guidance: out = uncond + alpha * (cond - uncond) on both
// components. alpha == 1 returns the conditional pair untouched.
VelocityParts cfg_combine(const VelocityParts& cond, const VelocityParts& uncond,
                          double alpha);

// Correction weight from two trial one-step advances of the same state, one
// with the full velocity and one without the delta term:
//   beta = clip(sigma_no / (sigma_full + sigma_no), lo, hi)
// where each sigma is the l2 norm of that candidate's change. Both norms
// zero returns 1/2 (the symmetric limit).
double adaptive_beta(const GridField& prev, const GridField& cand_full,
                     const GridField& cand_nodelta, double lo = 0.05,
                     double hi = 0.95);

// Velocity components at one state, guidance already applied. alpha_eff_out
// (optional) reports the effective scale used.
VelocityParts guided_parts(const Predictor& pred, const GridField& z, double t,
                           std::optional<std::uint32_t> y,
                           const HeatSchedule& sched, PathKind kind,
                           const SamplerConfig& cfg,
                           double* alpha_eff_out = nullptr);

// Integrate from a caller-supplied start state at t_floor up to t = 1.
// The first ADAPTIVE step has no preceding interval and uses beta = 1/2.
// A non-finite state aborts with the offending step index.
SampleResult sample_from(const Predictor& pred, const GridField& z0,
                         const SamplerConfig& cfg, const HeatSchedule& sched,
                         std::optional<std::uint32_t> y = std::nullopt,
                         PathKind kind = PathKind::HDFM);

// Draw z(t_floor) ~ N(0, sigma^2 I) from Rng(cfg.seed) and integrate.
// PURE_BLUR has no noise prior and is rejected here; use sample_pure_blur.
SampleResult sample(const Predictor& pred, const SamplerConfig& cfg,
                    const HeatSchedule& sched,
                    std::optional<std::uint32_t> y = std::nullopt,
                    PathKind kind = PathKind::HDFM);

// Deterministic deblurring run: starts from the heat endpoint of x_init at
// t_floor and integrates v = -(1/t) lap u. The exact dynamics need the full
// delta term, so beta is forced to 1. EPS_PRED is rejected.
SampleResult sample_pure_blur(const Predictor& pred, const SamplerConfig& cfg,
                              const HeatSchedule& sched,
                              const GridField& x_init);

// Many unconditional chains; chain i draws its start from
// Rng(Rng::mix(cfg.seed, i)). On 1-D fields with an MLP predictor the
// network and dissipation run as batched matrix work; the outputs are
// bit-for-bit what per-chain sample() produces with seed mix(cfg.seed, i).
std::vector<GridField> sample_batch(const Predictor& pred,
                                    const SamplerConfig& cfg,
                                    const HeatSchedule& sched,
                                    std::uint32_t count,
                                    PathKind kind = PathKind::HDFM);

// CSV with columns step,t,beta,alpha_eff,v_base_norm,delta_norm.
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

}  // namespace hdfm
