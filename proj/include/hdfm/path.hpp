// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>

#include "hdfm/field.hpp"
#include "hdfm/rng.hpp"
#include "hdfm/spectral.hpp"

namespace hdfm {

// Forward corruption processes.
//
// HDFM interpolates between noise and the heat endpoint of the data,
//   z_t = t * u_t + (1 - t) * e,        u_t = H_{tau(t)}(x),
// and its exact target velocity carries the moving-endpoint correction:
//   v* = (u_t - z_t) / s(t) - Delta u_t.
// NOISE_FM is the plain linear noise-to-data path (u_t -> x, no Laplacian
// term). PURE_BLUR follows the deterministic deblurring trajectory z_t = u_t
// with v* = -(1 / max(t, t_floor)) * Delta u_t; there is no noise branch.
enum class PathKind { HDFM, NOISE_FM, PURE_BLUR };

const char* path_kind_name(PathKind kind);
PathKind path_kind_from_name(const std::string& name);

struct PathSample {
  double t = 0.0;
  PathKind kind = PathKind::HDFM;
  GridField z;       // state on the path at time t
  GridField u;       // data endpoint (heat endpoint; the raw x for NOISE_FM)
  GridField lap_u;   // Laplacian of u (zeros for NOISE_FM)
  GridField e;       // the noise draw the caller supplied
  GridField v_star;  // exact target velocity at (z, t)
  GridField x;       // clean sample
  std::optional<std::uint32_t> label;
};

// Caller owns the RNG and supplies the noise draw e explicitly.
PathSample sample_path(const GridField& x, double t, const GridField& e,
                       const HeatSchedule& sched, PathKind kind,
                       std::optional<std::uint32_t> label = std::nullopt);

// Whole-batch construction. On 1-D fields the dissipation runs as batched
// matrix work (much faster per sample); the result is bit-for-bit what
// sample_path yields element by element, so the two are interchangeable.
std::vector<PathSample> sample_path_batch(
    const std::vector<GridField>& xs, const std::vector<double>& ts,
    const std::vector<GridField>& es, const HeatSchedule& sched, PathKind kind,
    const std::vector<std::optional<std::uint32_t>>& labels);

enum class TimeScheme { UNIFORM, LOGIT_NORMAL };

// Training-time draw; uniform on [t_floor, 1 - t_floor] by default, or a
// logit-normal draw clamped into the same interval.
double draw_time(Rng& rng, const HeatSchedule& sched,
                 TimeScheme scheme = TimeScheme::UNIFORM);

// The term a plain interpolation velocity ignores: v* - (u_t - z_t)/s(t),
// which is -Delta u_t. Independent of the noise draw.
GridField delta_ignored_bias(const GridField& x, double t,
                             const HeatSchedule& sched);

}  // namespace hdfm
