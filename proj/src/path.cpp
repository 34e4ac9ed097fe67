// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#include "hdfm/path.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hdfm {

const char* path_kind_name(PathKind kind) {
  switch (kind) {
    case PathKind::HDFM: return "hdfm";
    case PathKind::NOISE_FM: return "noise_fm";
    case PathKind::PURE_BLUR: return "pure_blur";
  }
  return "?";
}

PathKind path_kind_from_name(const std::string& name) {
  if (name == "hdfm") return PathKind::HDFM;
  if (name == "noise_fm" || name == "noise") return PathKind::NOISE_FM;
  if (name == "pure_blur" || name == "blur") return PathKind::PURE_BLUR;
  throw std::invalid_argument("unknown path kind '" + name + "'");
}

PathSample sample_path(const GridField& x, double t, const GridField& e,
                       const HeatSchedule& sched, PathKind kind,
                       std::optional<std::uint32_t> label) {
  require_same_shape(x, e, "sample_path");
  require_finite(x, "sample_path x");
  require_finite(e, "sample_path e");
  sched.require_compatible(x);
  const double tc = sched.clamp_t(t);

  PathSample out;
  out.t = t;
  out.kind = kind;
  out.x = x;
  out.e = e;
  out.label = label;

  if (kind == PathKind::NOISE_FM) {
    out.u = x;
    out.lap_u = GridField::zeros_like(x);
  } else {
    HeatEndpoint he = heat_endpoint(x, t, sched);
    out.u = std::move(he.u);
    out.lap_u = std::move(he.lap);
  }

  const std::size_t n = x.size();
  out.z = GridField::zeros_like(x);
  out.v_star = GridField::zeros_like(x);

  if (kind == PathKind::PURE_BLUR) {
    out.z = out.u;
    const double inv_t = 1.0 / tc;
    for (std::size_t i = 0; i < n; ++i) out.v_star[i] = -(inv_t * out.lap_u[i]);
    return out;
  }

  // Shared construction for HDFM and NOISE_FM; with u = x and lap_u = 0 the
  // expressions below reduce to the plain noise path bit-for-bit.
  const double s = sched.s(t);
  for (std::size_t i = 0; i < n; ++i)
    out.z[i] = t * out.u[i] + (1.0 - t) * e[i];
  for (std::size_t i = 0; i < n; ++i)
    out.v_star[i] = (out.u[i] - out.z[i]) / s - out.lap_u[i];
  return out;
}

double draw_time(Rng& rng, const HeatSchedule& sched, TimeScheme scheme) {
  const double lo = sched.t_floor;
  const double hi = 1.0 - sched.t_floor;
  if (scheme == TimeScheme::UNIFORM) return rng.uniform(lo, hi);
  const double t = 1.0 / (1.0 + std::exp(-rng.normal()));
  return std::min(hi, std::max(lo, t));
}

std::vector<PathSample> sample_path_batch(
    const std::vector<GridField>& xs, const std::vector<double>& ts,
    const std::vector<GridField>& es, const HeatSchedule& sched, PathKind kind,
    const std::vector<std::optional<std::uint32_t>>& labels) {
  const std::size_t B = xs.size();
  if (ts.size() != B || es.size() != B || labels.size() != B)
    throw std::invalid_argument("sample_path_batch: input lengths differ");
  std::vector<PathSample> out;
  out.reserve(B);
  // Only the dissipation benefits from batching; the noise path has none.
  const bool batched = B > 0 && xs[0].ndim() == 1 && kind != PathKind::NOISE_FM;
  if (!batched) {
    for (std::size_t b = 0; b < B; ++b)
      out.push_back(sample_path(xs[b], ts[b], es[b], sched, kind, labels[b]));
    return out;
  }
  const std::size_t n = xs[0].size();
  Mat rows(B, n);
  std::vector<double> taus(B);
  for (std::size_t b = 0; b < B; ++b) {
    require_same_shape(xs[b], es[b], "sample_path_batch");
    require_finite(xs[b], "sample_path_batch x");
    require_finite(es[b], "sample_path_batch e");
    sched.require_compatible(xs[b]);
    taus[b] = sched.tau(ts[b]);
    std::copy(xs[b].data(), xs[b].data() + n, rows.row(b));
  }
  Mat u(0, 0), lap(0, 0);
  heat_rows(rows, taus, sched.eigen, u, lap);
  for (std::size_t b = 0; b < B; ++b) {
    const double t = ts[b];
    const double tc = sched.clamp_t(t);
    PathSample ps;
    ps.t = t;
    ps.kind = kind;
    ps.x = xs[b];
    ps.e = es[b];
    ps.label = labels[b];
    ps.u = GridField(xs[b].dims());
    ps.lap_u = GridField(xs[b].dims());
    std::copy(u.row(b), u.row(b) + n, ps.u.data());
    std::copy(lap.row(b), lap.row(b) + n, ps.lap_u.data());
    ps.z = GridField::zeros_like(xs[b]);
    ps.v_star = GridField::zeros_like(xs[b]);
    if (kind == PathKind::PURE_BLUR) {
      ps.z = ps.u;
      const double inv_t = 1.0 / tc;
      for (std::size_t i = 0; i < n; ++i) ps.v_star[i] = -(inv_t * ps.lap_u[i]);
    } else {
      const double s = sched.s(t);
      for (std::size_t i = 0; i < n; ++i)
        ps.z[i] = t * ps.u[i] + (1.0 - t) * es[b][i];
      for (std::size_t i = 0; i < n; ++i)
        ps.v_star[i] = (ps.u[i] - ps.z[i]) / s - ps.lap_u[i];
    }
    out.push_back(std::move(ps));
  }
  return out;
}

GridField delta_ignored_bias(const GridField& x, double t,
                             const HeatSchedule& sched) {
  HeatEndpoint he = heat_endpoint(x, t, sched);
  GridField bias = GridField::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) bias[i] = -he.lap[i];
  return bias;
}

}  // namespace hdfm
