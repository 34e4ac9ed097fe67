// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#include "hdfm/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace hdfm {

namespace {

// Orthonormal DCT-II basis for length n, row k contiguous:
// B[k][j] = a(k) cos(pi (2j+1) k / 2n), a(0) = sqrt(1/n), a(k>0) = sqrt(2/n).
// Built once per length; the cache is shared across threads.
const std::vector<double>& basis(std::uint32_t n) {
  static std::mutex mu;
  static std::map<std::uint32_t, std::unique_ptr<std::vector<double>>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) {
    auto b = std::make_unique<std::vector<double>>(static_cast<std::size_t>(n) * n);
    const double a0 = std::sqrt(1.0 / n);
    const double ak = std::sqrt(2.0 / n);
    for (std::uint32_t k = 0; k < n; ++k) {
      const double amp = (k == 0) ? a0 : ak;
      for (std::uint32_t j = 0; j < n; ++j) {
        (*b)[static_cast<std::size_t>(k) * n + j] =
            amp * std::cos(std::numbers::pi * (2.0 * j + 1.0) * k / (2.0 * n));
      }
    }
    slot = std::move(b);
  }
  return *slot;
}

// Applies the length-n basis along one axis of a (pre, n, post) view.
// transpose=false: out[p,k,q] = sum_j B[k][j] in[p,j,q]   (analysis)
// transpose=true:  out[p,j,q] = sum_k B[k][j] in[p,k,q]   (synthesis)
void apply_axis(const double* in, double* out, std::size_t pre, std::uint32_t n,
                std::size_t post, bool transpose) {
  const std::vector<double>& b = basis(n);
  for (std::size_t p = 0; p < pre; ++p) {
    const double* ib = in + p * n * post;
    double* ob = out + p * n * post;
    std::fill(ob, ob + static_cast<std::size_t>(n) * post, 0.0);
    for (std::uint32_t k = 0; k < n; ++k) {
      for (std::uint32_t j = 0; j < n; ++j) {
        const double c = transpose ? b[static_cast<std::size_t>(j) * n + k]
                                   : b[static_cast<std::size_t>(k) * n + j];
        const double* irow = ib + static_cast<std::size_t>(j) * post;
        double* orow = ob + static_cast<std::size_t>(k) * post;
        for (std::size_t q = 0; q < post; ++q) orow[q] += c * irow[q];
      }
    }
  }
}

GridField transform(const GridField& x, bool transpose, const char* what) {
  if (x.ndim() < 1 || x.ndim() > 3)
    throw std::invalid_argument(std::string(what) +
                                ": supported ranks are 1, 2 and 3, got shape " +
                                shape_string(x.dims()));
  require_finite(x, what);
  const auto& d = x.dims();
  GridField cur(x.dims(), x.values());
  GridField tmp(x.dims());
  const std::size_t spatial_axes = (x.ndim() == 1) ? 1 : 2;
  for (std::size_t axis = 0; axis < spatial_axes; ++axis) {
    std::size_t pre = 1, post = 1;
    for (std::size_t i = 0; i < axis; ++i) pre *= d[i];
    for (std::size_t i = axis + 1; i < d.size(); ++i) post *= d[i];
    apply_axis(cur.data(), tmp.data(), pre, d[axis], post, transpose);
    std::swap(cur, tmp);
  }
  return cur;
}

}  // namespace

double EigenGrid::max_abs_lambda() const {
  double m = 0.0;
  for (double l : lambda) m = std::max(m, std::fabs(l));
  return m;
}

EigenGrid eigen_grid(const std::vector<std::uint32_t>& spatial,
                     double blur_strength) {
  if (!(blur_strength > 0.0) || blur_strength > 1.0)
    throw std::invalid_argument("blur strength must lie in (0, 1]");
  if (spatial.empty() || spatial.size() > 2)
    throw std::invalid_argument("eigen grid supports 1 or 2 spatial axes");
  for (std::uint32_t n : spatial)
    if (n == 0) throw std::invalid_argument("eigen grid dims must be positive");

  EigenGrid g;
  g.spatial = spatial;
  g.blur_strength = blur_strength;
  const double pi2 = std::numbers::pi * std::numbers::pi;
  if (spatial.size() == 1) {
    const double n = spatial[0];
    g.lambda.resize(spatial[0]);
    // Same grouping as the 2-D branch, so an (N, 1) grid carries the exact
    // same spectrum as a flat N.
    for (std::uint32_t k = 0; k < spatial[0]; ++k)
      g.lambda[k] = -blur_strength * pi2 * ((double(k) * k) / (n * n));
  } else {
    const double h = spatial[0], w = spatial[1];
    g.lambda.resize(static_cast<std::size_t>(spatial[0]) * spatial[1]);
    for (std::uint32_t k = 0; k < spatial[0]; ++k)
      for (std::uint32_t l = 0; l < spatial[1]; ++l)
        g.lambda[static_cast<std::size_t>(k) * spatial[1] + l] =
            -blur_strength * pi2 *
            ((double(k) * k) / (h * h) + (double(l) * l) / (w * w));
  }
  return g;
}

double HeatSchedule::clamp_t(double t) const {
  if (!(t >= 0.0))
    throw std::invalid_argument("flow time must be nonnegative, got " +
                                std::to_string(t));
  if (t > 1.0 + 1e-12)
    throw std::invalid_argument("flow time must not exceed 1, got " +
                                std::to_string(t));
  if (t < t_floor) return t_floor;
  return t > 1.0 ? 1.0 : t;
}

double HeatSchedule::tau(double t) const { return -std::log(clamp_t(t)); }

void HeatSchedule::require_compatible(const GridField& x) const {
  if (x.spatial_dims() != eigen.spatial)
    throw std::invalid_argument("field shape " + shape_string(x.dims()) +
                                " does not match schedule grid " +
                                shape_string(eigen.spatial));
}

HeatSchedule make_schedule(const std::vector<std::uint32_t>& field_dims,
                           double blur_strength, double t_floor, double s_eps) {
  if (!(t_floor > 0.0) || t_floor >= 1.0)
    throw std::invalid_argument("t_floor must lie in (0, 1)");
  if (!(s_eps > 0.0) || s_eps >= 1.0)
    throw std::invalid_argument("s_eps must lie in (0, 1)");
  std::vector<std::uint32_t> spatial = field_dims;
  if (spatial.size() == 3) spatial.pop_back();
  HeatSchedule sched;
  sched.eigen = eigen_grid(spatial, blur_strength);
  sched.t_floor = t_floor;
  sched.s_eps = s_eps;
  return sched;
}

GridField dct_forward(const GridField& x) { return transform(x, false, "dct_forward"); }

const Mat& dct_basis(std::uint32_t n) {
  if (n == 0) throw std::invalid_argument("dct_basis: zero length");
  static std::mutex mu;
  static std::map<std::uint32_t, std::unique_ptr<Mat>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) {
    auto m = std::make_unique<Mat>(n, n);
    m->v = basis(n);
    slot = std::move(m);
  }
  return *slot;
}

void dct_rows(const Mat& rows, Mat& coeffs) {
  if (rows.cols == 0) throw std::invalid_argument("dct_rows: empty rows");
  matmul_abt(rows, dct_basis(static_cast<std::uint32_t>(rows.cols)), coeffs);
}

void idct_rows(const Mat& coeffs, Mat& rows) {
  if (coeffs.cols == 0) throw std::invalid_argument("idct_rows: empty rows");
  matmul_ab(coeffs, dct_basis(static_cast<std::uint32_t>(coeffs.cols)), rows);
}

void heat_rows(const Mat& x_rows, const std::vector<double>& taus,
               const EigenGrid& eigen, Mat& u, Mat& lap) {
  if (eigen.spatial.size() != 1 || eigen.spatial[0] != x_rows.cols)
    throw std::invalid_argument("heat_rows: eigen grid does not match row length");
  if (taus.size() != x_rows.rows)
    throw std::invalid_argument("heat_rows: one heat time per row required");
  const auto& lam = eigen.lambda;
  const bool flat = eigen.all_zero();
  Mat coeffs(0, 0);
  dct_rows(x_rows, coeffs);
  Mat utc(x_rows.rows, x_rows.cols);
  Mat lapc(x_rows.rows, x_rows.cols);
  for (std::size_t i = 0; i < x_rows.rows; ++i) {
    if (!(taus[i] >= 0.0))
      throw std::invalid_argument("heat_rows: heat time must be nonnegative");
    const double* c = coeffs.row(i);
    double* uc = utc.row(i);
    double* lc = lapc.row(i);
    const bool identity = (taus[i] == 0.0) || flat;
    for (std::size_t k = 0; k < x_rows.cols; ++k) {
      uc[k] = identity ? c[k] : std::exp(lam[k] * taus[i]) * c[k];
      lc[k] = lam[k] * uc[k];
    }
  }
  idct_rows(lapc, lap);
  idct_rows(utc, u);
  // Identity rows return the input bit for bit, as heat_endpoint does.
  for (std::size_t i = 0; i < x_rows.rows; ++i) {
    if ((taus[i] == 0.0) || flat) {
      const double* xr = x_rows.row(i);
      std::copy(xr, xr + x_rows.cols, u.row(i));
    }
  }
}

GridField dct_inverse(const GridField& coeffs) {
  return transform(coeffs, true, "dct_inverse");
}

HeatEndpoint heat_endpoint(const GridField& x, double t,
                           const HeatSchedule& sched) {
  sched.require_compatible(x);
  const double tau = sched.tau(t);
  const GridField coeffs = dct_forward(x);
  const auto& lam = sched.eigen.lambda;
  const std::uint32_t c = x.channels();
  const bool identity = (tau == 0.0) || sched.eigen.all_zero();

  GridField ut_coeffs(x.dims());
  if (identity) {
    ut_coeffs = coeffs;
  } else {
    for (std::size_t s = 0; s < lam.size(); ++s) {
      const double f = std::exp(lam[s] * tau);
      for (std::uint32_t ch = 0; ch < c; ++ch)
        ut_coeffs[s * c + ch] = f * coeffs[s * c + ch];
    }
  }

  GridField lap_coeffs(x.dims());
  for (std::size_t s = 0; s < lam.size(); ++s)
    for (std::uint32_t ch = 0; ch < c; ++ch)
      lap_coeffs[s * c + ch] = lam[s] * ut_coeffs[s * c + ch];

  HeatEndpoint out;
  // Identity endpoint returns the input bit-for-bit instead of a transform
  // round trip.
  out.u = identity ? x : dct_inverse(ut_coeffs);
  out.lap = dct_inverse(lap_coeffs);
  return out;
}

GridField heat_endpoint_raw_tau(const GridField& x, double tau,
                                const EigenGrid& eigen) {
  if (!(tau >= 0.0))
    throw std::invalid_argument("heat time must be nonnegative");
  if (x.spatial_dims() != eigen.spatial)
    throw std::invalid_argument("field shape " + shape_string(x.dims()) +
                                " does not match eigen grid " +
                                shape_string(eigen.spatial));
  if (tau == 0.0 || eigen.all_zero()) return x;
  GridField coeffs = dct_forward(x);
  const std::uint32_t c = x.channels();
  for (std::size_t s = 0; s < eigen.lambda.size(); ++s) {
    const double f = std::exp(eigen.lambda[s] * tau);
    for (std::uint32_t ch = 0; ch < c; ++ch) coeffs[s * c + ch] *= f;
  }
  return dct_inverse(coeffs);
}

BandMask make_band_mask(const std::vector<std::uint32_t>& spatial,
                        double cutoff_fraction) {
  if (!(cutoff_fraction > 0.0) || cutoff_fraction >= 1.0)
    throw std::invalid_argument("cutoff fraction must lie in (0, 1)");
  if (spatial.empty() || spatial.size() > 2)
    throw std::invalid_argument("band mask supports 1 or 2 spatial axes");

  BandMask mask;
  const std::size_t n = element_count(spatial);
  mask.low.resize(n);
  // Nyquist radius in normalized units: each axis with more than one sample
  // contributes 1 at its top frequency.
  double nyq2 = 0.0;
  for (std::uint32_t d : spatial)
    if (d > 1) nyq2 += 1.0;
  const double nyq = std::sqrt(nyq2);

  auto radius = [&](std::size_t s) {
    double r2 = 0.0;
    if (spatial.size() == 1) {
      const double f = spatial[0] > 1 ? double(s) / (spatial[0] - 1) : 0.0;
      r2 = f * f;
    } else {
      const std::uint32_t k = static_cast<std::uint32_t>(s / spatial[1]);
      const std::uint32_t l = static_cast<std::uint32_t>(s % spatial[1]);
      const double fk = spatial[0] > 1 ? double(k) / (spatial[0] - 1) : 0.0;
      const double fl = spatial[1] > 1 ? double(l) / (spatial[1] - 1) : 0.0;
      r2 = fk * fk + fl * fl;
    }
    return std::sqrt(r2);
  };

  for (std::size_t s = 0; s < n; ++s) {
    // A degenerate all-constant grid keeps everything in the low band.
    const bool low = (nyq == 0.0) || radius(s) < cutoff_fraction * nyq;
    mask.low[s] = low;
    if (low)
      ++mask.low_count;
    else
      ++mask.high_count;
  }
  return mask;
}

EnergySplit spectral_energy_split(const GridField& x, double cutoff_fraction) {
  const GridField coeffs = dct_forward(x);
  const BandMask mask = make_band_mask(x.spatial_dims(), cutoff_fraction);
  return energy_split_from_coeffs(coeffs, mask);
}

EnergySplit energy_split_from_coeffs(const GridField& coeffs,
                                     const BandMask& mask) {
  const std::size_t spatial = mask.low.size();
  if (coeffs.size() % spatial != 0)
    throw std::invalid_argument("coefficient count does not match band mask");
  const std::uint32_t c = static_cast<std::uint32_t>(coeffs.size() / spatial);
  EnergySplit split;
  for (std::size_t s = 0; s < spatial; ++s) {
    double e = 0.0;
    for (std::uint32_t ch = 0; ch < c; ++ch) {
      const double v = coeffs[s * c + ch];
      e += v * v;
    }
    if (mask.low[s])
      split.low += e;
    else
      split.high += e;
  }
  return split;
}

}  // namespace hdfm
