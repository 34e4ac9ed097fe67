// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "hdfm/field.hpp"
#include "hdfm/linalg.hpp"

namespace hdfm {

// Heat dissipation in the cosine basis.
//
// With reflecting (Neumann) boundaries the Laplacian is diagonalized by the
// orthonormal DCT-II/DCT-III pair, so running the heat equation for time tau
// multiplies coefficient k by exp(lambda_k * tau). The continuous-spectrum
// eigenvalues are used:
//
//   1D:  lambda_k    = -r * pi^2 * k^2 / N^2
//   2D:  lambda_(k,l) = -r * pi^2 * (k^2/H^2 + l^2/W^2)
//
// where r in (0, 1] scales the blur strength. lambda_0 = 0 exactly, so the
// per-channel mean never moves. Flow time t in (0, 1] is calibrated to heat
// time via tau(t) = -log t, which turns the per-coefficient factor into
// t^|lambda_k|: coarse structure survives until late t, fine structure
// emerges last.

// Laplacian eigenvalues over the spatial grid, row-major, shared by every
// channel. All entries are <= 0 and the entry for the zero mode is exactly 0.
struct EigenGrid {
  std::vector<std::uint32_t> spatial;
  std::vector<double> lambda;
  double blur_strength = 1.0;

  double max_abs_lambda() const;
  bool all_zero() const { return max_abs_lambda() == 0.0; }
};

EigenGrid eigen_grid(const std::vector<std::uint32_t>& spatial,
                     double blur_strength);

// Calibration and numeric floors for one field shape.
struct HeatSchedule {
  EigenGrid eigen;
  double t_floor = 1e-4;
  double s_eps = 1e-3;

  // Clamps t into [t_floor, 1]; rejects t < 0 and t > 1.
  double clamp_t(double t) const;
  // tau(t) = -log(clamp_t(t)); finite and nonnegative on [0, 1].
  double tau(double t) const;
  // Interpolation denominator max(1 - t, s_eps).
  double s(double t) const { return (1.0 - t) > s_eps ? (1.0 - t) : s_eps; }

  void require_compatible(const GridField& x) const;
};

HeatSchedule make_schedule(const std::vector<std::uint32_t>& field_dims,
                           double blur_strength = 1.0, double t_floor = 1e-4,
                           double s_eps = 1e-3);

// Orthonormal DCT-II, separable per spatial axis, applied per channel.
// A constant field maps to a pure zero-frequency coefficient.
GridField dct_forward(const GridField& x);
// Orthonormal DCT-III, the exact transpose of dct_forward.
GridField dct_inverse(const GridField& coeffs);
// The cached length-n DCT-II basis matrix, row k contiguous. Rows of a
// (batch, n) matrix transform as coeffs = rows * B^T, inverse = rows * B,
// with the same per-element reduction order as the field transforms.
const Mat& dct_basis(std::uint32_t n);

// Batched length-n transforms: each row of a (batch, n) matrix is one
// signal. Bit-for-bit equal to dct_forward / dct_inverse applied per row.
void dct_rows(const Mat& rows, Mat& coeffs);
void idct_rows(const Mat& coeffs, Mat& rows);

// Batched heat endpoint on 1-D fields with one heat time per row; matches
// heat_endpoint applied row by row, including the bitwise identity at
// tau = 0.
void heat_rows(const Mat& x_rows, const std::vector<double>& taus,
               const EigenGrid& eigen, Mat& u, Mat& lap);

// Heat endpoint u_t = H_{tau(t)}(x) together with its Laplacian
// Delta u_t = IDCT(lambda * u_t_coeffs). One forward and at most two inverse
// transforms. At tau = 0 (and for an all-zero eigen grid) u_t returns x
// bit-for-bit.
struct HeatEndpoint {
  GridField u;
  GridField lap;
};
HeatEndpoint heat_endpoint(const GridField& x, double t,
                           const HeatSchedule& sched);

// Uncalibrated endpoint H_tau(x) for a raw heat time tau >= 0.
GridField heat_endpoint_raw_tau(const GridField& x, double tau,
                                const EigenGrid& eigen);

// Isotropic low/high partition of the coefficient grid. Axis frequencies are
// normalized to [0, 1]; a coefficient is "low" when its normalized radius is
// below cutoff_fraction times the Nyquist radius.
struct BandMask {
  std::vector<bool> low;  // per spatial index
  std::size_t low_count = 0, high_count = 0;
};
BandMask make_band_mask(const std::vector<std::uint32_t>& spatial,
                        double cutoff_fraction);

struct EnergySplit {
  double low = 0.0, high = 0.0;
};
EnergySplit spectral_energy_split(const GridField& x, double cutoff_fraction);
// Same split evaluated on already-transformed coefficients.
EnergySplit energy_split_from_coeffs(const GridField& coeffs,
                                     const BandMask& mask);

}  // namespace hdfm
