// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdfm/field.hpp"
#include "hdfm/linalg.hpp"
#include "hdfm/neural.hpp"
#include "hdfm/path.hpp"
#include "hdfm/rng.hpp"
#include "hdfm/sampler.hpp"

namespace hdfm {

// Spiral-in-high-dimensions study: 2-D spiral data embedded into R^D by a
// fixed column-orthogonal matrix the model never sees, corrupted by the 1-D
// dissipation operator along the feature axis. Generated samples are judged
// by how far they leave the embedded plane and how far their projection
// strays from the clean spiral.

struct SpiralSpec {
  double r0 = 0.1;           // r(theta) = r0 + growth * theta
  double growth = 0.08;
  double theta_max = 12.566370614359172;  // two full turns
  double jitter = 0.01;      // per-coordinate Gaussian noise on data points
  std::uint32_t count = 10000;

  void validate() const;
};

// count x 2 jittered points with uniformly drawn angles.
Mat spiral_points(const SpiralSpec& spec, Rng& rng);

// n x 2 noiseless points on a uniform angle grid, used as the distance
// reference.
Mat spiral_reference(const SpiralSpec& spec, std::uint32_t n);

struct Embedding {
  Mat p;  // D x 2, orthonormal columns

  std::uint32_t ambient() const { return static_cast<std::uint32_t>(p.rows); }
  // x = P xhat
  void embed(const double* xhat2, double* x) const;
  // xhat = P^T x
  void project(const double* x, double* xhat2) const;
  // || x - P P^T x ||_2, distance to the embedded plane
  double offplane(const double* x) const;
};

// Orthonormalized columns of a seeded Gaussian D x 2 draw.
Embedding make_embedding(std::uint32_t ambient_dim, std::uint64_t seed);

// Feature-axis corruption: sample_path on a length-D grid.
PathSample toy_corruption(const GridField& x, double t, const GridField& e,
                          const HeatSchedule& sched,
                          PathKind kind = PathKind::HDFM);

struct ManifoldMetrics {
  double mean_offplane = 0.0;
  double mean_spiral_dist = 0.0;
};

// mean_offplane averages the plane distance; mean_spiral_dist averages the
// minimum distance from each projected sample to a dense noiseless spiral
// discretization (reference_count points).
ManifoldMetrics manifold_metrics(const std::vector<GridField>& samples,
                                 const Embedding& emb, const SpiralSpec& spec,
                                 std::uint32_t reference_count = 10000);

// Finite training set drawn once from the spiral, embedded on demand.
class SpiralSource final : public DataSource {
 public:
  SpiralSource(const SpiralSpec& spec, const Embedding& emb,
               std::uint64_t data_seed);
  std::vector<std::uint32_t> dims() const override;
  void draw(Rng& rng, GridField& x,
            std::optional<std::uint32_t>& label) const override;
  const Mat& points() const { return pts_; }

 private:
  Mat pts_;  // count x 2
  const Embedding* emb_;
};

struct ToyRunConfig {
  std::uint32_t dims = 512;  // ambient dimension D
  Head head = Head::X_PRED;
  std::uint64_t seed = 0;
  double blur = 1.0;
  std::uint32_t width = 96;
  std::uint32_t depth = 5;
  std::uint32_t train_steps = 700;
  std::uint32_t batch = 64;
  double lr = 1e-3;
  LrSchedule lr_schedule = LrSchedule::LINEAR;
  std::uint32_t sample_count = 500;
  std::uint32_t sample_steps = 64;
  std::uint32_t workers = 1;
  bool timings = false;  // when false, wall_seconds is reported as 0.000

  void validate() const;
};

struct ToyCellResult {
  std::uint32_t dims = 0;
  Head head = Head::X_PRED;
  std::uint64_t seed = 0;
  double mean_offplane = 0.0;
  double mean_spiral_dist = 0.0;
  double final_loss = 0.0;
  double wall_seconds = 0.0;
  Mat scatter;  // sample_count x 2 projected samples
};

// Streams inside one cell derive from mix(seed, 1000 + D), so the two heads
// of a (D, seed) pair share the embedding, the data set, and the layer
// initialization draw while remaining independent across D and seed.
ToyCellResult run_toy_cell(const SpiralSpec& spec, const ToyRunConfig& cfg);

// Report rows: D,head,seed,mean_offplane,mean_spiral_dist,final_loss,
// wall_seconds. Wall time prints as 0.000 unless timings was set, keeping
// rerun artifacts byte-identical.
void write_toy_report_csv(const std::string& path,
                          const std::vector<ToyCellResult>& cells);

// Scatter rows: xhat1,xhat2.
void write_scatter_csv(const std::string& path, const Mat& scatter);

}  // namespace hdfm
