// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#include "hdfm/toyverse.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

#include "hdfm/tensor_io.hpp"

namespace hdfm {

void SpiralSpec::validate() const {
  if (!(r0 > 0.0)) throw std::invalid_argument("spiral base radius must be positive");
  if (!(growth >= 0.0)) throw std::invalid_argument("spiral growth must be nonnegative");
  if (!(theta_max > 0.0)) throw std::invalid_argument("spiral angle range must be positive");
  if (!(jitter >= 0.0)) throw std::invalid_argument("spiral jitter must be nonnegative");
  if (count < 1) throw std::invalid_argument("spiral needs at least one point");
}

Mat spiral_points(const SpiralSpec& spec, Rng& rng) {
  spec.validate();
  Mat pts(spec.count, 2);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const double theta = rng.uniform(0.0, spec.theta_max);
    const double r = spec.r0 + spec.growth * theta;
    double* p = pts.row(i);
    p[0] = r * std::cos(theta) + spec.jitter * rng.normal();
    p[1] = r * std::sin(theta) + spec.jitter * rng.normal();
  }
  return pts;
}

Mat spiral_reference(const SpiralSpec& spec, std::uint32_t n) {
  spec.validate();
  if (n < 2) throw std::invalid_argument("spiral reference needs at least two points");
  Mat ref(n, 2);
  for (std::uint32_t i = 0; i < n; ++i) {
    const double theta = spec.theta_max * double(i) / double(n - 1);
    const double r = spec.r0 + spec.growth * theta;
    double* p = ref.row(i);
    p[0] = r * std::cos(theta);
    p[1] = r * std::sin(theta);
  }
  return ref;
}

void Embedding::embed(const double* xhat2, double* x) const {
  for (std::size_t i = 0; i < p.rows; ++i) {
    const double* r = p.row(i);
    x[i] = r[0] * xhat2[0] + r[1] * xhat2[1];
  }
}

void Embedding::project(const double* x, double* xhat2) const {
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < p.rows; ++i) {
    const double* r = p.row(i);
    a += r[0] * x[i];
    b += r[1] * x[i];
  }
  xhat2[0] = a;
  xhat2[1] = b;
}

double Embedding::offplane(const double* x) const {
  double xh[2];
  project(x, xh);
  double s = 0.0;
  for (std::size_t i = 0; i < p.rows; ++i) {
    const double* r = p.row(i);
    const double d = x[i] - (r[0] * xh[0] + r[1] * xh[1]);
    s += d * d;
  }
  return std::sqrt(s);
}

Embedding make_embedding(std::uint32_t ambient_dim, std::uint64_t seed) {
  if (ambient_dim < 2)
    throw std::invalid_argument("embedding needs an ambient dimension of at least 2");
  Rng rng(seed);
  Mat p(ambient_dim, 2);
  for (double& v : p.v) v = rng.normal();
  // Gram-Schmidt on the two columns.
  double n0 = 0.0;
  for (std::size_t i = 0; i < p.rows; ++i) n0 += p.row(i)[0] * p.row(i)[0];
  n0 = std::sqrt(n0);
  if (n0 == 0.0) throw std::invalid_argument("degenerate embedding draw");
  for (std::size_t i = 0; i < p.rows; ++i) p.row(i)[0] /= n0;
  double d01 = 0.0;
  for (std::size_t i = 0; i < p.rows; ++i) d01 += p.row(i)[0] * p.row(i)[1];
  for (std::size_t i = 0; i < p.rows; ++i) p.row(i)[1] -= d01 * p.row(i)[0];
  double n1 = 0.0;
  for (std::size_t i = 0; i < p.rows; ++i) n1 += p.row(i)[1] * p.row(i)[1];
  n1 = std::sqrt(n1);
  if (n1 == 0.0) throw std::invalid_argument("degenerate embedding draw");
  for (std::size_t i = 0; i < p.rows; ++i) p.row(i)[1] /= n1;
  return Embedding{std::move(p)};
}

PathSample toy_corruption(const GridField& x, double t, const GridField& e,
                          const HeatSchedule& sched, PathKind kind) {
  if (x.ndim() != 1)
    throw std::invalid_argument(
        "toy corruption runs along the feature axis of a 1-D field");
  return sample_path(x, t, e, sched, kind);
}

ManifoldMetrics manifold_metrics(const std::vector<GridField>& samples,
                                 const Embedding& emb, const SpiralSpec& spec,
                                 std::uint32_t reference_count) {
  if (samples.empty())
    throw std::invalid_argument("manifold metrics need at least one sample");
  const Mat ref = spiral_reference(spec, reference_count);
  ManifoldMetrics m;
  for (const GridField& s : samples) {
    if (s.size() != emb.ambient())
      throw std::invalid_argument("sample length does not match the embedding");
    m.mean_offplane += emb.offplane(s.data());
    double xh[2];
    emb.project(s.data(), xh);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ref.rows; ++i) {
      const double* r = ref.row(i);
      const double dx = xh[0] - r[0], dy = xh[1] - r[1];
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) best = d2;
    }
    m.mean_spiral_dist += std::sqrt(best);
  }
  const double n = static_cast<double>(samples.size());
  m.mean_offplane /= n;
  m.mean_spiral_dist /= n;
  return m;
}

SpiralSource::SpiralSource(const SpiralSpec& spec, const Embedding& emb,
                           std::uint64_t data_seed)
    : emb_(&emb) {
  Rng rng(data_seed);
  pts_ = spiral_points(spec, rng);
}

std::vector<std::uint32_t> SpiralSource::dims() const {
  return {emb_->ambient()};
}

void SpiralSource::draw(Rng& rng, GridField& x,
                        std::optional<std::uint32_t>& label) const {
  const std::size_t idx = static_cast<std::size_t>(rng.below(pts_.rows));
  emb_->embed(pts_.row(idx), x.data());
  label.reset();
}

void ToyRunConfig::validate() const {
  if (dims < 2) throw std::invalid_argument("toy ambient dimension must be at least 2");
  if (!(blur > 0.0 && blur <= 1.0))
    throw std::invalid_argument("blur strength must lie in (0, 1]");
  if (width < 1 || depth < 1)
    throw std::invalid_argument("network needs positive width and depth");
  if (train_steps < 1) throw std::invalid_argument("training needs at least one step");
  if (batch < 1) throw std::invalid_argument("batch size must be at least 1");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (sample_count < 1) throw std::invalid_argument("need at least one sample");
  if (sample_steps < 1) throw std::invalid_argument("sampler needs at least one step");
  if (workers < 1) throw std::invalid_argument("workers must be at least 1");
}

ToyCellResult run_toy_cell(const SpiralSpec& spec, const ToyRunConfig& cfg) {
  spec.validate();
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();

  // Stream layout: embedding and data depend only on (seed, D), so both
  // heads of a comparison see the same world.
  const std::uint64_t base = Rng::mix(cfg.seed, 1000 + cfg.dims);
  const Embedding emb = make_embedding(cfg.dims, Rng::mix(base, 0));
  const SpiralSource data(spec, emb, Rng::mix(base, 1));
  const HeatSchedule sched = make_schedule({cfg.dims}, cfg.blur);

  MlpConfig mc;
  mc.data_dim = cfg.dims;
  mc.hidden.assign(cfg.depth, cfg.width);
  mc.head = cfg.head;
  mc.init_seed = Rng::mix(base, 2);
  MlpModel model = make_mlp(mc);

  TrainConfig tc;
  tc.lr = cfg.lr;
  tc.lr_schedule = cfg.lr_schedule;
  tc.batch = cfg.batch;
  tc.steps = cfg.train_steps;
  tc.kind = PathKind::HDFM;
  tc.seed = Rng::mix(base, 3);
  tc.workers = cfg.workers;
  const std::vector<LossReport> reports = train(model, data, tc, sched);

  MlpPredictor pred(model, {cfg.dims});
  SamplerConfig sc;
  sc.steps = cfg.sample_steps;
  sc.solver = Solver::EULER;
  sc.beta_mode = BetaMode::FIXED;
  sc.beta_fixed = 1.0;
  sc.seed = Rng::mix(base, 4);
  sc.workers = cfg.workers;
  const std::vector<GridField> samples =
      sample_batch(pred, sc, sched, cfg.sample_count);

  ToyCellResult cell;
  cell.dims = cfg.dims;
  cell.head = cfg.head;
  cell.seed = cfg.seed;
  const ManifoldMetrics m = manifold_metrics(samples, emb, spec);
  cell.mean_offplane = m.mean_offplane;
  cell.mean_spiral_dist = m.mean_spiral_dist;
  cell.final_loss = reports.empty() ? 0.0 : reports.back().total;
  cell.scatter = Mat(samples.size(), 2);
  for (std::size_t i = 0; i < samples.size(); ++i)
    emb.project(samples[i].data(), cell.scatter.row(i));
  if (cfg.timings) {
    const auto end = std::chrono::steady_clock::now();
    cell.wall_seconds =
        std::chrono::duration<double>(end - start).count();
  }
  return cell;
}

namespace {

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

void write_toy_report_csv(const std::string& path,
                          const std::vector<ToyCellResult>& cells) {
  CsvWriter w(path, {"D", "head", "seed", "mean_offplane", "mean_spiral_dist",
                     "final_loss", "wall_seconds"});
  for (const ToyCellResult& c : cells)
    w.row({std::to_string(c.dims), head_name(c.head), std::to_string(c.seed),
           format_double(c.mean_offplane), format_double(c.mean_spiral_dist),
           format_double(c.final_loss), fixed3(c.wall_seconds)});
}

void write_scatter_csv(const std::string& path, const Mat& scatter) {
  if (scatter.cols != 2)
    throw std::invalid_argument("scatter data must have two columns");
  CsvWriter w(path, {"xhat1", "xhat2"});
  for (std::size_t i = 0; i < scatter.rows; ++i)
    w.row({format_double(scatter.row(i)[0]), format_double(scatter.row(i)[1])});
}

}  // namespace hdfm
