// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "hdfm/toyverse.hpp"

using namespace hdfm;

namespace {

double max_orthonormality_defect(const Embedding& emb) {
  // P^T P against the 2x2 identity, max absolute entry difference.
  double g[3] = {0.0, 0.0, 0.0};  // col0.col0, col0.col1, col1.col1
  for (std::size_t i = 0; i < emb.p.rows; ++i) {
    const double* r = emb.p.row(i);
    g[0] += r[0] * r[0];
    g[1] += r[0] * r[1];
    g[2] += r[1] * r[1];
  }
  return std::max({std::fabs(g[0] - 1.0), std::fabs(g[1]),
                   std::fabs(g[2] - 1.0)});
}

}  // namespace

TEST_CASE("embedding columns are orthonormal and seeded") {
  for (std::uint32_t d : {2u, 8u, 16u, 512u}) {
    Embedding emb = make_embedding(d, 7);
    CHECK(emb.ambient() == d);
    CHECK(max_orthonormality_defect(emb) < 1e-12);

    // Isometry on a handful of plane points.
    Rng rng(3);
    std::vector<double> x(d);
    for (int k = 0; k < 5; ++k) {
      const double xh[2] = {rng.normal(), rng.normal()};
      emb.embed(xh, x.data());
      double n2 = 0.0;
      for (double v : x) n2 += v * v;
      const double want = xh[0] * xh[0] + xh[1] * xh[1];
      CHECK(std::fabs(std::sqrt(n2) - std::sqrt(want)) < 1e-10);

      // Round trip and plane membership.
      double back[2];
      emb.project(x.data(), back);
      CHECK(std::fabs(back[0] - xh[0]) < 1e-10);
      CHECK(std::fabs(back[1] - xh[1]) < 1e-10);
      CHECK(emb.offplane(x.data()) < 1e-10);
    }
  }

  Embedding a = make_embedding(64, 11);
  Embedding b = make_embedding(64, 11);
  CHECK(a.p.v == b.p.v);
  Embedding c = make_embedding(64, 12);
  CHECK(a.p.v != c.p.v);
  CHECK_THROWS_AS(make_embedding(1, 0), std::invalid_argument);
}

TEST_CASE("random ambient vectors leave the plane") {
  Embedding emb = make_embedding(512, 5);
  Rng rng(9);
  std::vector<double> x(512);
  for (double& v : x) v = rng.normal();
  CHECK(emb.offplane(x.data()) > 1.0);
}

TEST_CASE("spiral sampling is deterministic and in range") {
  SpiralSpec spec;
  Rng r1(21), r2(21);
  Mat a = spiral_points(spec, r1);
  Mat b = spiral_points(spec, r2);
  CHECK(a.v == b.v);
  REQUIRE(a.rows == spec.count);
  REQUIRE(a.cols == 2);

  const double rmax = spec.r0 + spec.growth * spec.theta_max;
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double rad = std::hypot(a.row(i)[0], a.row(i)[1]);
    CHECK(rad < rmax + 8.0 * spec.jitter);
  }

  // Jitter-free points satisfy the spiral equation exactly in radius.
  SpiralSpec clean = spec;
  clean.jitter = 0.0;
  clean.count = 200;
  Rng r3(4);
  Mat c = spiral_points(clean, r3);
  for (std::size_t i = 0; i < c.rows; ++i) {
    const double rad = std::hypot(c.row(i)[0], c.row(i)[1]);
    const double theta_lo = (rad - clean.r0) / clean.growth;
    CHECK(theta_lo >= -1e-9);
    CHECK(theta_lo <= clean.theta_max + 1e-9);
  }
  CHECK_THROWS_AS([&] {
    SpiralSpec badspec;
    badspec.count = 0;
    Rng rr(0);
    spiral_points(badspec, rr);
  }(), std::invalid_argument);
}

TEST_CASE("feature-axis corruption matches the path module") {
  const std::vector<std::uint32_t> dims{16};
  HeatSchedule sched = make_schedule(dims, 1.0);
  Rng rng(31);
  GridField x = normal_field(rng, dims, 1.0);
  GridField e = normal_field(rng, dims, 1.0);
  PathSample ps = toy_corruption(x, 1.0, e, sched);
  CHECK(max_abs_diff(ps.z, x) == 0.0);  // t = 1 keeps the data untouched

  PathSample mid = toy_corruption(x, 0.5, e, sched);
  PathSample want = sample_path(x, 0.5, e, sched, PathKind::HDFM);
  CHECK(max_abs_diff(mid.z, want.z) == 0.0);
  CHECK(max_abs_diff(mid.v_star, want.v_star) == 0.0);

  GridField x2({4, 4});
  CHECK_THROWS_AS(toy_corruption(x2, 0.5, x2, make_schedule({4, 4}, 1.0)),
                  std::invalid_argument);

  // Two cells degenerate to eigenvalues {0, -pi^2/4 * r}.
  const double r = 0.37;
  EigenGrid g2 = eigen_grid({2}, r);
  CHECK(g2.lambda[0] == 0.0);
  const double pi = 3.14159265358979323846;
  CHECK(g2.lambda[1] == doctest::Approx(-r * pi * pi / 4.0).epsilon(1e-12));
}

TEST_CASE("manifold metrics vanish on the embedded reference spiral") {
  SpiralSpec spec;
  Embedding emb = make_embedding(16, 13);
  const Mat ref = spiral_reference(spec, 400);
  std::vector<GridField> samples;
  for (std::size_t i = 0; i < ref.rows; i += 8) {
    GridField x({16});
    emb.embed(ref.row(i), x.data());
    samples.push_back(x);
  }
  // Evaluate against a reference that contains these very points.
  ManifoldMetrics m = manifold_metrics(samples, emb, spec, 400);
  CHECK(m.mean_offplane < 1e-8);
  CHECK(m.mean_spiral_dist < 1e-8);
}

TEST_CASE("offplane of isotropic noise follows the orthogonal complement") {
  const std::uint32_t d = 512;
  SpiralSpec spec;
  Embedding emb = make_embedding(d, 17);
  const double s = 0.05;
  Rng rng(23);
  const Mat ref = spiral_reference(spec, 50);
  std::vector<GridField> samples;
  for (int i = 0; i < 200; ++i) {
    GridField x({d});
    emb.embed(ref.row(static_cast<std::size_t>(rng.below(ref.rows))), x.data());
    for (std::size_t k = 0; k < d; ++k) x[k] += s * rng.normal();
    samples.push_back(x);
  }
  ManifoldMetrics m = manifold_metrics(samples, emb, spec, 2000);
  const double expect = s * std::sqrt(double(d - 2));
  CHECK(m.mean_offplane > 0.9 * expect);
  CHECK(m.mean_offplane < 1.1 * expect);
}

TEST_CASE("plane-dimension ambient space has no offplane component") {
  SpiralSpec spec;
  Embedding emb = make_embedding(2, 19);
  Rng rng(29);
  std::vector<GridField> samples;
  for (int i = 0; i < 50; ++i) {
    GridField x({2});
    x[0] = rng.normal();
    x[1] = rng.normal();
    samples.push_back(x);
  }
  ManifoldMetrics m = manifold_metrics(samples, emb, spec, 500);
  CHECK(m.mean_offplane < 1e-10);
}

TEST_CASE("spiral data source embeds the finite point set") {
  SpiralSpec spec;
  spec.count = 64;
  Embedding emb = make_embedding(8, 31);
  SpiralSource src(spec, emb, 41);
  CHECK(src.dims() == std::vector<std::uint32_t>{8});
  Rng rng(1);
  GridField x({8});
  std::optional<std::uint32_t> label = 3u;
  src.draw(rng, x, label);
  CHECK(!label.has_value());
  CHECK(emb.offplane(x.data()) < 1e-10);
  // The drawn point projects onto one of the source points.
  double xh[2];
  emb.project(x.data(), xh);
  double best = 1e300;
  for (std::size_t i = 0; i < src.points().rows; ++i) {
    const double dx = xh[0] - src.points().row(i)[0];
    const double dy = xh[1] - src.points().row(i)[1];
    best = std::min(best, std::hypot(dx, dy));
  }
  CHECK(best < 1e-10);
}

TEST_CASE("toy cell runs end to end and reproduces bit for bit") {
  SpiralSpec spec;
  spec.count = 400;
  ToyRunConfig cfg;
  cfg.dims = 8;
  cfg.head = Head::X_PRED;
  cfg.seed = 0;
  cfg.width = 24;
  cfg.depth = 2;
  cfg.train_steps = 40;
  cfg.batch = 16;
  cfg.sample_count = 30;
  cfg.sample_steps = 12;
  ToyCellResult a = run_toy_cell(spec, cfg);
  CHECK(a.dims == 8);
  CHECK(a.mean_offplane >= 0.0);
  CHECK(a.mean_spiral_dist >= 0.0);
  CHECK(std::isfinite(a.final_loss));
  CHECK(a.wall_seconds == 0.0);  // timings off by default
  REQUIRE(a.scatter.rows == 30);
  REQUIRE(a.scatter.cols == 2);

  ToyCellResult b = run_toy_cell(spec, cfg);
  CHECK(a.mean_offplane == b.mean_offplane);
  CHECK(a.mean_spiral_dist == b.mean_spiral_dist);
  CHECK(a.final_loss == b.final_loss);
  CHECK(a.scatter.v == b.scatter.v);

  // The v head sees the same embedding and data by construction; its run
  // differs only through the network head.
  ToyRunConfig vcfg = cfg;
  vcfg.head = Head::V_PRED;
  ToyCellResult v = run_toy_cell(spec, vcfg);
  CHECK(v.scatter.v != a.scatter.v);

  ToyRunConfig bad = cfg;
  bad.dims = 1;
  CHECK_THROWS_AS(run_toy_cell(spec, bad), std::invalid_argument);
}

TEST_CASE("toy report and scatter files are stable") {
  SpiralSpec spec;
  spec.count = 300;
  ToyRunConfig cfg;
  cfg.dims = 8;
  cfg.width = 16;
  cfg.depth = 2;
  cfg.train_steps = 20;
  cfg.batch = 8;
  cfg.sample_count = 10;
  cfg.sample_steps = 8;
  ToyCellResult cell = run_toy_cell(spec, cfg);

  const std::string rpath = "/tmp/hdfm_toy_report_test.csv";
  const std::string spath = "/tmp/hdfm_toy_scatter_test.csv";
  write_toy_report_csv(rpath, {cell});
  write_scatter_csv(spath, cell.scatter);

  std::ifstream rin(rpath);
  std::string line;
  REQUIRE(std::getline(rin, line));
  CHECK(line ==
        "D,head,seed,mean_offplane,mean_spiral_dist,final_loss,wall_seconds");
  REQUIRE(std::getline(rin, line));
  CHECK(line.find("8,x,0,") == 0);
  CHECK(line.rfind(",0.000") == line.size() - 6);

  std::ifstream sin(spath);
  REQUIRE(std::getline(sin, line));
  CHECK(line == "xhat1,xhat2");
  std::size_t rows = 0;
  while (std::getline(sin, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 10);
  std::remove(rpath.c_str());
  std::remove(spath.c_str());
}
