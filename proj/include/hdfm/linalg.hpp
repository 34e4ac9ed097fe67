// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace hdfm {

// Row-major matrix of doubles. Just enough for the MLP and the batched
// feature-axis transforms; not a general linear algebra type.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double* row(std::size_t i) { return v.data() + i * cols; }
  const double* row(std::size_t i) const { return v.data() + i * cols; }
  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
  void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

// out(m,n) = a(m,k) * b(n,k)^T; rows of both operands are contiguous, which is
// the cache-friendly orientation for weight matrices stored (out x in).
void matmul_abt(const Mat& a, const Mat& b, Mat& out);

// out(m,k) = a(m,n) * b(n,k)
void matmul_ab(const Mat& a, const Mat& b, Mat& out);

// out(n,k) = a(m,n)^T * b(m,k); the gradient-of-weights product.
void matmul_atb(const Mat& a, const Mat& b, Mat& out);

// Runs fn(begin, end) over a static partition of [0, n). workers <= 1 runs
// inline. Chunks are contiguous, so writers to disjoint index ranges stay
// deterministic regardless of the worker count.
void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace hdfm
