// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#include "hdfm/linalg.hpp"

#include <algorithm>
#include <stdexcept>
#include <thread>

namespace hdfm {

void matmul_abt(const Mat& a, const Mat& b, Mat& out) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_abt: inner dim mismatch");
  out = Mat(a.rows, b.rows);
  const std::size_t k = a.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* orow = out.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double s = 0.0;
      for (std::size_t l = 0; l < k; ++l) s += ar[l] * br[l];
      orow[j] = s;
    }
  }
}

void matmul_ab(const Mat& a, const Mat& b, Mat& out) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul_ab: inner dim mismatch");
  out = Mat(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* orow = out.row(i);
    for (std::size_t l = 0; l < a.cols; ++l) {
      const double s = ar[l];
      if (s == 0.0) continue;
      const double* br = b.row(l);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += s * br[j];
    }
  }
}

void matmul_atb(const Mat& a, const Mat& b, Mat& out) {
  if (a.rows != b.rows) throw std::invalid_argument("matmul_atb: outer dim mismatch");
  out = Mat(a.cols, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    const double* br = b.row(i);
    for (std::size_t j = 0; j < a.cols; ++j) {
      const double s = ar[j];
      if (s == 0.0) continue;
      double* orow = out.row(j);
      for (std::size_t l = 0; l < b.cols; ++l) orow[l] += s * br[l];
    }
  }
}

void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    fn(0, n);
    return;
  }
  const unsigned k = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  std::vector<std::thread> pool;
  pool.reserve(k);
  const std::size_t chunk = (n + k - 1) / k;
  for (unsigned w = 0; w < k; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace hdfm
