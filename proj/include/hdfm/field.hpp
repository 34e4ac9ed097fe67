// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hdfm {

// Dense real-valued tensor on a grid, float64, row-major. The layouts the
// numeric modules operate on are (N) feature vectors, (H,W) single-channel
// images and (H,W,C) multi-channel images; rank-4 tensors can be stored and
// round-tripped through file IO but are rejected by the transform operators.
// The shape is fixed at construction.
class GridField {
 public:
  GridField() = default;
  explicit GridField(std::vector<std::uint32_t> dims);
  GridField(std::vector<std::uint32_t> dims, std::vector<double> values);

  static GridField zeros_like(const GridField& other);

  const std::vector<std::uint32_t>& dims() const { return dims_; }
  std::size_t ndim() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Channel axis is the trailing dim of a rank-3 field, otherwise 1.
  std::uint32_t channels() const;
  // Dims without the channel axis: (N) -> {N}, (H,W) -> {H,W}, (H,W,C) -> {H,W}.
  std::vector<std::uint32_t> spatial_dims() const;

  bool same_shape(const GridField& other) const { return dims_ == other.dims_; }
  bool all_finite() const;

 private:
  std::vector<std::uint32_t> dims_;
  std::vector<double> data_;
};

std::size_t element_count(const std::vector<std::uint32_t>& dims);
std::string shape_string(const std::vector<std::uint32_t>& dims);

double dot(const GridField& a, const GridField& b);
double norm2(const GridField& a);
double max_abs(const GridField& a);
double max_abs_diff(const GridField& a, const GridField& b);
// ||approx - exact||_2 / ||exact||_2; returns the absolute error norm when
// exact is the zero field.
double rel_l2_error(const GridField& approx, const GridField& exact);
// Mean over all entries of one channel; rank-1 and rank-2 fields have one.
std::vector<double> channel_means(const GridField& a);

void require_same_shape(const GridField& a, const GridField& b, const char* what);
void require_finite(const GridField& a, const char* what);

}  // namespace hdfm
