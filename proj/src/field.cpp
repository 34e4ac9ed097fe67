// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#include "hdfm/field.hpp"

#include <cmath>
#include <stdexcept>

namespace hdfm {

std::size_t element_count(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::uint32_t>& dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  s += ")";
  return s;
}

GridField::GridField(std::vector<std::uint32_t> dims)
    : dims_(std::move(dims)), data_(element_count(dims_), 0.0) {
  if (dims_.empty()) throw std::invalid_argument("field needs at least one dim");
  for (std::uint32_t d : dims_)
    if (d == 0) throw std::invalid_argument("field dims must be positive");
}

GridField::GridField(std::vector<std::uint32_t> dims, std::vector<double> values)
    : GridField(std::move(dims)) {
  if (values.size() != data_.size())
    throw std::invalid_argument("field value count does not match shape " +
                                shape_string(dims_));
  data_ = std::move(values);
}

GridField GridField::zeros_like(const GridField& other) {
  return GridField(other.dims_);
}

std::uint32_t GridField::channels() const {
  return dims_.size() == 3 ? dims_[2] : 1u;
}

std::vector<std::uint32_t> GridField::spatial_dims() const {
  if (dims_.size() == 3) return {dims_[0], dims_[1]};
  return dims_;
}

bool GridField::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double dot(const GridField& a, const GridField& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const GridField& a) { return std::sqrt(dot(a, a)); }

double max_abs(const GridField& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i]));
  return m;
}

double max_abs_diff(const GridField& a, const GridField& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

double rel_l2_error(const GridField& approx, const GridField& exact) {
  require_same_shape(approx, exact, "rel_l2_error");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < approx.size(); ++i) {
    const double d = approx[i] - exact[i];
    num += d * d;
    den += exact[i] * exact[i];
  }
  if (den == 0.0) return std::sqrt(num);
  return std::sqrt(num / den);
}

std::vector<double> channel_means(const GridField& a) {
  const std::uint32_t c = a.channels();
  std::vector<double> means(c, 0.0);
  const std::size_t per = a.size() / c;
  for (std::size_t i = 0; i < a.size(); ++i) means[i % c] += a[i];
  for (double& m : means) m /= static_cast<double>(per);
  return means;
}

void require_same_shape(const GridField& a, const GridField& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_string(a.dims()) + " vs " +
                                shape_string(b.dims()));
}

void require_finite(const GridField& a, const char* what) {
  if (!a.all_finite())
    throw std::invalid_argument(std::string(what) + ": field has non-finite entries");
}

}  // namespace hdfm
