// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hdfm/field.hpp"

namespace hdfm {

// Tensor container, magic "HDT1":
//   byte 0..3   magic
//   byte 4      dtype: 0 = float32, 1 = float64
//   byte 5      ndim (1..8)
//   then ndim   u32 little-endian dims
//   then        row-major payload, little-endian
void write_tensor(const std::string& path, const GridField& field,
                  bool float32 = false);
GridField read_tensor(const std::string& path);

// Binary PGM (P5) for 1-channel fields, PPM (P6) for 3-channel, maxval 255.
// Values are clipped to [0, 1] and scaled.
void write_image_pnm(const std::string& path, const GridField& field);
GridField read_image_pnm(const std::string& path);

// Round-trippable float formatting ("%.17g") used by every CSV artifact so
// reruns with the same seed are byte-identical.
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  ~CsvWriter();
  void row(const std::vector<std::string>& cells);

 private:
  struct Impl;
  Impl* impl_;
};

}  // namespace hdfm
