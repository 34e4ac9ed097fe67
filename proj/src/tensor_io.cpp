// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#include "hdfm/tensor_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "hdfm/errors.hpp"

namespace hdfm {

namespace {

constexpr char kMagic[4] = {'H', 'D', 'T', '1'};

void put_u32le(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

void put_u64le(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return v;
}

std::string read_all(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(std::string(what) + ": cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

void write_all(const std::string& path, const std::string& data,
               const char* what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(std::string(what) + ": cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError(std::string(what) + ": short write to '" + path + "'");
}

}  // namespace

void write_tensor(const std::string& path, const GridField& field,
                  bool float32) {
  std::string buf;
  buf.reserve(16 + field.size() * (float32 ? 4 : 8));
  buf.append(kMagic, 4);
  buf.push_back(float32 ? 0 : 1);
  buf.push_back(static_cast<char>(field.ndim()));
  for (std::uint32_t d : field.dims()) put_u32le(buf, d);
  if (float32) {
    for (std::size_t i = 0; i < field.size(); ++i) {
      const float f = static_cast<float>(field[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32le(buf, bits);
    }
  } else {
    for (std::size_t i = 0; i < field.size(); ++i) {
      std::uint64_t bits;
      const double d = field[i];
      std::memcpy(&bits, &d, 8);
      put_u64le(buf, bits);
    }
  }
  write_all(path, buf, "write_tensor");
}

GridField read_tensor(const std::string& path) {
  const std::string data = read_all(path, "read_tensor");
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() < 6 || std::memcmp(p, kMagic, 4) != 0)
    throw ValidationError("read_tensor: '" + path + "' is not an HDT1 tensor");
  const unsigned dtype = p[4];
  const unsigned ndim = p[5];
  if (dtype > 1)
    throw ValidationError("read_tensor: unknown dtype code " +
                          std::to_string(dtype) + " in '" + path + "'");
  if (ndim < 1 || ndim > 8)
    throw ValidationError("read_tensor: bad rank " + std::to_string(ndim) +
                          " in '" + path + "'");
  std::size_t off = 6;
  if (data.size() < off + 4ull * ndim)
    throw ValidationError("read_tensor: truncated header in '" + path + "'");
  std::vector<std::uint32_t> dims(ndim);
  std::size_t count = 1;
  for (unsigned i = 0; i < ndim; ++i) {
    dims[i] = get_u32le(p + off);
    off += 4;
    if (dims[i] == 0)
      throw ValidationError("read_tensor: zero dim in '" + path + "'");
    if (count > (std::size_t(1) << 40) / dims[i])
      throw ValidationError("read_tensor: dims overflow in '" + path + "'");
    count *= dims[i];
  }
  const std::size_t elem = dtype == 0 ? 4 : 8;
  if (data.size() != off + count * elem)
    throw ValidationError(
        "read_tensor: payload length mismatch in '" + path + "': expected " +
        std::to_string(count * elem) + " bytes, found " +
        std::to_string(data.size() - off));
  std::vector<double> values(count);
  if (dtype == 0) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t bits = get_u32le(p + off + 4 * i);
      float f;
      std::memcpy(&f, &bits, 4);
      values[i] = static_cast<double>(f);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t bits = get_u64le(p + off + 8 * i);
      double d;
      std::memcpy(&d, &bits, 8);
      values[i] = d;
    }
  }
  return GridField(std::move(dims), std::move(values));
}

void write_image_pnm(const std::string& path, const GridField& field) {
  const std::uint32_t c = field.channels();
  const auto spatial = field.spatial_dims();
  if (spatial.size() != 2 || (c != 1 && c != 3))
    throw ValidationError("write_image_pnm: need an (H,W) or (H,W,3) field, got " +
                          shape_string(field.dims()));
  const std::uint32_t h = spatial[0], w = spatial[1];
  std::string buf;
  buf += (c == 1) ? "P5\n" : "P6\n";
  buf += std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t i = 0; i < field.size(); ++i) {
    double v = field[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    buf.push_back(static_cast<char>(std::lround(v * 255.0)));
  }
  write_all(path, buf, "write_image_pnm");
}

GridField read_image_pnm(const std::string& path) {
  const std::string data = read_all(path, "read_image_pnm");
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    // Skips whitespace and '#' comment lines between header tokens.
    while (pos < data.size()) {
      if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos])))
      ++pos;
    return data.substr(start, pos - start);
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6")
    throw ValidationError("read_image_pnm: '" + path + "' is not binary PGM/PPM");
  const std::uint32_t c = magic == "P5" ? 1 : 3;
  std::uint32_t w = 0, h = 0, maxval = 0;
  try {
    w = static_cast<std::uint32_t>(std::stoul(token()));
    h = static_cast<std::uint32_t>(std::stoul(token()));
    maxval = static_cast<std::uint32_t>(std::stoul(token()));
  } catch (const std::exception&) {
    throw ValidationError("read_image_pnm: malformed header in '" + path + "'");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
    throw ValidationError("read_image_pnm: unsupported header in '" + path + "'");
  ++pos;  // single whitespace after maxval
  const std::size_t count = std::size_t(w) * h * c;
  if (data.size() - pos < count)
    throw ValidationError("read_image_pnm: truncated pixel data in '" + path + "'");
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i)
    values[i] = static_cast<unsigned char>(data[pos + i]) / double(maxval);
  if (c == 1) return GridField({h, w}, std::move(values));
  return GridField({h, w, 3}, std::move(values));
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvWriter::Impl {
  std::ofstream out;
};

CsvWriter::CsvWriter(const std::string& path,
                     const std::vector<std::string>& header)
    : impl_(new Impl) {
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out) {
    delete impl_;
    throw IoError("csv: cannot open '" + path + "' for writing");
  }
  row(header);
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) impl_->out << ',';
    impl_->out << cells[i];
  }
  impl_->out << '\n';
}

}  // namespace hdfm
