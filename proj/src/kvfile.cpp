// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#include "hdfm/kvfile.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hdfm/errors.hpp"

namespace hdfm {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

bool KvFile::has(const std::string& key) const {
  for (const auto& p : pairs)
    if (p.first == key) return true;
  return false;
}

const std::string& KvFile::get(const std::string& key) const {
  for (const auto& p : pairs)
    if (p.first == key) return p.second;
  throw ValidationError("missing required key '" + key + "'");
}

std::string KvFile::get_or(const std::string& key,
                           const std::string& fallback) const {
  for (const auto& p : pairs)
    if (p.first == key) return p.second;
  return fallback;
}

void KvFile::set(const std::string& key, const std::string& value) {
  for (auto& p : pairs) {
    if (p.first == key) {
      p.second = value;
      return;
    }
  }
  pairs.emplace_back(key, value);
}

KvFile parse_kv_text(const std::string& text, const std::string& origin) {
  KvFile kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(origin + ":" + std::to_string(lineno) +
                            ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ValidationError(origin + ":" + std::to_string(lineno) +
                            ": empty key");
    if (kv.has(key))
      throw ValidationError(origin + ":" + std::to_string(lineno) +
                            ": duplicate key '" + key + "'");
    kv.pairs.emplace_back(key, value);
  }
  return kv;
}

KvFile read_kv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_kv_text(text, path);
}

void write_kv_file(const std::string& path, const KvFile& kv) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& p : kv.pairs) out << p.first << " = " << p.second << "\n";
  if (!out) throw IoError("short write to '" + path + "'");
}

double parse_double(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE)
    throw ValidationError("bad number for " + what + ": '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE)
    throw ValidationError("bad integer for " + what + ": '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw ValidationError("bad boolean for " + what + ": '" + s + "'");
}

}  // namespace hdfm
