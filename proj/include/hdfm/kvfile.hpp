// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
//
// Plain-text `key = value` files. One pair per line, '#' starts a comment,
// blank lines ignored. Used for run configs and checkpoint manifests.
#pragma once

#include <map>
#include <string>
#include <vector>

namespace hdfm {

// Ordered key/value pairs as they appeared in the file. Duplicate keys are a
// parse error; order is preserved so manifests round-trip stably.
struct KvFile {
  std::vector<std::pair<std::string, std::string>> pairs;

  bool has(const std::string& key) const;
  // Throws ValidationError when the key is missing.
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  void set(const std::string& key, const std::string& value);
};

// Parses file contents. Errors carry the 1-based line number.
KvFile parse_kv_text(const std::string& text, const std::string& origin);
KvFile read_kv_file(const std::string& path);
void write_kv_file(const std::string& path, const KvFile& kv);

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

// Strict scalar parsers; `what` names the offending key in error messages.
double parse_double(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);
bool parse_bool(const std::string& s, const std::string& what);

}  // namespace hdfm
