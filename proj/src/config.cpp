// Copyright 2026 The ckbasr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ckbasr/config.hpp"

#include <limits>

#include "ckbasr/error.hpp"
#include "ckbasr/util.hpp"

namespace ckb {

RunConfig RunConfig::Parse(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  std::string section;
  const std::vector<std::string> lines = SplitLines(text);
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string line = Trim(lines[i]);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::string where = "config line " + std::to_string(i + 1);
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + ": unterminated section header");
      section = Trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty() || section.find('.') != std::string::npos) {
        throw ValidationError(where + ": invalid section name '" + section + "'");
      }
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
    const std::string key = Trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ValidationError(where + ": empty key");
    const std::string dotted = section.empty() ? key : section + "." + key;
    cfg.values_[dotted] = {Trim(std::string_view(line).substr(eq + 1)), base_dir};
  }
  return cfg;
}

RunConfig RunConfig::Load(const std::filesystem::path& path) {
  return Parse(ReadFile(path), path.parent_path());
}

void RunConfig::Set(const std::string& dotted_key, const std::string& value) {
  if (dotted_key.empty()) throw ValidationError("empty config key");
  values_[dotted_key] = {value, {}};
}

void RunConfig::ApplyOverrides(const std::vector<std::string>& args) {
  for (const std::string& raw : args) {
    std::string_view a = raw;
    while (!a.empty() && a.front() == '-') a.remove_prefix(1);
    const size_t eq = a.find('=');
    if (eq == std::string_view::npos || eq == 0 || a.substr(0, eq).find('.') == std::string_view::npos) {
      throw ValidationError("unrecognized argument '" + raw + "' (overrides look like --section.key=value)");
    }
    Set(std::string(a.substr(0, eq)), std::string(a.substr(eq + 1)));
  }
}

const RunConfig::Value* RunConfig::Find(const std::string& key) const {
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string RunConfig::GetString(const std::string& key, const std::string& fallback) const {
  const Value* v = Find(key);
  return v == nullptr ? fallback : v->text;
}

std::string RunConfig::RequireString(const std::string& key) const {
  const Value* v = Find(key);
  if (v == nullptr || v->text.empty()) throw ValidationError("missing required setting " + key);
  return v->text;
}

double RunConfig::GetDouble(const std::string& key, double fallback) const {
  const Value* v = Find(key);
  if (v == nullptr) return fallback;
  try {
    size_t pos = 0;
    const double x = std::stod(v->text, &pos);
    if (pos == v->text.size()) return x;
  } catch (const std::exception&) {
  }
  throw ValidationError("setting " + key + ": '" + v->text + "' is not a number");
}

int64_t RunConfig::GetInt(const std::string& key, int64_t fallback) const {
  const Value* v = Find(key);
  if (v == nullptr) return fallback;
  try {
    size_t pos = 0;
    const long long x = std::stoll(v->text, &pos);
    if (pos == v->text.size()) return x;
  } catch (const std::exception&) {
  }
  throw ValidationError("setting " + key + ": '" + v->text + "' is not an integer");
}

uint64_t RunConfig::GetUnsigned(const std::string& key, uint64_t fallback) const {
  const Value* v = Find(key);
  if (v == nullptr) return fallback;
  try {
    size_t pos = 0;
    if (!v->text.empty() && v->text[0] != '-') {
      const unsigned long long x = std::stoull(v->text, &pos);
      if (pos == v->text.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw ValidationError("setting " + key + ": '" + v->text + "' is not an unsigned integer");
}

bool RunConfig::GetBool(const std::string& key, bool fallback) const {
  const Value* v = Find(key);
  if (v == nullptr) return fallback;
  if (v->text == "1" || v->text == "true" || v->text == "yes" || v->text == "on") return true;
  if (v->text == "0" || v->text == "false" || v->text == "no" || v->text == "off") return false;
  throw ValidationError("setting " + key + ": '" + v->text + "' is not a boolean");
}

std::filesystem::path RunConfig::GetPath(const std::string& key, const std::filesystem::path& fallback) const {
  const Value* v = Find(key);
  if (v == nullptr || v->text.empty()) return fallback;
  const std::filesystem::path p(v->text);
  if (p.is_absolute() || v->base.empty()) return p;
  return v->base / p;
}

std::filesystem::path RunConfig::RequirePath(const std::string& key) const {
  RequireString(key);
  return GetPath(key);
}

std::vector<std::string> RunConfig::KeysIn(const std::string& section) const {
  std::vector<std::string> keys;
  const std::string prefix = section + ".";
  for (const auto& [k, v] : values_) {
    if (k.compare(0, prefix.size(), prefix) == 0) keys.push_back(k.substr(prefix.size()));
  }
  return keys;
}

}  // namespace ckb
