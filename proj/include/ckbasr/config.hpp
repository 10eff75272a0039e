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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ckb {

// Plain-text run configuration:
//
//   [paths]
//   manifest = corpus/manifest.tsv
//   [train]
//   epochs = 200
//
// Values are addressed by dotted names ("train.epochs"). Keys that appear
// before the first section header are addressed by the bare key. Relative
// paths read from a file resolve against that file's directory; values set
// later (command-line overrides) resolve against the working directory.
class RunConfig {
 public:
  static RunConfig Parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static RunConfig Load(const std::filesystem::path& path);

  void Set(const std::string& dotted_key, const std::string& value);
  // Each argument is "section.key=value", optionally prefixed by "--".
  void ApplyOverrides(const std::vector<std::string>& args);

  bool Has(const std::string& key) const { return values_.count(key) > 0; }
  std::string GetString(const std::string& key, const std::string& fallback = "") const;
  std::string RequireString(const std::string& key) const;
  double GetDouble(const std::string& key, double fallback) const;
  int64_t GetInt(const std::string& key, int64_t fallback) const;
  uint64_t GetUnsigned(const std::string& key, uint64_t fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;

  // Path value resolved against the directory it was defined relative to.
  std::filesystem::path GetPath(const std::string& key, const std::filesystem::path& fallback = {}) const;
  std::filesystem::path RequirePath(const std::string& key) const;

  // Keys of one section, without the section prefix.
  std::vector<std::string> KeysIn(const std::string& section) const;

 private:
  struct Value {
    std::string text;
    std::filesystem::path base;
  };
  const Value* Find(const std::string& key) const;

  std::map<std::string, Value> values_;
};

}  // namespace ckb
