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

#include <iosfwd>
#include <string>
#include <vector>

#include "ckbasr/acoustic.hpp"
#include "ckbasr/config.hpp"
#include "ckbasr/corpus.hpp"

namespace ckb {

// Runs one subcommand. `args` excludes the program name. Returns the process
// exit code: 0 success, 1 validation or data error, 2 missing input,
// 3 internal invariant violation.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// [model] section: `preset` picks base, large or desk (default), remaining
// keys override ModelConfig fields by name.
ModelConfig ModelConfigFromRun(const RunConfig& run, int vocab_size);

// File stem of the audio path; the key shared by decode output and scoring.
std::string UtteranceId(const ManifestEntry& entry);

}  // namespace ckb
