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

#include <stdexcept>
#include <string>

namespace ckb {

// Classification used by the CLI to pick an exit code.
enum class ErrorKind {
  kValidation = 1,    // bad data or bad arguments
  kMissingInput = 2,  // file or path not found
  kInternal = 3,      // broken invariant
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error ValidationError(const std::string& what) {
  return Error(ErrorKind::kValidation, what);
}

inline Error MissingInputError(const std::string& what) {
  return Error(ErrorKind::kMissingInput, what);
}

inline Error InternalError(const std::string& what) {
  return Error(ErrorKind::kInternal, what);
}

// Raised by the CTC routines when a label sequence cannot be aligned to the
// available number of frames.
class InfeasibleLabelError : public Error {
 public:
  InfeasibleLabelError(const std::string& what)
      : Error(ErrorKind::kValidation, what) {}
};

#define CKB_CHECK(cond, msg)                                         \
  do {                                                               \
    if (!(cond)) throw ::ckb::InternalError(std::string("check failed: ") + \
                                            #cond + ": " + (msg));   \
  } while (0)

}  // namespace ckb
