// Copyright 2026 The pixsup Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PIXSUP_ERRORS_HPP
#define PIXSUP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pixsup {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not line up.
struct ShapeError : Error {
  using Error::Error;
};

/// Parameters, modes or settings inconsistent with the architecture.
struct ConfigError : Error {
  using Error::Error;
};

/// Bad caller-supplied data (image sizes, empty sets, sample counts).
struct InputError : Error {
  using Error::Error;
};

/// Checkpoint or dataset file cannot be read back.
struct FormatError : Error {
  using Error::Error;
};

}  // namespace pixsup

#endif  // PIXSUP_ERRORS_HPP
