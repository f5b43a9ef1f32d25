// Copyright 2026 The n3pc Authors. All Rights Reserved.
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
// =============================================================================

#pragma once

#include <stdexcept>
#include <string>

namespace n3pc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: non-finite input, singular factorization, root finder
/// exhaustion.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text or bytes (LibSVM, wire format, config).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace n3pc
