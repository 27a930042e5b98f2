// Copyright 2026 The ccnn Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace ccnn {

// Shape disagreement between operands, or a shape an op cannot accept.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API used out of order (backward without forward state, infer before stats).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Out-of-range hyperparameter or argument.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid NetworkSpec (channel flow, attach points, fire sizing).
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or malformed payloads.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ccnn
