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

#include <string>

#include "ccnn/architecture.hpp"

namespace ccnn {

// Full layer-by-layer JSON. The result validates.
std::string spec_to_json(const NetworkSpec& spec, int indent = -1);

// Accepts the full form, or a preset:
//   {"preset": "default", "num_classes": 3755, "width_divisor": 1,
//    "branches": true, "head": "wap", "input_size": 64}
// Unknown keys and invalid specs throw SpecError.
NetworkSpec spec_from_json(const std::string& text);

}  // namespace ccnn
