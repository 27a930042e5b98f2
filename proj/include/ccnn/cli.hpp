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

#include <iosfwd>
#include <string>
#include <vector>

#include "ccnn/dataset.hpp"

namespace ccnn {

// Dataset sources:
//   synth:KxN[@seed]        K classes, N samples each (an "×" works too)
//   idx:<images>,<labels>   an IDX image/label pair
//   <dir>                   a directory holding one *images* and one *labels* IDX file,
//                           or .gnt files
//   <file>.gnt              one GNT file
// Images are brought to input_size x input_size. GNT tags map to classes in
// ascending code order.
Dataset load_dataset(const std::string& source, std::size_t input_size = 64);

// Exit code 0 on success; errors go to `err` and return nonzero.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ccnn
