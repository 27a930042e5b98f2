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

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ccnn/architecture.hpp"
#include "ccnn/errors.hpp"
#include "ccnn/tensor.hpp"

namespace ccnn {

/// Named tensors in insertion order, each tagged with its role.
template <typename T>
class Parameters {
 public:
  struct Entry {
    std::string name;
    ParamRole role = ParamRole::Unassigned;
    Tensor<T> value;
  };

  void add(std::string name, ParamRole role, Tensor<T> value) {
    if (index_.count(name)) throw UsageError("duplicate parameter " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), role, std::move(value)});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Entry& entry(const std::string& name) { return entries_[position(name)]; }
  const Entry& entry(const std::string& name) const { return entries_[position(name)]; }

  Tensor<T>& at(const std::string& name) { return entry(name).value; }
  const Tensor<T>& at(const std::string& name) const { return entry(name).value; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Total element count across every tensor, running statistics included.
  std::size_t element_count() const {
    std::size_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
  }

  template <typename U>
  Parameters<U> cast() const {
    Parameters<U> out;
    for (const Entry& e : entries_) out.add(e.name, e.role, e.value.template cast<U>());
    return out;
  }

  friend bool operator==(const Parameters& a, const Parameters& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const Entry& x = a.entries_[i];
      const Entry& y = b.entries_[i];
      if (x.name != y.name || x.role != y.role || !(x.value == y.value)) return false;
    }
    return true;
  }

 private:
  std::size_t position(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("unknown parameter " + name);
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace ccnn
