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

#ifndef PIXSUP_PARAMS_HPP
#define PIXSUP_PARAMS_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pixsup/tensor.hpp"

namespace pixsup {

/// Ordered list of named weight tensors belonging to one network.
template <class T>
class ParameterCollection {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  Tensor<T>& add(std::string name, Tensor<T> value) {
    if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
    entries_.push_back({std::move(name), std::move(value)});
    return entries_.back().value;
  }

  Tensor<T>* find(const std::string& name) {
    for (auto& e : entries_)
      if (e.name == name) return &e.value;
    return nullptr;
  }
  const Tensor<T>* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e.value;
    return nullptr;
  }

  Tensor<T>& at(const std::string& name) {
    auto* t = find(name);
    if (t == nullptr) throw ConfigError("missing parameter '" + name + "'");
    return *t;
  }
  const Tensor<T>& at(const std::string& name) const {
    const auto* t = find(name);
    if (t == nullptr) throw ConfigError("missing parameter '" + name + "'");
    return *t;
  }

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  /// Names and shapes match entry by entry.
  bool compatible(const ParameterCollection& o) const {
    if (o.entries_.size() != entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != o.entries_[i].name) return false;
      if (!entries_[i].value.same_shape(o.entries_[i].value)) return false;
    }
    return true;
  }

  ParameterCollection zeros_like() const {
    ParameterCollection z;
    for (const auto& e : entries_) z.entries_.push_back({e.name, Tensor<T>(e.value.shape())});
    return z;
  }

  void set_zero() {
    for (auto& e : entries_) e.value.fill(T(0));
  }

  template <class U>
  ParameterCollection<U> cast() const {
    ParameterCollection<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  friend bool operator==(const ParameterCollection& a, const ParameterCollection& b) {
    if (!a.compatible(b)) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i)
      if (!(a.entries_[i].value == b.entries_[i].value)) return false;
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

/// Euclidean distance between two compatible collections, over all scalars.
template <class T>
double parameter_distance(const ParameterCollection<T>& a, const ParameterCollection<T>& b) {
  if (!a.compatible(b)) throw ConfigError("parameter collections are not compatible");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entries()[i].value;
    const auto& y = b.entries()[i].value;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = static_cast<double>(x[j]) - static_cast<double>(y[j]);
      s += d * d;
    }
  }
  return std::sqrt(s);
}

/**
 * Student/teacher parameter pair. Only `main` is ever touched by gradients;
 * `support` follows it through ema_update.
 */
template <class T>
struct EmaPair {
  ParameterCollection<T> main;
  ParameterCollection<T> support;
  double momentum = 0.997;
};

/// support <- momentum * support + (1 - momentum) * main, elementwise.
template <class T>
void ema_update(ParameterCollection<T>& support, const ParameterCollection<T>& main, double momentum) {
  if (!support.compatible(main)) throw ConfigError("EMA update between incompatible parameter collections");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("EMA momentum must lie in [0, 1]");
  const T a = static_cast<T>(momentum);
  const T b = static_cast<T>(1.0 - momentum);
  for (std::size_t i = 0; i < support.size(); ++i) {
    auto& s = support.entries()[i].value;
    const auto& m = main.entries()[i].value;
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = a * s[j] + b * m[j];
  }
}

template <class T>
void ema_update(EmaPair<T>& pair) {
  ema_update(pair.support, pair.main, pair.momentum);
}

}  // namespace pixsup

#endif  // PIXSUP_PARAMS_HPP
