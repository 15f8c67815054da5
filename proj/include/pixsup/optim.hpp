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

#ifndef PIXSUP_OPTIM_HPP
#define PIXSUP_OPTIM_HPP

#include <cmath>
#include <cstdint>

#include "pixsup/params.hpp"

namespace pixsup {

/// base_lr * (1 - iter / max_iter)^power.
inline double poly_lr(std::int64_t iter, std::int64_t max_iter, double base_lr, double power) {
  if (max_iter <= 0) throw ConfigError("poly_lr: max_iter must be positive");
  if (iter < 0 || iter > max_iter) throw InputError("poly_lr: iter outside [0, max_iter]");
  return base_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

struct LossWeights {
  double cls = 1.0;
  double rcm = 1.0;
  double mam = 0.0;
};

/// Classification and RCM weights stay fixed; the MAM weight switches on at
/// `mam_activation_epoch`.
inline LossWeights lambda_schedule(int epoch, int mam_activation_epoch, double cls = 1.0, double rcm = 1.0,
                                   double mam = 1.0) {
  if (epoch < 0) throw InputError("lambda_schedule: negative epoch");
  return {cls, rcm, epoch >= mam_activation_epoch ? mam : 0.0};
}

inline double total_loss(double cls, double rcm, double mam, const LossWeights& w) {
  return w.cls * cls + w.rcm * rcm + w.mam * mam;
}

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// SGD with heavy-ball momentum and L2 weight decay (biases included).
template <class T>
class Sgd {
 public:
  Sgd(const ParameterCollection<T>& like, SgdConfig cfg) : cfg_(cfg), velocity_(like.zeros_like()) {}

  void step(ParameterCollection<T>& params, const ParameterCollection<T>& grads, double lr) {
    if (!params.compatible(grads) || !params.compatible(velocity_))
      throw ConfigError("Sgd::step: gradient layout does not match parameters");
    const T mu = static_cast<T>(cfg_.momentum);
    const T wd = static_cast<T>(cfg_.weight_decay);
    const T eta = static_cast<T>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params.entries()[i].value;
      const auto& g = grads.entries()[i].value;
      auto& v = velocity_.entries()[i].value;
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = mu * v[j] + g[j] + wd * p[j];
        p[j] -= eta * v[j];
      }
    }
  }

  const ParameterCollection<T>& velocity() const { return velocity_; }
  ParameterCollection<T>& velocity() { return velocity_; }

 private:
  SgdConfig cfg_;
  ParameterCollection<T> velocity_;
};

}  // namespace pixsup

#endif  // PIXSUP_OPTIM_HPP
