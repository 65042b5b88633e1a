// Copyright 2026 The mharag Authors
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

#include <span>
#include <vector>

#include "mharag/numerics/matrix.hpp"

namespace mharag::numerics {

struct AdamConfig
{
  double learning_rate = 1e-3;
  double beta1         = 0.9;
  double beta2         = 0.999;
  double epsilon       = 1e-8;
};

/// Adam over an ordered list of parameter tensors. Moment buffers are created
/// on the first step and sized from the parameters handed in, so the optimizer
/// only ever holds state for what it was asked to update.
class Adam
{
public:
  explicit Adam(AdamConfig config);

  /// params[i] -= update(grads[i]). Shapes must match the first call.
  void step(std::span<Matrix *const> params, std::span<Matrix const> grads);

  std::size_t state_entries() const noexcept;
  std::size_t steps() const noexcept
  {
    return steps_;
  }
  AdamConfig const &config() const noexcept
  {
    return config_;
  }
  /// Schedules change the rate between steps; moments are kept.
  void set_learning_rate(double lr);

private:
  AdamConfig          config_;
  std::size_t         steps_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::span<Matrix> grads, double max_norm);

}  // namespace mharag::numerics
