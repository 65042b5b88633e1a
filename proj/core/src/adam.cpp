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

#include "mharag/numerics/adam.hpp"

#include <cmath>

#include "mharag/error.hpp"

namespace mharag::numerics {

Adam::Adam(AdamConfig config)
  : config_(config)
{
  if (!(config_.learning_rate > 0.0))
  {
    throw ConfigError("Adam learning rate must be positive");
  }
}

void Adam::step(std::span<Matrix *const> params, std::span<Matrix const> grads)
{
  if (params.size() != grads.size())
  {
    throw ContractError("Adam::step: " + std::to_string(params.size()) + " params but " +
                        std::to_string(grads.size()) + " gradients");
  }
  if (first_.empty())
  {
    for (Matrix const *p : params)
    {
      first_.emplace_back(p->rows(), p->cols());
      second_.emplace_back(p->rows(), p->cols());
    }
  }
  if (first_.size() != params.size())
  {
    throw ContractError("Adam::step: parameter list changed between steps");
  }
  ++steps_;
  double const t   = static_cast<double>(steps_);
  double const bc1 = 1.0 - std::pow(config_.beta1, t);
  double const bc2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i)
  {
    Matrix       &p = *params[i];
    Matrix const &g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols() || first_[i].size() != p.size())
    {
      throw ShapeError("Adam::step: gradient " + g.shape_string() + " for parameter " + p.shape_string());
    }
    auto m = first_[i].data();
    auto v = second_[i].data();
    auto w = p.data();
    auto d = g.data();
    for (std::size_t k = 0; k < w.size(); ++k)
    {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * d[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * d[k] * d[k];
      w[k] -= config_.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + config_.epsilon);
    }
  }
}

void Adam::set_learning_rate(double lr)
{
  if (!(lr > 0.0))
  {
    throw ConfigError("Adam learning rate must be positive");
  }
  config_.learning_rate = lr;
}

std::size_t Adam::state_entries() const noexcept
{
  std::size_t total = 0;
  for (Matrix const &m : first_)
  {
    total += m.size();
  }
  return total;
}

double clip_global_norm(std::span<Matrix> grads, double max_norm)
{
  double sq = 0.0;
  for (Matrix const &g : grads)
  {
    for (double v : g.data())
    {
      sq += v * v;
    }
  }
  double const norm = std::sqrt(sq);
  if (!std::isfinite(norm))
  {
    throw NumericError("gradient norm is not finite");
  }
  if (norm > max_norm)
  {
    double const s = max_norm / norm;
    for (Matrix &g : grads)
    {
      for (double &v : g.data())
      {
        v *= s;
      }
    }
  }
  return norm;
}

}  // namespace mharag::numerics
