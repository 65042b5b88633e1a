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

#include "mharag/metrics.hpp"

#include <cmath>
#include <string>

#include "mharag/error.hpp"

namespace mharag::metrics {

void ConfusionCounts::add(bool predicted_positive, bool actual_positive) noexcept
{
  if (actual_positive)
  {
    (predicted_positive ? tp : fn) += 1;
  }
  else
  {
    (predicted_positive ? fp : tn) += 1;
  }
}

double effective_accuracy(ConfusionCounts const &c)
{
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0)
  {
    throw UndefinedMetricError("effective accuracy needs both classes present (tp=" + std::to_string(c.tp) +
                               " fp=" + std::to_string(c.fp) + " tn=" + std::to_string(c.tn) +
                               " fn=" + std::to_string(c.fn) + ")");
  }
  double const tpr = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  double const tnr = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return 100.0 * std::sqrt(tpr * tnr);
}

double delta_avg(std::span<double const> method_scores, std::span<double const> rag_scores)
{
  if (method_scores.size() != rag_scores.size())
  {
    throw ContractError("delta_avg: " + std::to_string(method_scores.size()) + " method scores vs " +
                        std::to_string(rag_scores.size()) + " RAG scores");
  }
  if (method_scores.empty())
  {
    throw ContractError("delta_avg needs at least one task");
  }
  // Sum of logs keeps the product commutative to rounding and avoids overflow.
  double log_sum = 0.0;
  for (std::size_t i = 0; i < method_scores.size(); ++i)
  {
    double const factor = 100.0 + method_scores[i] - rag_scores[i];
    if (!(factor > 0.0))
    {
      throw DomainError("delta_avg: factor 100 + " + std::to_string(method_scores[i]) + " - " +
                        std::to_string(rag_scores[i]) + " is not positive");
    }
    log_sum += std::log(factor);
  }
  return std::exp(log_sum / static_cast<double>(method_scores.size())) - 100.0;
}

double population_std(std::span<double const> values)
{
  if (values.empty())
  {
    throw ContractError("standard deviation of an empty list");
  }
  double mean = 0.0;
  for (double v : values)
  {
    mean += v;
  }
  mean /= static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values)
  {
    sq += (v - mean) * (v - mean);
  }
  return std::sqrt(sq / static_cast<double>(values.size()));
}

OrderVarianceResult order_variance(ShuffledEval const &eval, std::span<std::uint64_t const> seeds)
{
  if (seeds.size() < 2)
  {
    throw ConfigError("order variance needs at least 2 shuffles, got " + std::to_string(seeds.size()));
  }
  OrderVarianceResult out;
  out.seeds.assign(seeds.begin(), seeds.end());
  for (std::uint64_t s : seeds)
  {
    out.scores.push_back(eval(s));
  }
  out.std = population_std(out.scores);
  return out;
}

std::vector<std::uint64_t> shuffle_seeds(std::size_t n, std::uint64_t base)
{
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    out[i] = base + i;
  }
  return out;
}

}  // namespace mharag::metrics
