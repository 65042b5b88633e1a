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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mharag::metrics {

struct ConfusionCounts
{
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept
  {
    return tp + fp + tn + fn;
  }
  /// Records one prediction; `positive` refers to the class, not correctness.
  void add(bool predicted_positive, bool actual_positive) noexcept;

  friend bool operator==(ConfusionCounts const &, ConfusionCounts const &) = default;
};

/// 100·√(TPR·TNR). Throws UndefinedMetricError when either class is absent.
double effective_accuracy(ConfusionCounts const &c);

/// (∏ (100 + method_i − rag_i))^{1/n} − 100. Throws ContractError on length
/// mismatch or empty input and DomainError when a factor is not positive.
double delta_avg(std::span<double const> method_scores, std::span<double const> rag_scores);

/// Population standard deviation.
double population_std(std::span<double const> values);

/// Evaluates the method once per shuffle seed. The callback receives the seed
/// used to permute every test item's retrieved exemplars and returns the
/// effective accuracy of that run.
using ShuffledEval = std::function<double(std::uint64_t seed)>;

struct OrderVarianceResult
{
  std::vector<std::uint64_t> seeds;
  std::vector<double>        scores;
  double                     std = 0.0;
};

/// Throws ConfigError with fewer than two seeds.
OrderVarianceResult order_variance(ShuffledEval const &eval, std::span<std::uint64_t const> seeds);

/// Seeds 0..n-1 offset by `base`.
std::vector<std::uint64_t> shuffle_seeds(std::size_t n, std::uint64_t base = 0);

}  // namespace mharag::metrics
