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
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mharag/encoders.hpp"
#include "mharag/exemplar.hpp"
#include "mharag/metrics.hpp"
#include "mharag/retrieval.hpp"
#include "mharag/toy_lm.hpp"

namespace mharag::pipeline {

using encoders::Method;
using numerics::Matrix;

/// How a query is turned into LM input.
struct MethodConfig
{
  Method      method = Method::Mha;
  std::size_t k      = 5;   // retrieved exemplars
  std::size_t heads  = 4;   // mha
  std::size_t m      = 10;  // pt / idpg
  std::size_t c      = 0;   // top-c exemplars additionally rendered as text

  /// Throws ConfigError when the fields do not fit the method.
  void validate() const;
  /// Exemplars the method must retrieve (0 for PT / IDPG / zero-shot).
  std::size_t retrieve_count() const;
};

/// Encoder inputs for one query; only the fields the method needs are filled.
struct Features
{
  Matrix query;  // d'×1, E_x
  Matrix rows;   // K×d', E_{x_k ⊕ y_k} (mha) or E_{x ⊕ x_k ⊕ y_k} (xragk)
  Matrix joint;  // d'×1, E_{x ⊕ x_1 ⊕ y_1 ⊕ … ⊕ x_K ⊕ y_K} (xrag)
};

/// Embeds in the given exemplar order. `order` indexes the store.
Features featurize(MethodConfig const &cfg, retrieval::ExemplarStore const &store, std::string const &question,
                   std::span<std::size_t const> order);

/// Soft prompt node for `features`; `params` are bound to adapter.tensors().
numerics::Var soft_prompt_on_tape(numerics::Tape &tape, MethodConfig const &cfg, encoders::Adapter const &adapter,
                                  std::span<numerics::Var const> params, Features const &features);

/// Untracked soft prompt; empty for methods without an encoder.
std::optional<Matrix> soft_prompt(MethodConfig const &cfg, encoders::Adapter const *adapter, Features const &f);

/// LM input: text context (all K for RAG, top c otherwise) plus the question.
lm::PromptedInput prompted_input(MethodConfig const &cfg, retrieval::ExemplarStore const &store,
                                 std::string const &question, std::span<std::size_t const> order,
                                 std::size_t prompt_length, std::optional<std::string> answer = std::nullopt);

/// Retrieved store indices per query id.
using RetrievalCache = std::unordered_map<std::string, std::vector<std::size_t>>;

/// Top-k for every item. With `leave_one_out` an item never retrieves its own
/// id. Items whose retrieval comes back empty are absent from the cache.
RetrievalCache retrieve_all(retrieval::ExemplarStore const &store, std::span<data::Exemplar const> items,
                            std::size_t k, bool leave_one_out);

/// Deterministic per-item permutation of `order` for shuffle `seed`.
std::vector<std::size_t> shuffled(std::span<std::size_t const> order, std::uint64_t seed, std::string const &id);

struct Candidates
{
  std::vector<std::string> answers  = {"Yes", "No"};
  std::string              positive = "Yes";
};

struct EvalResult
{
  metrics::ConfusionCounts counts;
  double                   effective_accuracy = 0.0;
  std::vector<std::string> predictions;
  std::size_t              skipped = 0;  // items with empty retrieval
};

struct EvalOptions
{
  std::optional<std::uint64_t> shuffle_seed;  // permute each item's exemplars
  Candidates                   candidates;
};

/// Restricted decoding over the candidates for every item. `adapter` must be
/// set iff the method has an encoder.
EvalResult evaluate(lm::LmWeights const &weights, MethodConfig const &cfg, encoders::Adapter const *adapter,
                    retrieval::ExemplarStore const &store, std::span<data::Exemplar const> items,
                    RetrievalCache const &cache, EvalOptions const &options = {});

}  // namespace mharag::pipeline
