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
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mharag/encoders.hpp"
#include "mharag/toy_lm.hpp"

namespace mharag::cost {

/// Shapes of the frozen sentence encoder, costed with the transformer formula.
struct EncoderShape
{
  std::size_t layers = 2;
  std::size_t hidden = 64;  // d'
  std::size_t vocab  = 261;
};

/// FLOPs of one transformer pass over T tokens, one multiply-add = 2 FLOPs:
/// L·(24·T·d² + 4·T²·d) + 2·T·d·V.
std::uint64_t transformer_pass(std::size_t layers, std::size_t d, std::size_t vocab, std::size_t tokens);

/// One decode step with cached keys/values attending over `context` positions:
/// L·(24·d² + 4·context·d) + 2·d·V.
std::uint64_t decode_step(std::size_t layers, std::size_t d, std::size_t vocab, std::size_t context);

/// Average token counts the model is costed at.
struct TokenCounts
{
  std::size_t question_tokens = 0;  // rendered question, including BOS and ANS
  std::size_t exemplar_tokens = 0;  // one rendered exemplar, including its SEP
  std::size_t new_tokens      = 2;  // answer + EOS for Yes/No tasks
  std::size_t store_size      = 0;  // only feeds the optional retrieval line
};

struct CostQuery
{
  encoders::Method method = encoders::Method::Mha;
  std::size_t      k      = 5;
  std::size_t      c      = 0;   // exemplars also rendered as text (hybrid)
  std::size_t      heads  = 4;   // mha
  std::size_t      m      = 10;  // pt / idpg
  TokenCounts      tokens;
};

struct TokenBudget
{
  std::size_t m               = 0;
  std::size_t c_tokens        = 0;
  std::size_t question_tokens = 0;
  std::size_t new_tokens      = 0;

  std::size_t prefill() const noexcept
  {
    return m + c_tokens + question_tokens;
  }
};

struct CostReport
{
  std::uint64_t encoder_flops    = 0;
  std::uint64_t projector_flops  = 0;  // MHA heads or affine projections
  std::uint64_t lm_prefill_flops = 0;
  std::uint64_t lm_decode_flops  = 0;
  std::uint64_t total            = 0;
  // Similarity search over the store; reported but never part of `total`.
  std::uint64_t retrieval_flops = 0;
  TokenBudget   budget;

  std::uint64_t lm_flops() const noexcept
  {
    return lm_prefill_flops + lm_decode_flops;
  }
};

/// Analytical inference cost of one query. Throws ConfigError on invalid shapes.
CostReport flops_inference(lm::LmConfig const &lm, EncoderShape const &encoder, CostQuery const &query);

/// MHA-RAG attention heads: H·(2·d·d'·(1 + 2K) + 4·K·d).
std::uint64_t mha_head_flops(std::size_t d, std::size_t d_prime, std::size_t heads, std::size_t k);

nlohmann::json to_json(CostReport const &report);

// ---------------------------------------------------------------------------
// Trainable parameters

/// A weight matrix a LoRA adapter would attach to, as (in, out).
using MatrixShape = std::pair<std::size_t, std::size_t>;

/// Attention projections (Q, K, V, O) of every layer of `lm`.
std::vector<MatrixShape> lora_attention_shapes(lm::LmConfig const &lm);

struct ParamQuery
{
  std::string              method;  // mha | xrag | xragk | pt | idpg | lora
  std::size_t              d         = 0;
  std::size_t              d_prime   = 0;
  std::size_t              heads     = 0;
  std::size_t              m         = 0;
  std::size_t              lora_rank = 0;
  std::vector<MatrixShape> lora_shapes;
};

/// mha: 3·H·d·d'; xrag/xragk: d·d' + d; pt: m·d; idpg: m·d·d' + m·d;
/// lora: rank·Σ(in + out). Throws ConfigError on an unknown method or zero shape.
std::uint64_t count_trainable(ParamQuery const &query);

}  // namespace mharag::cost
