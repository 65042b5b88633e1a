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

#include "mharag/cost.hpp"

#include "mharag/error.hpp"

namespace mharag::cost {

namespace {

using u64 = std::uint64_t;

void require_positive(std::size_t value, char const *what)
{
  if (value == 0)
  {
    throw ConfigError(std::string(what) + " must be positive");
  }
}

}  // namespace

u64 transformer_pass(std::size_t layers, std::size_t d, std::size_t vocab, std::size_t tokens)
{
  u64 const L = layers, D = d, V = vocab, T = tokens;
  return L * (24 * T * D * D + 4 * T * T * D) + 2 * T * D * V;
}

u64 decode_step(std::size_t layers, std::size_t d, std::size_t vocab, std::size_t context)
{
  u64 const L = layers, D = d, V = vocab, T = context;
  return L * (24 * D * D + 4 * T * D) + 2 * D * V;
}

u64 mha_head_flops(std::size_t d, std::size_t d_prime, std::size_t heads, std::size_t k)
{
  u64 const D = d, Dp = d_prime, H = heads, K = k;
  return H * (2 * D * Dp * (1 + 2 * K) + 4 * K * D);
}

CostReport flops_inference(lm::LmConfig const &lm, EncoderShape const &encoder, CostQuery const &query)
{
  using encoders::Method;
  lm.validate();
  require_positive(encoder.layers, "encoder layers");
  require_positive(encoder.hidden, "encoder hidden size");
  require_positive(encoder.vocab, "encoder vocab");
  require_positive(query.tokens.question_tokens, "question tokens");
  if (encoders::uses_exemplars(query.method))
  {
    require_positive(query.k, "K");
    require_positive(query.tokens.exemplar_tokens, "exemplar tokens");
  }
  if (query.c > query.k && query.method != Method::ZeroShot)
  {
    throw ConfigError("hybrid c=" + std::to_string(query.c) + " exceeds K=" + std::to_string(query.k));
  }

  auto const &t     = query.tokens;
  std::size_t const d  = lm.d;
  std::size_t const dp = encoder.hidden;
  auto const enc = [&](std::size_t tokens) { return transformer_pass(encoder.layers, dp, encoder.vocab, tokens); };

  CostReport r;
  r.budget.question_tokens = t.question_tokens;
  r.budget.new_tokens      = t.new_tokens;
  r.budget.c_tokens        = query.c * t.exemplar_tokens;
  u64 const K              = query.k;

  switch (query.method)
  {
  case Method::ZeroShot:
    r.budget.c_tokens = 0;
    break;
  case Method::Rag:
    r.budget.c_tokens = query.k * t.exemplar_tokens;
    break;
  case Method::Mha:
    require_positive(query.heads, "heads");
    r.budget.m        = query.heads;
    r.encoder_flops   = enc(t.question_tokens) + K * enc(t.exemplar_tokens);
    r.projector_flops = mha_head_flops(d, dp, query.heads, query.k);
    break;
  case Method::Xrag:
    r.budget.m        = 1;
    r.encoder_flops   = enc(t.question_tokens + query.k * t.exemplar_tokens);
    r.projector_flops = 2 * u64{d} * dp;
    break;
  case Method::XragK:
    r.budget.m        = query.k;
    r.encoder_flops   = K * enc(t.question_tokens + t.exemplar_tokens);
    r.projector_flops = K * 2 * u64{d} * dp;
    break;
  case Method::Pt:
    require_positive(query.m, "m");
    r.budget.m = query.m;
    break;
  case Method::Idpg:
    require_positive(query.m, "m");
    r.budget.m        = query.m;
    r.encoder_flops   = enc(t.question_tokens);
    r.projector_flops = u64{query.m} * 2 * d * dp;
    break;
  }

  std::size_t const prefill = r.budget.prefill();
  r.lm_prefill_flops        = transformer_pass(lm.layers, d, lm.vocab, prefill);
  for (std::size_t j = 1; j <= t.new_tokens; ++j)
  {
    r.lm_decode_flops += decode_step(lm.layers, d, lm.vocab, prefill + j);
  }
  if (encoders::uses_exemplars(query.method))
  {
    r.retrieval_flops = 2 * u64{t.store_size} * dp;
  }
  r.total = r.encoder_flops + r.projector_flops + r.lm_prefill_flops + r.lm_decode_flops;
  return r;
}

nlohmann::json to_json(CostReport const &r)
{
  return {
    {"encoder_flops", r.encoder_flops},
    {"projector_flops", r.projector_flops},
    {"lm_prefill_flops", r.lm_prefill_flops},
    {"lm_decode_flops", r.lm_decode_flops},
    {"total", r.total},
    {"retrieval_flops", r.retrieval_flops},
    {"m", r.budget.m},
    {"c_tokens", r.budget.c_tokens},
    {"question_tokens", r.budget.question_tokens},
    {"new_tokens", r.budget.new_tokens},
  };
}

std::vector<MatrixShape> lora_attention_shapes(lm::LmConfig const &lm)
{
  std::vector<MatrixShape> out;
  for (std::size_t l = 0; l < lm.layers; ++l)
  {
    for (int p = 0; p < 4; ++p)
    {
      out.emplace_back(lm.d, lm.d);
    }
  }
  return out;
}

u64 count_trainable(ParamQuery const &q)
{
  u64 const d = q.d, dp = q.d_prime, H = q.heads, m = q.m;
  if (q.method == "lora")
  {
    require_positive(q.lora_rank, "LoRA rank");
    if (q.lora_shapes.empty())
    {
      throw ConfigError("LoRA count needs at least one attached matrix");
    }
    u64 total = 0;
    for (auto const &[in, out] : q.lora_shapes)
    {
      require_positive(in, "LoRA input dim");
      require_positive(out, "LoRA output dim");
      total += u64{q.lora_rank} * (in + out);
    }
    return total;
  }
  require_positive(q.d, "d");
  if (q.method == "mha")
  {
    require_positive(q.d_prime, "d'");
    require_positive(q.heads, "H");
    return 3 * H * d * dp;
  }
  if (q.method == "xrag" || q.method == "xragk")
  {
    require_positive(q.d_prime, "d'");
    return d * dp + d;
  }
  if (q.method == "pt")
  {
    require_positive(q.m, "m");
    return m * d;
  }
  if (q.method == "idpg")
  {
    require_positive(q.d_prime, "d'");
    require_positive(q.m, "m");
    return m * d * dp + m * d;
  }
  throw ConfigError("unknown method '" + q.method + "' for parameter counting");
}

}  // namespace mharag::cost
