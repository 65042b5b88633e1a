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

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "mharag/cost.hpp"
#include "mharag/error.hpp"
#include "mharag/metrics.hpp"

namespace {

using namespace mharag;
using namespace mharag::metrics;
using namespace mharag::cost;
using encoders::Method;

// ---------------------------------------------------------------------------
// Effective accuracy

TEST(EffectiveAccuracy, Examples)
{
  EXPECT_EQ(effective_accuracy({5, 0, 7, 0}), 100.0);
  EXPECT_EQ(effective_accuracy({5, 7, 0, 0}), 0.0);
  // TPR = 9/10, TNR = 16/25.
  EXPECT_NEAR(effective_accuracy({9, 9, 16, 1}), 100.0 * std::sqrt(0.9 * 0.64), 1e-12);
  EXPECT_NEAR(effective_accuracy({9, 9, 16, 1}), 75.894663844041, 1e-9);
}

TEST(EffectiveAccuracy, UndefinedWithoutBothClasses)
{
  EXPECT_THROW((void)effective_accuracy({3, 0, 0, 2}), UndefinedMetricError);
  EXPECT_THROW((void)effective_accuracy({0, 2, 3, 0}), UndefinedMetricError);
  EXPECT_THROW((void)effective_accuracy({}), UndefinedMetricError);
}

TEST(EffectiveAccuracy, SymmetricUnderClassSwap)
{
  std::mt19937_64                            rng(1);
  std::uniform_int_distribution<std::size_t> n(0, 40);
  for (int t = 0; t < 500; ++t)
  {
    ConfusionCounts c{n(rng) + 1, n(rng), n(rng) + 1, n(rng)};
    ConfusionCounts swapped{c.tn, c.fn, c.tp, c.fp};
    double const    e = effective_accuracy(c);
    EXPECT_NEAR(e, effective_accuracy(swapped), 1e-12);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 100.0);
  }
}

TEST(ConfusionCounts, Add)
{
  ConfusionCounts c;
  c.add(true, true);
  c.add(true, false);
  c.add(false, false);
  c.add(false, true);
  c.add(false, true);
  EXPECT_EQ(c, (ConfusionCounts{1, 1, 1, 2}));
  EXPECT_EQ(c.total(), 5u);
}

// ---------------------------------------------------------------------------
// Delta avg

TEST(DeltaAvg, Examples)
{
  std::vector<double> const s{55.0, 70.0, 91.5};
  EXPECT_NEAR(delta_avg(s, s), 0.0, 1e-12);
  std::vector<double> const a{80.0, 90.0}, b{70.0, 85.0};
  EXPECT_NEAR(delta_avg(a, b), std::sqrt(110.0 * 105.0) - 100.0, 1e-12);
  EXPECT_NEAR(delta_avg(a, b), 7.4709, 1e-4);
  std::vector<double> const m{69.66}, r{50.0};
  EXPECT_NEAR(delta_avg(m, r), 19.66, 1e-12);
}

TEST(DeltaAvg, InvariantUnderTaskOrder)
{
  std::mt19937_64                        rng(2);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int t = 0; t < 100; ++t)
  {
    std::vector<double> a(6), b(6);
    for (std::size_t i = 0; i < 6; ++i)
    {
      a[i] = u(rng);
      b[i] = u(rng);
    }
    double const             base = delta_avg(a, b);
    std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> pa, pb;
    for (auto i : perm)
    {
      pa.push_back(a[i]);
      pb.push_back(b[i]);
    }
    EXPECT_NEAR(delta_avg(pa, pb), base, 1e-9);
  }
}

TEST(DeltaAvg, Errors)
{
  std::vector<double> const one{50.0}, two{50.0, 60.0}, none;
  EXPECT_THROW((void)delta_avg(one, two), ContractError);
  EXPECT_THROW((void)delta_avg(none, none), ContractError);
  std::vector<double> const low{0.0}, high{100.0};
  EXPECT_THROW((void)delta_avg(low, high), DomainError);
}

// ---------------------------------------------------------------------------
// Order variance

TEST(PopulationStd, Examples)
{
  std::vector<double> const v{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_NEAR(population_std(v), 2.0, 1e-12);
  std::vector<double> const same{3.5, 3.5, 3.5};
  EXPECT_EQ(population_std(same), 0.0);
  EXPECT_THROW((void)population_std({}), ContractError);
}

TEST(OrderVariance, CollectsOneScorePerSeed)
{
  auto const seeds = shuffle_seeds(5);
  ASSERT_EQ(seeds.size(), 5u);
  EXPECT_EQ(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size(), 5u);
  std::vector<std::uint64_t> seen;
  auto const                 res = order_variance(
    [&](std::uint64_t s) {
      seen.push_back(s);
      return static_cast<double>(s % 7);
    },
    seeds);
  EXPECT_EQ(seen, seeds);
  EXPECT_EQ(res.seeds, seeds);
  ASSERT_EQ(res.scores.size(), 5u);
  EXPECT_NEAR(res.std, population_std(res.scores), 1e-15);
}

TEST(OrderVariance, DegenerateEvaluationHasZeroSpread)
{
  auto const res = order_variance([](std::uint64_t) { return 61.25; }, shuffle_seeds(5, 9));
  EXPECT_EQ(res.std, 0.0);
}

TEST(OrderVariance, NeedsTwoShuffles)
{
  auto const one = shuffle_seeds(1);
  EXPECT_THROW((void)order_variance([](std::uint64_t) { return 1.0; }, one), ConfigError);
}

// ---------------------------------------------------------------------------
// FLOPs

lm::LmConfig toy_lm()
{
  lm::LmConfig c;
  c.layers = 4;
  c.d      = 128;
  c.vocab  = 261;
  return c;
}

std::uint64_t oracle_pass(std::uint64_t L, std::uint64_t d, std::uint64_t V, std::uint64_t T)
{
  return L * (24 * T * d * d + 4 * T * T * d) + 2 * T * d * V;
}

CostQuery query(Method m, std::size_t k, std::size_t c = 0)
{
  CostQuery q;
  q.method                 = m;
  q.k                      = k;
  q.c                      = c;
  q.heads                  = 4;
  q.m                      = 10;
  q.tokens.question_tokens = 30;
  q.tokens.exemplar_tokens = 40;
  q.tokens.new_tokens      = 2;
  q.tokens.store_size      = 1000;
  return q;
}

TEST(Flops, TransformerPassByHand)
{
  EXPECT_EQ(transformer_pass(4, 128, 261, 64), 113'328'128u);
  EXPECT_EQ(4u * (24u * 64 * 128 * 128 + 4u * 64 * 64 * 128), 109'051'904u);
  EXPECT_EQ(decode_step(4, 128, 261, 65), 4u * (24 * 128 * 128 + 4 * 65 * 128) + 2u * 128 * 261);
}

TEST(Flops, MhaHeadCost)
{
  EXPECT_EQ(mha_head_flops(128, 64, 1, 5), 2u * 128 * 64 * 11 + 4u * 5 * 128);
  EXPECT_EQ(mha_head_flops(128, 64, 4, 5), 4 * mha_head_flops(128, 64, 1, 5));
}

TEST(Flops, ReportMatchesFormulaForEveryMethod)
{
  EncoderShape const enc;
  auto const         lm = toy_lm();
  auto const         e  = [&](std::uint64_t T) { return oracle_pass(enc.layers, enc.hidden, enc.vocab, T); };
  for (Method m : {Method::ZeroShot, Method::Rag, Method::Mha, Method::Xrag, Method::XragK, Method::Pt, Method::Idpg})
  {
    auto const q = query(m, 5, m == Method::Mha || m == Method::Xrag || m == Method::XragK ? 2 : 0);
    auto const r = flops_inference(lm, enc, q);

    std::uint64_t m_len = 0, ctx = q.c * 40, encoder = 0, proj = 0;
    switch (m)
    {
    case Method::ZeroShot:
      ctx = 0;
      break;
    case Method::Rag:
      ctx = 5 * 40;
      break;
    case Method::Mha:
      m_len   = 4;
      encoder = e(30) + 5 * e(40);
      proj    = 4 * (2 * 128 * 64 * 11 + 4 * 5 * 128);
      break;
    case Method::Xrag:
      m_len   = 1;
      encoder = e(30 + 5 * 40);
      proj    = 2 * 128 * 64;
      break;
    case Method::XragK:
      m_len   = 5;
      encoder = 5 * e(70);
      proj    = 5 * 2 * 128 * 64;
      break;
    case Method::Pt:
      m_len = 10;
      break;
    case Method::Idpg:
      m_len   = 10;
      encoder = e(30);
      proj    = 10 * 2 * 128 * 64;
      break;
    }
    std::uint64_t const T      = m_len + ctx + 30;
    std::uint64_t const decode = (4 * (24 * 128 * 128 + 4 * (T + 1) * 128) + 2 * 128 * 261) +
                                 (4 * (24 * 128 * 128 + 4 * (T + 2) * 128) + 2 * 128 * 261);
    EXPECT_EQ(r.budget.prefill(), T) << encoders::to_string(m);
    EXPECT_EQ(r.encoder_flops, encoder) << encoders::to_string(m);
    EXPECT_EQ(r.projector_flops, proj) << encoders::to_string(m);
    EXPECT_EQ(r.lm_prefill_flops, oracle_pass(4, 128, 261, T)) << encoders::to_string(m);
    EXPECT_EQ(r.lm_decode_flops, decode) << encoders::to_string(m);
    EXPECT_EQ(r.total, r.encoder_flops + r.projector_flops + r.lm_prefill_flops + r.lm_decode_flops);
    bool const retrieves = m == Method::Rag || m == Method::Mha || m == Method::Xrag || m == Method::XragK;
    EXPECT_EQ(r.retrieval_flops, retrieves ? 2u * 1000 * 64 : 0u) << encoders::to_string(m);
  }
}

TEST(Flops, RagAttentionTermIsSuperlinearInK)
{
  auto const lm = toy_lm();
  for (std::size_t k = 1; k <= 16; ++k)
  {
    auto const a = flops_inference(lm, {}, query(Method::Rag, k));
    auto const b = flops_inference(lm, {}, query(Method::Rag, 2 * k));
    // The T^2 attention part alone.
    auto const attn = [&](CostReport const &r) {
      std::uint64_t const T = r.budget.prefill();
      return 4u * 4 * T * T * 128;
    };
    EXPECT_GT(static_cast<double>(attn(b)) / static_cast<double>(attn(a)), 2.0);
    EXPECT_GT(b.total, a.total);
  }
}

TEST(Flops, MhaPrefillIsIndependentOfKAndTotalIsAffine)
{
  EncoderShape const enc;
  auto const         lm    = toy_lm();
  auto const         at    = [&](std::size_t k) { return flops_inference(lm, enc, query(Method::Mha, k)); };
  std::uint64_t const slope = oracle_pass(enc.layers, enc.hidden, enc.vocab, 40) + 4 * (4 * 128 * 64 + 4 * 128);
  for (std::size_t k = 1; k < 32; ++k)
  {
    EXPECT_EQ(at(k).lm_prefill_flops, at(1).lm_prefill_flops);
    EXPECT_EQ(at(k + 1).total - at(k).total, slope);
  }
}

TEST(Flops, SingleHeadMatchesXragOnTheLmSide)
{
  auto const lm = toy_lm();
  for (std::size_t k : {1, 5, 20})
  {
    auto q1  = query(Method::Mha, k);
    q1.heads = 1;
    auto const a = flops_inference(lm, {}, q1);
    auto const b = flops_inference(lm, {}, query(Method::Xrag, k));
    EXPECT_EQ(a.lm_flops(), b.lm_flops());
  }
}

TEST(Flops, FewerHeadsThanExemplarsBeatsXragK)
{
  auto const lm = toy_lm();
  for (std::size_t k = 5; k <= 20; ++k)
  {
    auto q  = query(Method::Mha, k);
    q.heads = 4;
    EXPECT_LT(flops_inference(lm, {}, q).lm_flops(), flops_inference(lm, {}, query(Method::XragK, k)).lm_flops());
  }
}

TEST(Flops, MonotoneInEachBudget)
{
  auto const lm = toy_lm();
  for (Method m : {Method::Mha, Method::Xrag, Method::XragK})
  {
    for (std::size_t c = 0; c < 5; ++c)
    {
      EXPECT_LT(flops_inference(lm, {}, query(m, 5, c)).total, flops_inference(lm, {}, query(m, 5, c + 1)).total);
    }
  }
  for (Method m : {Method::ZeroShot, Method::Rag, Method::Mha, Method::Xrag, Method::XragK, Method::Pt, Method::Idpg})
  {
    auto q = query(m, 5);
    for (std::size_t len = 1; len < 60; len += 7)
    {
      q.tokens.question_tokens = len;
      auto const a             = flops_inference(lm, {}, q);
      q.tokens.question_tokens = len + 1;
      EXPECT_LT(a.total, flops_inference(lm, {}, q).total);
    }
    q = query(m, 5);
    for (std::size_t n = 0; n < 6; ++n)
    {
      q.tokens.new_tokens = n;
      auto const a        = flops_inference(lm, {}, q);
      q.tokens.new_tokens = n + 1;
      EXPECT_LT(a.total, flops_inference(lm, {}, q).total);
    }
  }
}

TEST(Flops, Errors)
{
  auto const lm = toy_lm();
  auto       q  = query(Method::Mha, 5);
  q.tokens.question_tokens = 0;
  EXPECT_THROW((void)flops_inference(lm, {}, q), ConfigError);
  q       = query(Method::Mha, 5);
  q.heads = 0;
  EXPECT_THROW((void)flops_inference(lm, {}, q), ConfigError);
  q = query(Method::Pt, 5);
  q.m = 0;
  EXPECT_THROW((void)flops_inference(lm, {}, q), ConfigError);
}

TEST(Flops, JsonHasEveryLineItem)
{
  auto const j = to_json(flops_inference(toy_lm(), {}, query(Method::Mha, 5)));
  for (char const *key : {"encoder_flops", "projector_flops", "lm_prefill_flops", "lm_decode_flops", "total",
                          "retrieval_flops", "m", "c_tokens", "question_tokens", "new_tokens"})
  {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

// ---------------------------------------------------------------------------
// Trainable parameters

TEST(CountTrainable, Examples)
{
  EXPECT_EQ(count_trainable({"mha", 64, 32, 2, 0, 0, {}}), 12'288u);
  EXPECT_EQ(count_trainable({"pt", 2048, 0, 0, 10, 0, {}}), 20'480u);
  EXPECT_EQ(count_trainable({"pt", 1024, 0, 0, 10, 0, {}}), 10'240u);
  EXPECT_EQ(count_trainable({"lora", 0, 0, 0, 0, 8, {{64, 64}, {64, 32}}}), 8u * (128 + 96));
  EXPECT_THROW((void)count_trainable({"mha", 64, 32, 0, 0, 0, {}}), ConfigError);
  EXPECT_THROW((void)count_trainable({"prefix", 64, 32, 2, 0, 0, {}}), ConfigError);
  EXPECT_THROW((void)count_trainable({"lora", 0, 0, 0, 0, 8, {}}), ConfigError);
}

TEST(CountTrainable, ClosedFormsAgreeWithInitialisedParameters)
{
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t)
  {
    std::size_t const d = 1 + rng() % 64, dp = 1 + rng() % 32, h = 1 + rng() % 8, m = 1 + rng() % 16;
    EXPECT_EQ(count_trainable({"mha", d, dp, h, 0, 0, {}}), encoders::MhaRagParams::init(d, dp, h, rng).count());
    EXPECT_EQ(count_trainable({"xrag", d, dp, 0, 0, 0, {}}), encoders::XragParams::init(d, dp, rng).count());
    EXPECT_EQ(count_trainable({"xragk", d, dp, 0, 0, 0, {}}), d * dp + d);
    EXPECT_EQ(count_trainable({"pt", d, 0, 0, m, 0, {}}), encoders::PtParams::init(d, m, rng).count());
    EXPECT_EQ(count_trainable({"idpg", d, dp, 0, m, 0, {}}), encoders::IdpgParams::init(d, dp, m, rng).count());
  }
}

TEST(CountTrainable, LoraAttachesToEveryAttentionProjection)
{
  lm::LmConfig c;
  c.layers          = 3;
  c.d               = 32;
  auto const shapes = lora_attention_shapes(c);
  EXPECT_EQ(shapes.size(), 12u);
  EXPECT_EQ(count_trainable({"lora", 0, 0, 0, 0, 4, shapes}), 12u * 4 * (32 + 32));
}

}  // namespace
