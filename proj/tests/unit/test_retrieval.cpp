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
#include <numeric>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <gtest/gtest.h>

#include "mharag/embedding.hpp"
#include "mharag/error.hpp"
#include "mharag/retrieval.hpp"
#include "support.hpp"

namespace {

using namespace mharag;
using namespace mharag::retrieval;
using embedding::Fingerprint;

Fingerprint bits(std::initializer_list<std::size_t> on, std::size_t width = 64)
{
  Fingerprint f(width);
  for (auto b : on)
  {
    f.set(b);
  }
  return f;
}

data::Exemplar make(std::string id, std::string q, std::string a)
{
  return {std::move(id), std::move(q), std::move(a), std::nullopt};
}

std::vector<data::Exemplar> random_exemplars(std::mt19937_64 &rng, std::size_t n)
{
  // Small alphabet and short strings so score ties are common.
  std::uniform_int_distribution<int> len(2, 6);
  std::uniform_int_distribution<int> ch(0, 3);
  auto const                         text = [&] {
    std::string s;
    for (int i = len(rng); i > 0; --i)
    {
      s += "CNOc"[ch(rng)];
    }
    return s;
  };
  std::vector<data::Exemplar> out;
  for (std::size_t i = 0; i < n; ++i)
  {
    out.push_back(make("e" + std::to_string(1000 + i), text(), ch(rng) < 2 ? "Yes" : "No"));
  }
  return out;
}

// Oracle scores computed from first principles, not through the store.
double oracle_tanimoto(Fingerprint const &a, Fingerprint const &b)
{
  std::size_t both = 0, any = 0;
  for (std::size_t i = 0; i < a.width(); ++i)
  {
    both += (a.test(i) && b.test(i)) ? 1 : 0;
    any += (a.test(i) || b.test(i)) ? 1 : 0;
  }
  return any == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(any);
}

double oracle_score(Mode mode, data::Exemplar const &e, std::string const &q)
{
  if (mode == Mode::Tanimoto)
  {
    return oracle_tanimoto(embedding::fingerprint(q), embedding::fingerprint(e.question));
  }
  auto const a = embedding::embed_ngram(q);
  auto const b = embedding::embed_ngram(embedding::join({e.question, e.answer}));
  double     s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i)
  {
    s += a.values()[i] * b.values()[i];
  }
  return s;
}

std::vector<std::string> oracle_top_k(Mode mode, std::vector<data::Exemplar> const &store, std::string const &q,
                                      std::size_t k, IdSet const &exclude)
{
  std::vector<std::tuple<double, std::string>> all;
  for (auto const &e : store)
  {
    if (!exclude.contains(e.id))
    {
      all.emplace_back(oracle_score(mode, e, q), e.id);
    }
  }
  std::sort(all.begin(), all.end(), [](auto const &x, auto const &y) {
    if (std::get<0>(x) != std::get<0>(y))
    {
      return std::get<0>(x) > std::get<0>(y);
    }
    return std::get<1>(x) < std::get<1>(y);
  });
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i)
  {
    ids.push_back(std::get<1>(all[i]));
  }
  return ids;
}

TEST(Tanimoto, Examples)
{
  auto const f = bits({1, 5, 9});
  EXPECT_EQ(tanimoto(f, f), 1.0);
  EXPECT_EQ(tanimoto(bits({1, 2}), bits({3, 4})), 0.0);
  EXPECT_EQ(tanimoto(bits({1, 2, 3}), bits({2, 3, 4})), 0.5);
  EXPECT_EQ(tanimoto(bits({}), bits({})), 0.0);
}

TEST(Tanimoto, WidthMismatchIsAConfigError)
{
  EXPECT_THROW((void)tanimoto(bits({1}, 64), bits({1}, 128)), ConfigError);
}

TEST(Tanimoto, SymmetricAndBounded)
{
  std::mt19937_64 rng(7);
  std::bernoulli_distribution on(0.2);
  for (int t = 0; t < 200; ++t)
  {
    Fingerprint a(256), b(256);
    for (std::size_t i = 0; i < 256; ++i)
    {
      if (on(rng)) a.set(i);
      if (on(rng)) b.set(i);
    }
    double const s = tanimoto(a, b);
    EXPECT_EQ(s, tanimoto(b, a));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_DOUBLE_EQ(s, oracle_tanimoto(a, b));
  }
}

TEST(Mode, ParseRoundTrip)
{
  for (Mode m : {Mode::Tanimoto, Mode::Cosine})
  {
    EXPECT_EQ(parse_mode(to_string(m)), m);
  }
  EXPECT_THROW((void)parse_mode("bm25"), ConfigError);
}

TEST(TopK, SelfMatchRanksFirst)
{
  ExemplarStore const store({make("a", "CCO", "Yes"), make("b", "c1ccccc1", "No"), make("c", "CCN", "Yes")},
                            Mode::Tanimoto);
  auto const r = store.top_k("c1ccccc1", 2);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.ids[0], "b");
  EXPECT_EQ(r.scores[0], 1.0);
  EXPECT_EQ(r.indices[0], 1u);
  EXPECT_FALSE(r.truncated);
}

TEST(TopK, ExcludedIdsNeverAppear)
{
  std::mt19937_64 rng(11);
  auto const      items = random_exemplars(rng, 30);
  ExemplarStore   store(items, Mode::Tanimoto);
  for (auto const &e : items)
  {
    auto const r = store.top_k(e.question, 5, {e.id});
    EXPECT_EQ(std::count(r.ids.begin(), r.ids.end(), e.id), 0);
  }
}

TEST(TopK, ClampsWithTruncationFlag)
{
  std::mt19937_64 rng(12);
  ExemplarStore   store(random_exemplars(rng, 5), Mode::Tanimoto);
  auto const      r = store.top_k("CCO", 10);
  EXPECT_EQ(r.size(), 5u);
  EXPECT_TRUE(r.truncated);
}

TEST(TopK, Errors)
{
  std::mt19937_64 rng(13);
  auto const      items = random_exemplars(rng, 2);
  ExemplarStore   store(items, Mode::Tanimoto);
  EXPECT_THROW((void)store.top_k("CCO", 0), ContractError);
  EXPECT_THROW((void)store.top_k("CCO", 1, {items[0].id, items[1].id}), EmptyResultError);
}

TEST(TopK, DuplicateIdsAreRejected)
{
  EXPECT_ANY_THROW(ExemplarStore({make("a", "C", "Yes"), make("a", "N", "No")}, Mode::Tanimoto));
}

TEST(TopK, MatchesFullSortOracle)
{
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 200; ++trial)
  {
    Mode const  mode  = trial % 2 == 0 ? Mode::Tanimoto : Mode::Cosine;
    std::size_t n     = 1 + rng() % 50;
    auto const  items = random_exemplars(rng, n);
    ExemplarStore const store(items, mode);
    IdSet               exclude;
    if (n > 1 && trial % 3 == 0)
    {
      exclude.insert(items[rng() % n].id);
    }
    std::size_t const k = 1 + rng() % 12;
    std::string const q = items[rng() % n].question + "C";
    auto const        r = store.top_k(q, k, exclude);
    EXPECT_EQ(r.ids, oracle_top_k(mode, items, q, k, exclude)) << "trial " << trial;
    EXPECT_EQ(r.truncated, n - exclude.size() < k);
    EXPECT_TRUE(std::is_sorted(r.scores.begin(), r.scores.end(), std::greater<>()));
    for (std::size_t i = 0; i < r.size(); ++i)
    {
      EXPECT_EQ(store.at(r.indices[i]).id, r.ids[i]);
      EXPECT_NEAR(r.scores[i], oracle_score(mode, store.at(r.indices[i]), q), 1e-12);
    }
  }
}

TEST(TopK, PrefixConsistent)
{
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 50; ++trial)
  {
    auto const          items = random_exemplars(rng, 40);
    ExemplarStore const store(items, trial % 2 == 0 ? Mode::Tanimoto : Mode::Cosine);
    IdSet const         exclude{items[0].id};
    auto const          q = items[1].question;
    for (std::size_t k = 1; k < 20; ++k)
    {
      auto const small = store.top_k(q, k, exclude);
      auto const large = store.top_k(q, k + 1, exclude);
      ASSERT_TRUE(std::equal(small.ids.begin(), small.ids.end(), large.ids.begin()));
    }
  }
}

TEST(TopK, IndependentOfInsertionOrder)
{
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 30; ++trial)
  {
    auto items    = random_exemplars(rng, 35);
    auto shuffled = items;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    Mode const          mode = trial % 2 == 0 ? Mode::Tanimoto : Mode::Cosine;
    ExemplarStore const a(items, mode), b(shuffled, mode);
    for (int q = 0; q < 5; ++q)
    {
      auto const text = items[rng() % items.size()].question;
      auto const ra   = a.top_k(text, 8);
      auto const rb   = b.top_k(text, 8);
      EXPECT_EQ(ra.ids, rb.ids);
      EXPECT_EQ(ra.scores, rb.scores);
    }
  }
}

TEST(TopK, CosineKeysOnQuestionAndAnswer)
{
  // Same question, different answers: only cosine mode can tell them apart.
  ExemplarStore const cos({make("a", "CCO", "Yes"), make("b", "CCO", "No")}, Mode::Cosine);
  auto const          s = cos.scores("CCO");
  EXPECT_NE(s[0], s[1]);
  ExemplarStore const tan({make("a", "CCO", "Yes"), make("b", "CCO", "No")}, Mode::Tanimoto);
  auto const          t = tan.scores("CCO");
  EXPECT_EQ(t[0], t[1]);
}

TEST(Store, JsonRoundTrip)
{
  mharag::testing::TempDir dir;
  std::mt19937_64          rng(17);
  for (Mode mode : {Mode::Tanimoto, Mode::Cosine})
  {
    ExemplarStore const store(random_exemplars(rng, 25), mode, {32, 5}, 512);
    auto const          path = dir.path() / "store.json";
    store.save_json(path);
    ExemplarStore const back = ExemplarStore::load_json(path);
    EXPECT_EQ(back.mode(), mode);
    EXPECT_EQ(back.embedder().dim, 32u);
    EXPECT_EQ(back.fingerprint_bits(), 512u);
    ASSERT_EQ(back.size(), store.size());
    for (std::size_t i = 0; i < store.size(); ++i)
    {
      EXPECT_EQ(back.at(i), store.at(i));
      EXPECT_EQ(back.dense(i), store.dense(i));
      EXPECT_EQ(back.fingerprint(i), store.fingerprint(i));
    }
    EXPECT_EQ(back.top_k("CCO", 5).ids, store.top_k("CCO", 5).ids);
    EXPECT_EQ(back.index_of(store.at(3).id), 3u);
  }
}

}  // namespace
