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
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mharag/data.hpp"
#include "mharag/embedding.hpp"
#include "mharag/error.hpp"
#include "mharag/retrieval.hpp"
#include "support.hpp"

namespace {

using namespace mharag;
using namespace mharag::data;
using mharag::testing::TempDir;

void write_text(std::filesystem::path const &p, std::string const &text)
{
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_text(std::filesystem::path const &p)
{
  std::ifstream      in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double yes_rate(Dataset const &d)
{
  auto const n = std::count_if(d.begin(), d.end(), [](Exemplar const &e) { return e.answer == kYes; });
  return static_cast<double>(n) / static_cast<double>(d.size());
}

// 5-NN majority through the retrieval store, independent of the generator's loop.
double knn_accuracy(Dataset const &train, Dataset const &eval, std::size_t k)
{
  retrieval::ExemplarStore const store(train, retrieval::Mode::Tanimoto);
  std::size_t                    correct = 0;
  for (auto const &e : eval)
  {
    auto const r   = store.top_k(e.question, k);
    std::size_t yes = 0;
    for (std::size_t idx : r.indices)
    {
      yes += store.at(idx).answer == kYes ? 1 : 0;
    }
    std::string const vote = 2 * yes > r.size() ? kYes : kNo;
    correct += vote == e.answer ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(eval.size());
}

std::string schema_message(std::string const &text)
{
  TempDir    dir;
  auto const p = dir / "bad.jsonl";
  write_text(p, text);
  try
  {
    (void)load_jsonl(p);
  }
  catch (SchemaError const &e)
  {
    return e.what();
  }
  return "<no error>";
}

TEST(Jsonl, EmptyFileGivesEmptyDataset)
{
  TempDir dir;
  write_text(dir / "empty.jsonl", "");
  EXPECT_TRUE(load_jsonl(dir / "empty.jsonl").empty());
}

TEST(Jsonl, SchemaErrorsNameTheLine)
{
  std::string const ok = R"({"id":"a","question":"CCO","answer":"Yes"})" "\n";
  EXPECT_NE(schema_message(ok + "{not json\n").find(":2"), std::string::npos);
  EXPECT_NE(schema_message(ok + "[1,2]\n").find(":2"), std::string::npos);
  EXPECT_NE(schema_message(ok + R"({"id":"b","question":"CCO"})" "\n").find("answer"), std::string::npos);
  EXPECT_NE(schema_message(R"({"id":"b","question":"CCO","answer":""})" "\n").find(":1"), std::string::npos);
  EXPECT_NE(schema_message(R"({"id":3,"question":"CCO","answer":"No"})" "\n").find("id"), std::string::npos);
  auto const dup = schema_message(ok + R"({"id":"x","question":"N","answer":"No"})" "\n" + ok);
  EXPECT_NE(dup.find("duplicate id 'a'"), std::string::npos) << dup;
  EXPECT_NE(dup.find("1 and 3"), std::string::npos) << dup;
}

TEST(Jsonl, RoundTripKeepsDocs)
{
  TempDir       dir;
  Dataset const items{{"a", "CCO", "Yes", std::nullopt}, {"b", "who is \"x\"?\n", "No", "x = no"}};
  save_jsonl(items, dir / "d.jsonl");
  EXPECT_EQ(load_jsonl(dir / "d.jsonl"), items);
}

TEST(Cluster, ZeroEditRateIsPerfectlySeparable)
{
  ClusterSpec spec;
  spec.clusters = 10;
  spec.edit_rate = 0.0;
  spec.train = 200;
  spec.dev = 40;
  spec.test = 40;
  spec.seed = 3;
  auto const ds = gen_cluster_classification(spec);
  EXPECT_EQ(ds.manifest["oracle"]["test_knn_accuracy"].get<double>(), 1.0);
  EXPECT_EQ(knn_accuracy(ds.train, ds.test, 5), 1.0);
}

TEST(Cluster, DefaultSpecMeetsOracleAndBalance)
{
  auto const ds = gen_cluster_classification(ClusterSpec{});
  EXPECT_EQ(ds.train.size(), 1500u);
  EXPECT_EQ(ds.dev.size(), 150u);
  EXPECT_EQ(ds.test.size(), 100u);
  double const oracle = knn_accuracy(ds.train, ds.test, 5);
  EXPECT_GE(oracle, 0.95);
  EXPECT_EQ(oracle, ds.manifest["oracle"]["test_knn_accuracy"].get<double>());
  EXPECT_EQ(knn_accuracy(ds.train, ds.dev, 5), ds.manifest["oracle"]["dev_knn_accuracy"].get<double>());
  for (auto const *split : {&ds.train, &ds.dev, &ds.test})
  {
    EXPECT_NEAR(yes_rate(*split), 0.5, 0.10);
  }
  EXPECT_EQ(ds.kind, TaskKind::BinaryClassification);
  EXPECT_EQ(ds.mode, retrieval::Mode::Tanimoto);
}

TEST(Cluster, ImpossibleOracleIsAConfigError)
{
  ClusterSpec spec;
  spec.clusters = 4;
  spec.edit_rate = 0.9;
  spec.train = 100;
  spec.dev = 10;
  spec.test = 20;
  spec.min_oracle = 1.0;
  spec.max_retries = 2;
  EXPECT_THROW((void)gen_cluster_classification(spec), ConfigError);
  spec.edit_rate = 1.0;
  EXPECT_THROW((void)gen_cluster_classification(spec), ConfigError);
}

TEST(Cluster, SameSeedWritesIdenticalFiles)
{
  ClusterSpec spec;
  spec.clusters = 8;
  spec.train = 120;
  spec.dev = 30;
  spec.test = 30;
  spec.seed = 9;
  TempDir a, b;
  write_dataset(gen_cluster_classification(spec), a.path());
  write_dataset(gen_cluster_classification(spec), b.path());
  for (char const *f : {"train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json"})
  {
    EXPECT_EQ(read_text(a / f), read_text(b / f)) << f;
  }
  spec.seed = 10;
  TempDir c;
  write_dataset(gen_cluster_classification(spec), c.path());
  EXPECT_NE(read_text(a / "train.jsonl"), read_text(c / "train.jsonl"));
}

TEST(Cluster, SplitIdsAreDisjoint)
{
  auto const            ds = mharag::testing::small_cluster(4);
  std::set<std::string> ids;
  std::size_t           total = 0;
  for (auto const *split : {&ds.train, &ds.dev, &ds.test})
  {
    for (auto const &e : *split)
    {
      ids.insert(e.id);
      ++total;
    }
  }
  EXPECT_EQ(ids.size(), total);
}

TEST(DocQa, OraclesAndHitRate)
{
  auto const ds = gen_doc_qa(DocQaSpec{});
  EXPECT_EQ(ds.kind, TaskKind::Qa);
  EXPECT_EQ(ds.mode, retrieval::Mode::Cosine);
  EXPECT_EQ(ds.test.size(), 100u);
  EXPECT_EQ(ds.dev.size(), 100u);
  for (auto const &e : ds.test)
  {
    ASSERT_TRUE(e.doc.has_value());
    EXPECT_EQ(doc_oracle(*e.doc), e.answer);
  }
  EXPECT_EQ(ds.manifest["oracle"]["gold_doc_match_accuracy"].get<double>(), 1.0);
  EXPECT_EQ(ds.manifest["oracle"]["zero_shot_bayes_accuracy"].get<double>(), 0.5);

  retrieval::ExemplarStore const store(ds.train, retrieval::Mode::Cosine);
  std::size_t                    hits = 0;
  for (auto const &e : ds.test)
  {
    hits += store.at(store.top_k(e.question, 1).indices[0]).doc == e.doc ? 1 : 0;
  }
  double const hit = static_cast<double>(hits) / static_cast<double>(ds.test.size());
  EXPECT_GE(hit, 0.9);
  EXPECT_EQ(hit, ds.manifest["hit_rate"]["test_top1_gold_doc"].get<double>());

  // No held-out fact is paraphrased into train with a different answer.
  std::map<std::string, std::string> doc_answer;
  for (auto const &e : ds.train)
  {
    doc_answer[*e.doc] = e.answer;
  }
  for (auto const &e : ds.test)
  {
    auto it = doc_answer.find(*e.doc);
    ASSERT_NE(it, doc_answer.end());
    EXPECT_EQ(it->second, e.answer);
  }
}

TEST(DocQa, Errors)
{
  DocQaSpec spec;
  spec.entities = 2;
  EXPECT_THROW((void)gen_doc_qa(spec), ConfigError);
  EXPECT_EQ(doc_oracle("zorb is_red = yes"), "Yes");
  EXPECT_EQ(doc_oracle("a = b = no"), "No");
  EXPECT_EQ(doc_oracle("nothing here"), std::nullopt);
}

TEST(Probe, MajorityStructure)
{
  ProbeSpec spec;
  spec.seed = 2;
  auto const probe = gen_order_sensitive_probe(spec);
  ASSERT_EQ(probe.queries.size(), 16u);
  ASSERT_EQ(probe.store.size(), 16u * 5u);
  for (std::size_t i = 0; i < probe.queries.size(); ++i)
  {
    auto const &q = probe.queries[i];
    EXPECT_EQ(q.answer, i % 2 == 0 ? kYes : kNo);
    std::size_t agree = 0;
    for (std::size_t j = 0; j < 5; ++j)
    {
      agree += probe.store[i * 5 + j].answer == q.answer ? 1 : 0;
      EXPECT_EQ(probe.store[i * 5 + j].question.size(), 24u);
    }
    EXPECT_EQ(agree, 3u);
  }
  EXPECT_GT(probe.manifest["own_neighbour_fraction"].get<double>(), 0.9);
}

TEST(Probe, JointEmbeddingDependsOnOrder)
{
  auto const probe = gen_order_sensitive_probe(ProbeSpec{});
  for (std::size_t i = 0; i < probe.queries.size(); ++i)
  {
    std::vector<std::string> parts;
    for (std::size_t j = 0; j < 5; ++j)
    {
      parts.push_back(probe.store[i * 5 + j].question);
    }
    auto const a = embedding::embed_ngram(embedding::join(parts));
    std::reverse(parts.begin(), parts.end());
    auto const b = embedding::embed_ngram(embedding::join(parts));
    double     diff = 0.0;
    for (std::size_t k = 0; k < a.dim(); ++k)
    {
      diff = std::max(diff, std::abs(a.values()[k] - b.values()[k]));
    }
    EXPECT_GT(diff, 1e-6);
  }
}

TEST(Probe, Validation)
{
  for (ProbeSpec bad : {ProbeSpec{21, 5, 24, 0}, ProbeSpec{1, 5, 24, 0}, ProbeSpec{4, 1, 24, 0}, ProbeSpec{4, 5, 3, 0}})
  {
    EXPECT_THROW((void)gen_order_sensitive_probe(bad), ConfigError);
  }
}

TEST(Probe, FinderCountsAttempts)
{
  ProbeSpec spec;
  spec.seed = 100;
  int  calls = 0;
  auto found = find_order_sensitive_probe(spec, [&](Probe const &) { return ++calls == 3; });
  EXPECT_EQ(found.manifest["attempts"].get<std::size_t>(), 3u);
  EXPECT_EQ(found.manifest["seed"].get<std::uint64_t>(), 102u);
  EXPECT_THROW((void)find_order_sensitive_probe(spec, [](Probe const &) { return false; }, 4), ConfigError);
}

TEST(Corpus, ContextNeverLeaksTheQuery)
{
  auto const ds = mharag::testing::small_cluster(5);
  auto const corpus = build_pretraining_corpus(ds.train, retrieval::Mode::Tanimoto, {300, 4, 1});
  ASSERT_EQ(corpus.size(), 300u);
  std::map<std::string, int> copies;
  for (auto const &e : ds.train)
  {
    ++copies[e.question];
  }
  bool        saw_flip = false;
  std::size_t checked  = 0;
  for (auto const &in : corpus)
  {
    EXPECT_LE(in.context.size(), 4u);
    ASSERT_TRUE(in.answer.has_value());
    EXPECT_TRUE(*in.answer == kYes || *in.answer == kNo);
    auto const q = std::find_if(ds.train.begin(), ds.train.end(),
                                [&](Exemplar const &e) { return e.question == in.question; });
    ASSERT_NE(q, ds.train.end());
    if (copies[in.question] != 1)
    {
      continue;  // query id not recoverable from the text
    }
    ++checked;
    saw_flip |= *in.answer != q->answer;
    for (auto const &c : in.context)
    {
      EXPECT_NE(c.id, q->id);
      // Relabelling is one permutation per episode, applied to query and context alike.
      auto const orig = std::find_if(ds.train.begin(), ds.train.end(), [&](Exemplar const &e) { return e.id == c.id; });
      EXPECT_EQ(orig->answer == q->answer, c.answer == *in.answer);
    }
  }
  EXPECT_GT(checked, 100u);
  EXPECT_TRUE(saw_flip);
  EXPECT_THROW((void)build_pretraining_corpus(std::span(ds.train.data(), 1), retrieval::Mode::Tanimoto, {}),
               ConfigError);
}

TEST(Dataset, WriteReadRoundTrip)
{
  TempDir    dir;
  auto const ds = mharag::testing::small_cluster(6);
  write_dataset(ds, dir.path());
  auto const back = read_dataset(dir.path());
  EXPECT_EQ(back.train, ds.train);
  EXPECT_EQ(back.dev, ds.dev);
  EXPECT_EQ(back.test, ds.test);
  EXPECT_EQ(back.kind, ds.kind);
  EXPECT_EQ(back.mode, ds.mode);
  EXPECT_EQ(manifest_hash(back.manifest), manifest_hash(read_dataset(dir.path()).manifest));

  TempDir empty;
  EXPECT_THROW((void)read_dataset(empty.path()), IoError);
}

}  // namespace
