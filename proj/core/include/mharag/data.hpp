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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mharag/exemplar.hpp"
#include "mharag/retrieval.hpp"
#include "mharag/toy_lm.hpp"

namespace mharag::data {

using Dataset = std::vector<Exemplar>;

/// One object per line: {"id", "question", "answer", "doc"?}. Throws
/// SchemaError naming the line on malformed input and both lines on a
/// duplicate id. An empty file is a valid, empty dataset (logged as a warning).
Dataset load_jsonl(std::filesystem::path const &path);
void    save_jsonl(std::span<Exemplar const> items, std::filesystem::path const &path);

/// Throws SchemaError on a duplicate id or an empty answer.
void validate(std::span<Exemplar const> items, std::string const &what);

enum class TaskKind
{
  BinaryClassification,
  Qa,
};

std::string_view to_string(TaskKind kind);

/// A generated or loaded task: three id-disjoint splits plus the provenance
/// manifest written next to them.
struct SplitDataset
{
  TaskKind        kind = TaskKind::BinaryClassification;
  retrieval::Mode mode = retrieval::Mode::Tanimoto;
  Dataset         train;
  Dataset         dev;
  Dataset         test;
  nlohmann::json  manifest = nlohmann::json::object();
};

/// Layout: <dir>/{train,dev,test}.jsonl and <dir>/manifest.json.
void         write_dataset(SplitDataset const &ds, std::filesystem::path const &dir);
SplitDataset read_dataset(std::filesystem::path const &dir);

/// Hex FNV-1a of the canonical manifest dump.
std::string manifest_hash(nlohmann::json const &manifest);

inline constexpr char const *kMoleculeAlphabet = "CNOSPFclnos()=#123456789";
inline constexpr char const *kYes              = "Yes";
inline constexpr char const *kNo               = "No";

struct ClusterSpec
{
  std::size_t   clusters      = 40;
  std::size_t   center_length = 20;
  double        edit_rate     = 0.08;
  std::size_t   train         = 1500;
  std::size_t   dev           = 150;
  std::size_t   test          = 100;
  std::uint64_t seed          = 0;
  std::string   alphabet      = kMoleculeAlphabet;
  std::size_t   oracle_k      = 5;
  double        min_oracle    = 0.95;
  double        balance_tol   = 0.10;
  std::size_t   max_retries   = 20;
  std::size_t   fingerprint_bits = embedding::kDefaultFingerprintBits;
};

/// Binary classification over cluster members. Each cluster has a label and
/// its members are the center with character edits at `edit_rate`, so
/// Tanimoto neighbours share labels. Resamples until the 5-NN majority oracle
/// reaches `min_oracle` on test and every split is balanced within
/// `balance_tol`; throws ConfigError after `max_retries`.
SplitDataset gen_cluster_classification(ClusterSpec const &spec);

struct DocQaSpec
{
  std::size_t   entities    = 60;
  std::size_t   dev_facts   = 100;
  std::size_t   test_facts  = 100;
  std::uint64_t seed        = 0;
  double        min_hit_rate = 0.90;
  std::size_t   max_retries = 10;
  std::size_t   embed_dim   = embedding::kDefaultEmbeddingDim;
};

/// Yes/no questions about random entity properties. Every fact gets a
/// document "{entity} {property} = yes|no" and three question phrasings; the
/// dev/test phrasing of a held-out fact is asked while its other two phrasings
/// stay in train, so only retrieval can supply the answer. Records the cosine
/// top-1 hit-rate and the gold-document matching oracle in the manifest.
SplitDataset gen_doc_qa(DocQaSpec const &spec);

/// Answers a doc-QA question from a "{entity} {property} = yes|no" document.
std::optional<std::string> doc_oracle(std::string const &doc);

struct ProbeSpec
{
  std::size_t   items       = 16;
  std::size_t   neighbours  = 5;
  std::size_t   length      = 24;
  std::uint64_t seed        = 0;
};

/// Queries plus a store where each query's top-5 neighbours are near
/// duplicates carrying conflicting labels.
struct Probe
{
  Dataset        queries;
  Dataset        store;
  nlohmann::json manifest = nlohmann::json::object();
};

Probe gen_order_sensitive_probe(ProbeSpec const &spec);

/// Returns true when the candidate probe shows order variance for every
/// method that must exhibit it.
using ProbeCheck = std::function<bool(Probe const &)>;

/// Regenerates with successive seeds until `check` accepts; throws ConfigError
/// after `max_attempts`. The attempt count is recorded in the manifest.
Probe find_order_sensitive_probe(ProbeSpec spec, ProbeCheck const &check, std::size_t max_attempts = 20);

struct CorpusSpec
{
  std::size_t   episodes    = 4000;
  std::size_t   max_context = 4;
  std::uint64_t seed        = 0;
};

/// In-context pretraining episodes drawn from `pool`: a query with 0..max_context
/// retrieved neighbours rendered as text. Each episode permutes the answer
/// vocabulary at random (applied to context and target alike), so the corpus
/// teaches copying from context without leaking any true label.
std::vector<lm::PromptedInput> build_pretraining_corpus(std::span<Exemplar const> pool, retrieval::Mode mode,
                                                        CorpusSpec const &spec);

}  // namespace mharag::data
