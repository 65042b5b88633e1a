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

#include "mharag/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "mharag/embedding.hpp"
#include "mharag/error.hpp"

namespace mharag::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string padded(std::string const &prefix, std::size_t i, int width = 5)
{
  std::string n = std::to_string(i);
  return prefix + std::string(n.size() < static_cast<std::size_t>(width) ? width - n.size() : 0, '0') + n;
}

json exemplar_json(Exemplar const &e)
{
  json j = {{"id", e.id}, {"question", e.question}, {"answer", e.answer}};
  if (e.doc)
  {
    j["doc"] = *e.doc;
  }
  return j;
}

double yes_fraction(Dataset const &items)
{
  if (items.empty())
  {
    return 0.5;
  }
  auto const yes = std::count_if(items.begin(), items.end(), [](Exemplar const &e) { return e.answer == kYes; });
  return static_cast<double>(yes) / static_cast<double>(items.size());
}

json balance_json(SplitDataset const &ds)
{
  return {{"train_yes_fraction", yes_fraction(ds.train)},
          {"dev_yes_fraction", yes_fraction(ds.dev)},
          {"test_yes_fraction", yes_fraction(ds.test)}};
}

std::string random_string(std::mt19937_64 &rng, std::string const &alphabet, std::size_t length)
{
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string                                out(length, ' ');
  for (char &c : out)
  {
    c = alphabet[pick(rng)];
  }
  return out;
}

std::string mutate(std::string const &center, double rate, std::string const &alphabet, std::mt19937_64 &rng)
{
  if (rate <= 0.0)
  {
    return center;
  }
  std::bernoulli_distribution                edit(rate);
  std::uniform_int_distribution<int>         op(0, 2);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string                                out;
  for (char c : center)
  {
    if (!edit(rng))
    {
      out.push_back(c);
      continue;
    }
    switch (op(rng))
    {
    case 0:
      out.push_back(alphabet[pick(rng)]);
      break;
    case 1:
      out.push_back(c);
      out.push_back(alphabet[pick(rng)]);
      break;
    default:
      break;
    }
  }
  return out.empty() ? center : out;
}

/// Majority vote over the k most Tanimoto-similar train items; ties in the
/// vote go to the nearest neighbour's label.
double knn_oracle(Dataset const &train, std::vector<embedding::Fingerprint> const &train_fp, Dataset const &eval,
                  std::size_t k, std::size_t bits)
{
  if (eval.empty())
  {
    return 1.0;
  }
  std::size_t correct = 0;
  for (Exemplar const &e : eval)
  {
    auto const          fp = embedding::fingerprint(e.question, bits);
    std::vector<double> s(train.size());
    for (std::size_t i = 0; i < train.size(); ++i)
    {
      s[i] = retrieval::tanimoto(fp, train_fp[i]);
    }
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t const kk = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                      [&](std::size_t a, std::size_t b) { return s[a] != s[b] ? s[a] > s[b] : a < b; });
    std::map<std::string, std::size_t> votes;
    for (std::size_t j = 0; j < kk; ++j)
    {
      ++votes[train[order[j]].answer];
    }
    std::string best       = train[order[0]].answer;
    std::size_t best_votes = votes[best];
    for (auto const &[label, n] : votes)
    {
      if (n > best_votes)
      {
        best       = label;
        best_votes = n;
      }
    }
    correct += best == e.answer ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(eval.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// JSONL

void validate(std::span<Exemplar const> items, std::string const &what)
{
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < items.size(); ++i)
  {
    auto const [it, inserted] = seen.emplace(items[i].id, i);
    if (!inserted)
    {
      throw SchemaError(what + ": duplicate id '" + items[i].id + "' at entries " + std::to_string(it->second + 1) +
                        " and " + std::to_string(i + 1));
    }
    if (items[i].answer.empty())
    {
      throw SchemaError(what + ": entry " + std::to_string(i + 1) + " ('" + items[i].id + "') has an empty answer");
    }
  }
}

Dataset load_jsonl(fs::path const &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw IoError("cannot open dataset file " + path.string());
  }
  Dataset                                      out;
  std::unordered_map<std::string, std::size_t> line_of;
  std::string                                  line;
  std::size_t                                  lineno = 0;
  while (std::getline(in, line))
  {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
    {
      continue;
    }
    auto const where = path.string() + ":" + std::to_string(lineno);
    json       j;
    try
    {
      j = json::parse(line);
    }
    catch (json::parse_error const &e)
    {
      throw SchemaError(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object())
    {
      throw SchemaError(where + ": expected an object");
    }
    for (char const *field : {"id", "question", "answer"})
    {
      if (!j.contains(field) || !j[field].is_string())
      {
        throw SchemaError(where + ": missing string field \"" + field + "\"");
      }
    }
    Exemplar e{j["id"].get<std::string>(), j["question"].get<std::string>(), j["answer"].get<std::string>(), {}};
    if (j.contains("doc") && !j["doc"].is_null())
    {
      if (!j["doc"].is_string())
      {
        throw SchemaError(where + ": \"doc\" must be a string");
      }
      e.doc = j["doc"].get<std::string>();
    }
    if (e.answer.empty())
    {
      throw SchemaError(where + ": empty answer");
    }
    auto const [it, inserted] = line_of.emplace(e.id, lineno);
    if (!inserted)
    {
      throw SchemaError(path.string() + ": duplicate id '" + e.id + "' on lines " + std::to_string(it->second) +
                        " and " + std::to_string(lineno));
    }
    out.push_back(std::move(e));
  }
  if (out.empty())
  {
    spdlog::warn("dataset file {} is empty", path.string());
  }
  return out;
}

void save_jsonl(std::span<Exemplar const> items, fs::path const &path)
{
  if (path.has_parent_path())
  {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
  {
    throw IoError("cannot write dataset file " + path.string());
  }
  for (Exemplar const &e : items)
  {
    out << exemplar_json(e).dump() << '\n';
  }
}

std::string_view to_string(TaskKind kind)
{
  return kind == TaskKind::Qa ? "qa" : "binary-classification";
}

void write_dataset(SplitDataset const &ds, fs::path const &dir)
{
  fs::create_directories(dir);
  save_jsonl(ds.train, dir / "train.jsonl");
  save_jsonl(ds.dev, dir / "dev.jsonl");
  save_jsonl(ds.test, dir / "test.jsonl");
  json manifest          = ds.manifest;
  manifest["kind"]       = to_string(ds.kind);
  manifest["retrieval"]  = retrieval::to_string(ds.mode);
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out)
  {
    throw IoError("cannot write manifest in " + dir.string());
  }
}

SplitDataset read_dataset(fs::path const &dir)
{
  auto const manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path))
  {
    throw IoError("dataset directory " + dir.string() + " has no manifest.json (run `mharag gen` first)");
  }
  SplitDataset  ds;
  std::ifstream in(manifest_path);
  try
  {
    ds.manifest = json::parse(in);
  }
  catch (json::parse_error const &e)
  {
    throw SchemaError(manifest_path.string() + ": " + e.what());
  }
  ds.kind  = ds.manifest.value("kind", "binary-classification") == "qa" ? TaskKind::Qa : TaskKind::BinaryClassification;
  ds.mode  = retrieval::parse_mode(ds.manifest.value("retrieval", "tanimoto"));
  ds.train = load_jsonl(dir / "train.jsonl");
  ds.test  = load_jsonl(dir / "test.jsonl");
  if (fs::exists(dir / "dev.jsonl"))
  {
    ds.dev = load_jsonl(dir / "dev.jsonl");
  }
  else
  {
    // Seed-stable 10% of train, chosen by id hash so it does not depend on file order.
    Dataset keep;
    for (Exemplar &e : ds.train)
    {
      (embedding::fnv1a(e.id) % 10 == 0 ? ds.dev : keep).push_back(std::move(e));
    }
    ds.train = std::move(keep);
  }
  std::vector<Exemplar> all;
  for (auto const *split : {&ds.train, &ds.dev, &ds.test})
  {
    all.insert(all.end(), split->begin(), split->end());
  }
  validate(all, dir.string() + " (splits must be id-disjoint)");
  return ds;
}

std::string manifest_hash(json const &manifest)
{
  return embedding::to_hex(embedding::fnv1a(manifest.dump()));
}

// ---------------------------------------------------------------------------
// Cluster classification

SplitDataset gen_cluster_classification(ClusterSpec const &spec)
{
  if (spec.clusters < 2 || spec.center_length == 0 || spec.alphabet.size() < 2 || spec.train == 0 ||
      spec.test == 0)
  {
    throw ConfigError("cluster generator needs >= 2 clusters, a non-empty alphabet and non-empty splits");
  }
  if (spec.edit_rate < 0.0 || spec.edit_rate >= 1.0)
  {
    throw ConfigError("edit rate must lie in [0, 1)");
  }
  std::mt19937_64 rng(spec.seed);
  double          best_oracle = 0.0;
  for (std::size_t attempt = 0; attempt < spec.max_retries; ++attempt)
  {
    std::vector<std::string> centers;
    std::set<std::string>    unique;
    while (centers.size() < spec.clusters)
    {
      auto c = random_string(rng, spec.alphabet, spec.center_length);
      if (unique.insert(c).second)
      {
        centers.push_back(std::move(c));
      }
    }
    std::vector<std::string> labels(spec.clusters, kNo);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(spec.clusters / 2), kYes);
    std::shuffle(labels.begin(), labels.end(), rng);

    std::uniform_int_distribution<std::size_t> cluster(0, spec.clusters - 1);
    SplitDataset                               ds;
    ds.kind = TaskKind::BinaryClassification;
    ds.mode = retrieval::Mode::Tanimoto;
    std::vector<std::size_t> test_cluster;
    auto const fill = [&](Dataset &split, std::size_t n, std::string const &prefix, std::vector<std::size_t> *ids) {
      for (std::size_t i = 0; i < n; ++i)
      {
        std::size_t const c = cluster(rng);
        split.push_back({padded(prefix, i), mutate(centers[c], spec.edit_rate, spec.alphabet, rng), labels[c], {}});
        if (ids != nullptr)
        {
          ids->push_back(c);
        }
      }
    };
    std::vector<std::size_t> train_cluster;
    fill(ds.train, spec.train, "train-", &train_cluster);
    fill(ds.dev, spec.dev, "dev-", nullptr);
    fill(ds.test, spec.test, "test-", &test_cluster);

    auto const balanced = [&](Dataset const &d) {
      return d.empty() || std::abs(yes_fraction(d) - 0.5) <= spec.balance_tol;
    };
    if (!balanced(ds.train) || !balanced(ds.dev) || !balanced(ds.test))
    {
      continue;
    }

    std::vector<embedding::Fingerprint> train_fp;
    train_fp.reserve(ds.train.size());
    for (Exemplar const &e : ds.train)
    {
      train_fp.push_back(embedding::fingerprint(e.question, spec.fingerprint_bits));
    }
    double const test_oracle = knn_oracle(ds.train, train_fp, ds.test, spec.oracle_k, spec.fingerprint_bits);
    best_oracle              = std::max(best_oracle, test_oracle);
    if (test_oracle < spec.min_oracle)
    {
      continue;
    }
    double const dev_oracle = knn_oracle(ds.train, train_fp, ds.dev, spec.oracle_k, spec.fingerprint_bits);

    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.test.size(); ++i)
    {
      auto const          fp = embedding::fingerprint(ds.test[i].question, spec.fingerprint_bits);
      std::size_t         best = 0;
      double              best_s = -1.0;
      for (std::size_t j = 0; j < ds.train.size(); ++j)
      {
        double const s = retrieval::tanimoto(fp, train_fp[j]);
        if (s > best_s)
        {
          best_s = s;
          best   = j;
        }
      }
      hits += train_cluster[best] == test_cluster[i] ? 1 : 0;
    }

    ds.manifest = {
      {"generator", "cluster_classification"},
      {"seed", spec.seed},
      {"attempt", attempt},
      {"spec",
       {{"clusters", spec.clusters},
        {"center_length", spec.center_length},
        {"edit_rate", spec.edit_rate},
        {"alphabet", spec.alphabet},
        {"train", spec.train},
        {"dev", spec.dev},
        {"test", spec.test},
        {"fingerprint_bits", spec.fingerprint_bits}}},
      {"oracle",
       {{"k", spec.oracle_k},
        {"test_knn_accuracy", test_oracle},
        {"dev_knn_accuracy", dev_oracle},
        {"required", spec.min_oracle}}},
      {"hit_rate", {{"test_top1_same_cluster", static_cast<double>(hits) / static_cast<double>(ds.test.size())}}},
      {"balance", balance_json(ds)},
    };
    return ds;
  }
  throw ConfigError("cluster generator could not reach the kNN oracle bound " + std::to_string(spec.min_oracle) +
                    " with balanced labels after " + std::to_string(spec.max_retries) +
                    " attempts (best oracle " + std::to_string(best_oracle) +
                    "); lower the edit rate or use more clusters with longer centers");
}

// ---------------------------------------------------------------------------
// Doc QA

namespace {

constexpr std::array<char const *, 8> kProperties = {"toxic", "stable", "soluble", "magnetic",
                                                     "heavy", "ancient", "edible", "frozen"};

std::string entity_name(std::mt19937_64 &rng)
{
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels     = "aeiou";
  std::uniform_int_distribution<std::size_t> c(0, consonants.size() - 1);
  std::uniform_int_distribution<std::size_t> v(0, vowels.size() - 1);
  std::string                                out;
  for (int s = 0; s < 3; ++s)
  {
    out.push_back(consonants[c(rng)]);
    out.push_back(vowels[v(rng)]);
  }
  out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

std::string phrase(std::size_t variant, std::string const &e, std::string const &p)
{
  switch (variant)
  {
  case 0:
    return "Is " + e + " " + p + "?";
  case 1:
    return e + " " + p + "?";
  default:
    return "Is " + e + " really " + p + "?";
  }
}

}  // namespace

std::optional<std::string> doc_oracle(std::string const &doc)
{
  auto const eq = doc.rfind(" = ");
  if (eq == std::string::npos)
  {
    return std::nullopt;
  }
  auto const value = doc.substr(eq + 3);
  if (value == "yes")
  {
    return std::string(kYes);
  }
  if (value == "no")
  {
    return std::string(kNo);
  }
  return std::nullopt;
}

SplitDataset gen_doc_qa(DocQaSpec const &spec)
{
  std::size_t const facts_total = spec.entities * kProperties.size();
  if (spec.entities == 0 || spec.dev_facts + spec.test_facts >= facts_total)
  {
    throw ConfigError("doc-QA generator needs more facts than the " +
                      std::to_string(spec.dev_facts + spec.test_facts) + " held out");
  }
  std::mt19937_64 rng(spec.seed);
  double          best_hit = 0.0;
  for (std::size_t attempt = 0; attempt < spec.max_retries; ++attempt)
  {
    std::set<std::string>    used;
    std::vector<std::string> names;
    while (names.size() < spec.entities)
    {
      auto n = entity_name(rng);
      if (used.insert(n).second)
      {
        names.push_back(std::move(n));
      }
    }
    struct Fact
    {
      std::string entity, property, answer, doc;
    };
    std::vector<Fact>           facts;
    std::bernoulli_distribution coin(0.5);
    for (auto const &e : names)
    {
      for (char const *p : kProperties)
      {
        bool const yes = coin(rng);
        facts.push_back({e, p, yes ? kYes : kNo, e + " " + p + " = " + (yes ? "yes" : "no")});
      }
    }
    std::shuffle(facts.begin(), facts.end(), rng);

    SplitDataset ds;
    ds.kind = TaskKind::Qa;
    ds.mode = retrieval::Mode::Cosine;
    for (std::size_t f = 0; f < facts.size(); ++f)
    {
      Fact const &fact     = facts[f];
      bool const  is_test  = f < spec.test_facts;
      bool const  is_dev   = !is_test && f < spec.test_facts + spec.dev_facts;
      for (std::size_t v = 0; v < 3; ++v)
      {
        Exemplar e{"", phrase(v, fact.entity, fact.property), fact.answer, fact.doc};
        if (v == 0 && is_test)
        {
          e.id = padded("test-", ds.test.size());
          ds.test.push_back(std::move(e));
        }
        else if (v == 0 && is_dev)
        {
          e.id = padded("dev-", ds.dev.size());
          ds.dev.push_back(std::move(e));
        }
        else
        {
          e.id = padded("train-", ds.train.size());
          ds.train.push_back(std::move(e));
        }
      }
    }

    retrieval::ExemplarStore store(ds.train, retrieval::Mode::Cosine, {spec.embed_dim, 0});
    auto const hit_rate = [&](Dataset const &split) {
      std::size_t hits = 0;
      for (Exemplar const &e : split)
      {
        auto const r = store.top_k(e.question, 1);
        hits += store.at(r.indices[0]).doc == e.doc ? 1 : 0;
      }
      return split.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(split.size());
    };
    double const test_hit = hit_rate(ds.test);
    best_hit              = std::max(best_hit, test_hit);
    if (test_hit < spec.min_hit_rate)
    {
      continue;
    }
    std::size_t oracle_correct = 0;
    for (Exemplar const &e : ds.test)
    {
      oracle_correct += doc_oracle(*e.doc) == e.answer ? 1 : 0;
    }
    ds.manifest = {
      {"generator", "doc_qa"},
      {"seed", spec.seed},
      {"attempt", attempt},
      {"spec",
       {{"entities", spec.entities},
        {"properties", kProperties.size()},
        {"dev_facts", spec.dev_facts},
        {"test_facts", spec.test_facts},
        {"embed_dim", spec.embed_dim}}},
      {"oracle",
       {{"gold_doc_match_accuracy", static_cast<double>(oracle_correct) / static_cast<double>(ds.test.size())},
        {"zero_shot_bayes_accuracy", 0.5}}},
      {"hit_rate",
       {{"test_top1_gold_doc", test_hit}, {"dev_top1_gold_doc", hit_rate(ds.dev)}, {"required", spec.min_hit_rate}}},
      {"balance", balance_json(ds)},
    };
    return ds;
  }
  throw ConfigError("doc-QA generator could not reach cosine top-1 hit-rate " + std::to_string(spec.min_hit_rate) +
                    " after " + std::to_string(spec.max_retries) + " attempts (best " + std::to_string(best_hit) +
                    "); raise embed_dim");
}

// ---------------------------------------------------------------------------
// Order-sensitive probe

Probe gen_order_sensitive_probe(ProbeSpec const &spec)
{
  if (spec.items < 2 || spec.items > 20 || spec.neighbours < 2 || spec.length < 4)
  {
    throw ConfigError("probe needs 2..20 items, >= 2 neighbours and length >= 4");
  }
  std::string const                          alphabet = kMoleculeAlphabet;
  std::mt19937_64                            rng(spec.seed);
  std::uniform_int_distribution<std::size_t> pos(0, spec.length - 1);
  std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
  auto const one_edit = [&](std::string s) {
    std::size_t const p = pos(rng);
    char              c = s[p];
    while (c == s[p])
    {
      c = alphabet[ch(rng)];
    }
    s[p] = c;
    return s;
  };

  Probe probe;
  for (std::size_t i = 0; i < spec.items; ++i)
  {
    std::string const base = random_string(rng, alphabet, spec.length);
    std::string const gold = i % 2 == 0 ? kYes : kNo;
    std::string const other = i % 2 == 0 ? kNo : kYes;
    // Majority for the gold label by one vote; the minority sits at random slots.
    std::vector<std::string> labels(spec.neighbours, gold);
    std::vector<std::size_t> slots(spec.neighbours);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    std::shuffle(slots.begin(), slots.end(), rng);
    for (std::size_t j = 0; j < spec.neighbours / 2; ++j)
    {
      labels[slots[j]] = other;
    }
    probe.queries.push_back({padded("probe-q-", i, 2), one_edit(base), gold, {}});
    for (std::size_t j = 0; j < spec.neighbours; ++j)
    {
      probe.store.push_back({padded("probe-s-", i, 2) + "-" + std::to_string(j), one_edit(base), labels[j], {}});
    }
  }

  retrieval::ExemplarStore store(probe.store, retrieval::Mode::Tanimoto);
  std::size_t              own = 0;
  for (std::size_t i = 0; i < probe.queries.size(); ++i)
  {
    auto const  r      = store.top_k(probe.queries[i].question, spec.neighbours);
    std::string prefix = padded("probe-s-", i, 2) + "-";
    for (auto const &id : r.ids)
    {
      own += id.rfind(prefix, 0) == 0 ? 1 : 0;
    }
  }
  probe.manifest = {
    {"generator", "order_sensitive_probe"},
    {"seed", spec.seed},
    {"items", spec.items},
    {"neighbours", spec.neighbours},
    {"length", spec.length},
    {"own_neighbour_fraction",
     static_cast<double>(own) / static_cast<double>(spec.items * spec.neighbours)},
  };
  return probe;
}

Probe find_order_sensitive_probe(ProbeSpec spec, ProbeCheck const &check, std::size_t max_attempts)
{
  std::uint64_t const base = spec.seed;
  for (std::size_t a = 0; a < max_attempts; ++a)
  {
    spec.seed   = base + a;
    Probe probe = gen_order_sensitive_probe(spec);
    if (check(probe))
    {
      probe.manifest["attempts"] = a + 1;
      return probe;
    }
  }
  throw ConfigError("no order-sensitive probe found in " + std::to_string(max_attempts) +
                    " attempts; the model appears order-robust on this construction");
}

// ---------------------------------------------------------------------------
// Pretraining corpus

std::vector<lm::PromptedInput> build_pretraining_corpus(std::span<Exemplar const> pool, retrieval::Mode mode,
                                                        CorpusSpec const &spec)
{
  if (pool.size() < 2)
  {
    throw ConfigError("pretraining corpus needs at least two pool items");
  }
  retrieval::ExemplarStore store(std::vector<Exemplar>(pool.begin(), pool.end()), mode);

  std::set<std::string> answer_set;
  for (Exemplar const &e : pool)
  {
    answer_set.insert(e.answer);
  }
  std::vector<std::string> answers(answer_set.begin(), answer_set.end());
  bool const               relabel = answers.size() <= 16;

  std::mt19937_64                            rng(spec.seed);
  std::uniform_int_distribution<std::size_t> pick(0, store.size() - 1);
  std::uniform_int_distribution<std::size_t> ctx(0, spec.max_context);
  std::vector<lm::PromptedInput>             out;
  out.reserve(spec.episodes);
  for (std::size_t ep = 0; ep < spec.episodes; ++ep)
  {
    Exemplar const &q = store.at(pick(rng));
    std::size_t     c = std::min(ctx(rng), store.size() - 1);

    std::map<std::string, std::string> mapping;
    if (relabel)
    {
      std::vector<std::string> perm = answers;
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < answers.size(); ++i)
      {
        mapping[answers[i]] = perm[i];
      }
    }
    auto const map_answer = [&](std::string const &a) { return relabel ? mapping.at(a) : a; };

    lm::PromptedInput in;
    in.question = q.question;
    in.answer   = map_answer(q.answer);
    if (c > 0)
    {
      auto const r = store.top_k(q.question, c, {q.id});
      for (std::size_t idx : r.indices)
      {
        Exemplar e = store.at(idx);
        e.answer   = map_answer(e.answer);
        in.context.push_back(std::move(e));
      }
    }
    out.push_back(std::move(in));
  }
  return out;
}

}  // namespace mharag::data
