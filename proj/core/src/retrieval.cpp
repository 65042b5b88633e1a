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

#include "mharag/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "mharag/error.hpp"

namespace mharag::retrieval {

using nlohmann::json;

std::string_view to_string(Mode mode)
{
  return mode == Mode::Tanimoto ? "tanimoto" : "cosine";
}

Mode parse_mode(std::string_view text)
{
  if (text == "tanimoto")
  {
    return Mode::Tanimoto;
  }
  if (text == "cosine")
  {
    return Mode::Cosine;
  }
  throw ConfigError("unknown retrieval mode '" + std::string(text) + "'");
}

double tanimoto(embedding::Fingerprint const &a, embedding::Fingerprint const &b)
{
  if (a.width() != b.width())
  {
    throw ConfigError("fingerprint width mismatch: " + std::to_string(a.width()) + " vs " +
                      std::to_string(b.width()));
  }
  std::size_t inter = 0;
  std::size_t uni   = 0;
  auto const  wa    = a.words();
  auto const  wb    = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i)
  {
    inter += static_cast<std::size_t>(std::popcount(wa[i] & wb[i]));
    uni += static_cast<std::size_t>(std::popcount(wa[i] | wb[i]));
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ExemplarStore::ExemplarStore(std::vector<data::Exemplar> exemplars, Mode mode,
                             embedding::NgramEmbedder embedder, std::size_t fingerprint_bits)
  : mode_(mode)
  , embedder_(embedder)
  , fingerprint_bits_(fingerprint_bits)
  , exemplars_(std::move(exemplars))
{
  std::sort(exemplars_.begin(), exemplars_.end(),
            [](data::Exemplar const &a, data::Exemplar const &b) { return a.id < b.id; });
  build_lookup();
  dense_.reserve(exemplars_.size());
  fingerprints_.reserve(exemplars_.size());
  for (auto const &e : exemplars_)
  {
    dense_.push_back(embedder_(embedding::join({e.question, e.answer})));
    fingerprints_.push_back(embedding::fingerprint(e.question, fingerprint_bits_));
  }
}

void ExemplarStore::build_lookup()
{
  lookup_.clear();
  for (std::size_t i = 0; i < exemplars_.size(); ++i)
  {
    if (!lookup_.emplace(exemplars_[i].id, i).second)
    {
      throw SchemaError("duplicate exemplar id '" + exemplars_[i].id + "' in store");
    }
  }
}

std::size_t ExemplarStore::index_of(std::string const &id) const
{
  auto it = lookup_.find(id);
  return it == lookup_.end() ? exemplars_.size() : it->second;
}

std::vector<double> ExemplarStore::scores(std::string_view question) const
{
  std::vector<double> out(exemplars_.size());
  if (mode_ == Mode::Tanimoto)
  {
    auto const q = embedding::fingerprint(question, fingerprint_bits_);
    for (std::size_t i = 0; i < out.size(); ++i)
    {
      out[i] = tanimoto(q, fingerprints_[i]);
    }
  }
  else
  {
    auto const q = embedder_(question);
    for (std::size_t i = 0; i < out.size(); ++i)
    {
      out[i] = embedding::dot(q, dense_[i]);
    }
  }
  return out;
}

RetrievalResult ExemplarStore::top_k(std::string_view question, std::size_t k, IdSet const &exclude) const
{
  if (k == 0)
  {
    throw ContractError("top_k needs K >= 1");
  }
  std::vector<double> const sim = scores(question);
  std::vector<std::size_t>  candidates;
  candidates.reserve(sim.size());
  for (std::size_t i = 0; i < sim.size(); ++i)
  {
    if (!exclude.contains(exemplars_[i].id))
    {
      candidates.push_back(i);
    }
  }
  if (candidates.empty())
  {
    throw EmptyResultError("no exemplars left to retrieve after exclusion");
  }
  // Store order is id order, so the index doubles as the id tie-break.
  auto const better = [&](std::size_t a, std::size_t b) {
    return sim[a] != sim[b] ? sim[a] > sim[b] : a < b;
  };
  std::size_t const take = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), better);
  RetrievalResult result;
  result.truncated = take < k;
  for (std::size_t j = 0; j < take; ++j)
  {
    std::size_t const i = candidates[j];
    result.ids.push_back(exemplars_[i].id);
    result.scores.push_back(sim[i]);
    result.indices.push_back(i);
  }
  return result;
}

void ExemplarStore::save_json(std::filesystem::path const &path) const
{
  json doc;
  doc["format"]           = 1;
  doc["mode"]             = to_string(mode_);
  doc["embedding_dim"]    = embedder_.dim;
  doc["embedding_seed"]   = embedder_.seed;
  doc["fingerprint_bits"] = fingerprint_bits_;
  json items              = json::array();
  for (std::size_t i = 0; i < exemplars_.size(); ++i)
  {
    auto const &e = exemplars_[i];
    json        item{{"id", e.id}, {"question", e.question}, {"answer", e.answer}};
    if (e.doc)
    {
      item["doc"] = *e.doc;
    }
    item["dense"] = std::vector<double>(dense_[i].values().begin(), dense_[i].values().end());
    item["fp"]    = fingerprints_[i].to_hex();
    items.push_back(std::move(item));
  }
  doc["exemplars"] = std::move(items);
  std::ofstream out(path);
  if (!out)
  {
    throw IoError("cannot write store to " + path.string());
  }
  out << doc.dump();
}

ExemplarStore ExemplarStore::load_json(std::filesystem::path const &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw IoError("cannot read store " + path.string());
  }
  json doc;
  try
  {
    doc = json::parse(in);
  }
  catch (json::exception const &e)
  {
    throw SchemaError("store " + path.string() + " is not valid JSON: " + e.what());
  }
  if (doc.value("format", 0) != 1)
  {
    throw SchemaError("store " + path.string() + " has unsupported format");
  }
  ExemplarStore store;
  store.mode_             = parse_mode(doc.at("mode").get<std::string>());
  store.embedder_.dim     = doc.at("embedding_dim").get<std::size_t>();
  store.embedder_.seed    = doc.at("embedding_seed").get<std::uint64_t>();
  store.fingerprint_bits_ = doc.at("fingerprint_bits").get<std::size_t>();
  for (auto const &item : doc.at("exemplars"))
  {
    data::Exemplar e{item.at("id").get<std::string>(), item.at("question").get<std::string>(),
                     item.at("answer").get<std::string>(), std::nullopt};
    if (item.contains("doc"))
    {
      e.doc = item.at("doc").get<std::string>();
    }
    auto values = item.at("dense").get<std::vector<double>>();
    if (values.size() != store.embedder_.dim)
    {
      throw SchemaError("stored embedding for '" + e.id + "' has wrong dimension");
    }
    store.dense_.push_back(embedding::DenseEmbedding::from_unit(std::move(values)));
    store.fingerprints_.push_back(
      embedding::Fingerprint::from_hex(item.at("fp").get<std::string>(), store.fingerprint_bits_));
    store.exemplars_.push_back(std::move(e));
  }
  if (!std::is_sorted(store.exemplars_.begin(), store.exemplars_.end(),
                      [](auto const &a, auto const &b) { return a.id < b.id; }))
  {
    throw SchemaError("store " + path.string() + " is not sorted by id");
  }
  store.build_lookup();
  return store;
}

}  // namespace mharag::retrieval
