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
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mharag/embedding.hpp"
#include "mharag/exemplar.hpp"

namespace mharag::retrieval {

enum class Mode
{
  Tanimoto,  // fingerprint of the question only
  Cosine,    // query question vs. embedding of question⊕answer
};

std::string_view to_string(Mode mode);
Mode             parse_mode(std::string_view text);

/// |A∩B| / |A∪B|, 0 when both are empty. Throws ConfigError on width mismatch.
double tanimoto(embedding::Fingerprint const &a, embedding::Fingerprint const &b);

struct RetrievalResult
{
  std::vector<std::string> ids;
  std::vector<double>      scores;   // non-increasing
  std::vector<std::size_t> indices;  // positions in ExemplarStore::exemplars()
  bool                     truncated = false;

  std::size_t size() const noexcept
  {
    return ids.size();
  }
};

using IdSet = std::unordered_set<std::string>;

/// Exact linear-scan index over a task database.
///
/// Exemplars are kept sorted by id, so results never depend on the order the
/// store was built in. Every exemplar carries a dense embedding of
/// question⊕answer and a fingerprint of the question; which one ranks is set
/// by `mode`.
class ExemplarStore
{
public:
  ExemplarStore(std::vector<data::Exemplar> exemplars, Mode mode, embedding::NgramEmbedder embedder = {},
                std::size_t fingerprint_bits = embedding::kDefaultFingerprintBits);

  Mode mode() const noexcept
  {
    return mode_;
  }
  std::size_t size() const noexcept
  {
    return exemplars_.size();
  }
  std::span<data::Exemplar const> exemplars() const noexcept
  {
    return exemplars_;
  }
  data::Exemplar const &at(std::size_t index) const
  {
    return exemplars_.at(index);
  }
  /// Position of `id`, or size() when absent.
  std::size_t index_of(std::string const &id) const;

  embedding::DenseEmbedding const &dense(std::size_t index) const
  {
    return dense_.at(index);
  }
  embedding::Fingerprint const &fingerprint(std::size_t index) const
  {
    return fingerprints_.at(index);
  }
  embedding::NgramEmbedder const &embedder() const noexcept
  {
    return embedder_;
  }
  std::size_t fingerprint_bits() const noexcept
  {
    return fingerprint_bits_;
  }

  /// Similarity of every stored exemplar to `question`, in store order.
  std::vector<double> scores(std::string_view question) const;

  /// The k most similar exemplars not in `exclude`, ties broken by ascending
  /// id. When fewer than k remain the result holds all of them and is flagged
  /// truncated. Throws ContractError for k == 0 and EmptyResultError when
  /// nothing survives the exclusion.
  RetrievalResult top_k(std::string_view question, std::size_t k, IdSet const &exclude = {}) const;

  void                 save_json(std::filesystem::path const &path) const;
  static ExemplarStore load_json(std::filesystem::path const &path);

private:
  ExemplarStore() = default;
  void build_lookup();

  Mode                                         mode_ = Mode::Tanimoto;
  embedding::NgramEmbedder                     embedder_;
  std::size_t                                  fingerprint_bits_ = embedding::kDefaultFingerprintBits;
  std::vector<data::Exemplar>                  exemplars_;
  std::vector<embedding::DenseEmbedding>       dense_;
  std::vector<embedding::Fingerprint>          fingerprints_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

}  // namespace mharag::retrieval
