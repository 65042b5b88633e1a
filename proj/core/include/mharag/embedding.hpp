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

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mharag::embedding {

/// Separator used to realize text concatenation (⊕). U+001F never occurs in
/// generated or ingested task text, so n-grams never straddle a join.
inline constexpr char kJoin = '\x1f';

/// Joins `parts` with kJoin.
std::string join(std::span<std::string const> parts);
std::string join(std::initializer_list<std::string_view> parts);

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime  = 0x100000001b3ULL;

/// 64-bit FNV-1a, continuing from `state`.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = kFnvOffset) noexcept
{
  for (char ch : bytes)
  {
    state ^= static_cast<unsigned char>(ch);
    state *= kFnvPrime;
  }
  return state;
}

/// Folds the 8 little-endian bytes of `value` into an FNV-1a state.
constexpr std::uint64_t fnv1a_u64(std::uint64_t value, std::uint64_t state) noexcept
{
  for (int i = 0; i < 8; ++i)
  {
    state ^= (value >> (8 * i)) & 0xffU;
    state *= kFnvPrime;
  }
  return state;
}

std::string to_hex(std::uint64_t value);

/// Unit-norm dense sentence embedding.
class DenseEmbedding
{
public:
  DenseEmbedding() = default;
  /// L2-normalizes `values`; throws NumericError on a zero or non-finite vector.
  static DenseEmbedding normalized(std::vector<double> values);
  /// Keeps `values` bit-for-bit; throws NumericError unless the norm is 1 ± 1e-9.
  static DenseEmbedding from_unit(std::vector<double> values);

  std::size_t dim() const noexcept
  {
    return values_.size();
  }
  std::span<double const> values() const noexcept
  {
    return values_;
  }

  friend bool operator==(DenseEmbedding const &, DenseEmbedding const &) = default;

private:
  std::vector<double> values_;
};

double dot(DenseEmbedding const &a, DenseEmbedding const &b);
double cosine(DenseEmbedding const &a, DenseEmbedding const &b);
double l2_distance(DenseEmbedding const &a, DenseEmbedding const &b);

/// Fixed-width bit set of hashed substructures.
class Fingerprint
{
public:
  explicit Fingerprint(std::size_t width = 2048);

  void set(std::size_t bit);
  bool test(std::size_t bit) const;

  std::size_t width() const noexcept
  {
    return width_;
  }
  std::size_t set_count() const noexcept
  {
    return set_count_;
  }
  std::span<std::uint64_t const> words() const noexcept
  {
    return words_;
  }

  /// Lowercase hex of the words, little-endian word order.
  std::string to_hex() const;
  static Fingerprint from_hex(std::string_view hex, std::size_t width);

  friend bool operator==(Fingerprint const &, Fingerprint const &) = default;

private:
  std::size_t                width_;
  std::size_t                set_count_ = 0;
  std::vector<std::uint64_t> words_;
};

inline constexpr std::size_t kDefaultEmbeddingDim    = 64;
inline constexpr std::size_t kDefaultFingerprintBits = 2048;

/// Hashed character n-gram embedding (n = 1..3).
///
/// Each n-gram is hashed with FNV-1a together with the index of the
/// kJoin-delimited segment it sits in and the seed, then added with a hash
/// derived sign into bucket `hash % dim`. Folding the segment index in makes
/// the embedding of a concatenation depend on the order of its parts, while
/// the content of each part stays a bag of n-grams.
///
/// Throws ConfigError when dim < 8 and ContractError on blank text.
DenseEmbedding embed_ngram(std::string_view text, std::size_t dim = kDefaultEmbeddingDim,
                           std::uint64_t seed = 0);

/// Bit b is set iff some n-gram (n = 2..4) of `text` hashes to b. n-grams that
/// would contain kJoin are skipped, so fingerprint(a⊕b) == fingerprint(b⊕a).
/// Throws ContractError on empty text.
Fingerprint fingerprint(std::string_view text, std::size_t width = kDefaultFingerprintBits);

/// Configured embedder, the value type passed around by the retrieval and
/// encoder layers.
struct NgramEmbedder
{
  std::size_t   dim  = kDefaultEmbeddingDim;
  std::uint64_t seed = 0;

  DenseEmbedding operator()(std::string_view text) const
  {
    return embed_ngram(text, dim, seed);
  }
};

}  // namespace mharag::embedding
