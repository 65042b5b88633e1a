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

#include "mharag/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "mharag/error.hpp"

namespace mharag::embedding {

namespace {

bool blank(std::string_view text)
{
  return std::all_of(text.begin(), text.end(), [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0 || c == kJoin;
  });
}

template <class F>
void for_each_segment(std::string_view text, F &&f)
{
  std::size_t index = 0;
  std::size_t start = 0;
  while (true)
  {
    std::size_t const end = text.find(kJoin, start);
    f(index, text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos)
    {
      break;
    }
    start = end + 1;
    ++index;
  }
}

}  // namespace

std::string join(std::span<std::string const> parts)
{
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i)
  {
    if (i > 0)
    {
      out.push_back(kJoin);
    }
    out += parts[i];
  }
  return out;
}

std::string join(std::initializer_list<std::string_view> parts)
{
  std::string out;
  bool        first = true;
  for (std::string_view p : parts)
  {
    if (!first)
    {
      out.push_back(kJoin);
    }
    out.append(p);
    first = false;
  }
  return out;
}

std::string to_hex(std::uint64_t value)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

DenseEmbedding DenseEmbedding::normalized(std::vector<double> values)
{
  double sq = 0.0;
  for (double v : values)
  {
    sq += v * v;
  }
  double const norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm))
  {
    throw NumericError("cannot normalize a zero or non-finite embedding");
  }
  for (double &v : values)
  {
    v /= norm;
  }
  DenseEmbedding e;
  e.values_ = std::move(values);
  return e;
}

DenseEmbedding DenseEmbedding::from_unit(std::vector<double> values)
{
  double sq = 0.0;
  for (double v : values)
  {
    sq += v * v;
  }
  if (!(std::abs(std::sqrt(sq) - 1.0) <= 1e-9))
  {
    throw NumericError("stored embedding is not unit-norm");
  }
  DenseEmbedding e;
  e.values_ = std::move(values);
  return e;
}

double dot(DenseEmbedding const &a, DenseEmbedding const &b)
{
  if (a.dim() != b.dim())
  {
    throw ConfigError("embedding dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                      std::to_string(b.dim()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i)
  {
    total += a.values()[i] * b.values()[i];
  }
  return total;
}

double cosine(DenseEmbedding const &a, DenseEmbedding const &b)
{
  double const ab = dot(a, b);
  double const aa = dot(a, a);
  double const bb = dot(b, b);
  return ab / std::sqrt(aa * bb);
}

double l2_distance(DenseEmbedding const &a, DenseEmbedding const &b)
{
  if (a.dim() != b.dim())
  {
    throw ConfigError("embedding dimension mismatch");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i)
  {
    double const d = a.values()[i] - b.values()[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

Fingerprint::Fingerprint(std::size_t width)
  : width_(width)
  , words_((width + 63) / 64, 0)
{
  if (width == 0)
  {
    throw ConfigError("fingerprint width must be positive");
  }
}

void Fingerprint::set(std::size_t bit)
{
  if (bit >= width_)
  {
    throw ContractError("fingerprint bit " + std::to_string(bit) + " out of range");
  }
  std::uint64_t const mask = 1ULL << (bit % 64);
  if ((words_[bit / 64] & mask) == 0)
  {
    words_[bit / 64] |= mask;
    ++set_count_;
  }
}

bool Fingerprint::test(std::size_t bit) const
{
  return bit < width_ && (words_[bit / 64] >> (bit % 64) & 1ULL) != 0;
}

std::string Fingerprint::to_hex() const
{
  std::string out;
  out.reserve(words_.size() * 16);
  for (std::uint64_t w : words_)
  {
    out += embedding::to_hex(w);
  }
  return out;
}

Fingerprint Fingerprint::from_hex(std::string_view hex, std::size_t width)
{
  Fingerprint fp(width);
  if (hex.size() != fp.words_.size() * 16)
  {
    throw SchemaError("fingerprint hex has " + std::to_string(hex.size()) + " digits, expected " +
                      std::to_string(fp.words_.size() * 16));
  }
  for (std::size_t i = 0; i < fp.words_.size(); ++i)
  {
    std::uint64_t w = std::stoull(std::string(hex.substr(i * 16, 16)), nullptr, 16);
    fp.words_[i]    = w;
    fp.set_count_ += static_cast<std::size_t>(std::popcount(w));
  }
  return fp;
}

DenseEmbedding embed_ngram(std::string_view text, std::size_t dim, std::uint64_t seed)
{
  if (dim < 8)
  {
    throw ConfigError("embedding dim must be >= 8, got " + std::to_string(dim));
  }
  if (blank(text))
  {
    throw ContractError("cannot embed empty text");
  }
  std::vector<double> acc(dim, 0.0);
  for_each_segment(text, [&](std::size_t segment, std::string_view part) {
    for (std::size_t n = 1; n <= 3; ++n)
    {
      for (std::size_t i = 0; i + n <= part.size(); ++i)
      {
        std::uint64_t h = fnv1a(part.substr(i, n));
        h               = fnv1a_u64(segment, h);
        h               = fnv1a_u64(seed, h);
        double const sign = ((h >> 40) & 1ULL) != 0 ? 1.0 : -1.0;
        acc[h % dim] += sign;
      }
    }
  });
  return DenseEmbedding::normalized(std::move(acc));
}

Fingerprint fingerprint(std::string_view text, std::size_t width)
{
  if (text.empty())
  {
    throw ContractError("cannot fingerprint empty text");
  }
  Fingerprint fp(width);
  for_each_segment(text, [&](std::size_t, std::string_view part) {
    for (std::size_t n = 2; n <= 4; ++n)
    {
      for (std::size_t i = 0; i + n <= part.size(); ++i)
      {
        fp.set(fnv1a(part.substr(i, n)) % width);
      }
    }
  });
  return fp;
}

}  // namespace mharag::embedding
