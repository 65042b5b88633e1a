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
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mharag/embedding.hpp"

namespace mharag::embedding {

struct HttpResponse
{
  int         status = 0;
  std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

/// POST transport. Implementations throw std::exception on connection failure.
class Transport
{
public:
  virtual ~Transport() = default;
  virtual HttpResponse post(std::string const &url, std::string const &body, HttpHeaders const &headers) = 0;
};

/// Plain-HTTP transport backed by cpp-httplib.
class HttpTransport : public Transport
{
public:
  explicit HttpTransport(double timeout_seconds = 30.0);
  HttpResponse post(std::string const &url, std::string const &body, HttpHeaders const &headers) override;

private:
  double timeout_seconds_;
};

struct RemoteConfig
{
  std::string           endpoint;
  std::string           model;
  std::size_t           dim       = kDefaultEmbeddingDim;
  std::size_t           max_batch = 64;
  int                   max_retries = 2;
  std::filesystem::path cache_dir;  // empty disables the cache
  std::string           api_key_env = "EMBED_API_KEY";
};

/// Client for an embeddings service speaking
///   request  {"model": str, "input": [str]}
///   response {"data": [{"index": int, "embedding": [float]}]}
///
/// Results are L2-normalized client-side and cached on disk, one JSON file per
/// (endpoint, model, text) hash. Cache writes are serialized; reads are not.
class RemoteEmbedder
{
public:
  RemoteEmbedder(RemoteConfig config, std::shared_ptr<Transport> transport);

  /// One embedding per input, in input order. Throws ConfigError when the
  /// batch exceeds max_batch or the service returns the wrong dimension, and
  /// RemoteError once retries are exhausted.
  std::vector<DenseEmbedding> embed(std::span<std::string const> texts);

  /// Number of POSTs issued so far (retries included).
  std::size_t network_calls() const noexcept
  {
    return network_calls_;
  }

  std::filesystem::path cache_path(std::string const &text) const;

private:
  std::vector<DenseEmbedding> fetch(std::vector<std::string> const &texts);
  bool                        load_cached(std::string const &text, DenseEmbedding &out) const;
  void                        store_cached(std::string const &text, DenseEmbedding const &e);

  RemoteConfig               config_;
  std::shared_ptr<Transport> transport_;
  std::size_t                network_calls_ = 0;
  std::mutex                 cache_mutex_;
};

/// Convenience wrapper: HTTP transport, no cache, default dimension.
std::vector<DenseEmbedding> embed_remote(std::span<std::string const> texts, std::string const &endpoint,
                                         std::string const &model,
                                         std::size_t dim = kDefaultEmbeddingDim);

}  // namespace mharag::embedding
