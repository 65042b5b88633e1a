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

#include "mharag/remote_embedding.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>

#include <httplib.h>
#include <json.hpp>

#include "mharag/error.hpp"

namespace mharag::embedding {

using nlohmann::json;

HttpTransport::HttpTransport(double timeout_seconds)
  : timeout_seconds_(timeout_seconds)
{}

HttpResponse HttpTransport::post(std::string const &url, std::string const &body, HttpHeaders const &headers)
{
  static std::regex const pattern(R"(^(http://[^/]+)(/.*)?$)");
  std::smatch             m;
  if (!std::regex_match(url, m, pattern))
  {
    throw ConfigError("unsupported embedding endpoint (expected http://host[:port]/path): " + url);
  }
  httplib::Client client(m[1].str());
  auto const      secs = static_cast<time_t>(timeout_seconds_);
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  httplib::Headers h;
  for (auto const &[k, v] : headers)
  {
    h.emplace(k, v);
  }
  std::string const path = m[2].matched ? m[2].str() : "/";
  auto              res  = client.Post(path, h, body, "application/json");
  if (!res)
  {
    throw std::runtime_error("HTTP request failed: " + httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

RemoteEmbedder::RemoteEmbedder(RemoteConfig config, std::shared_ptr<Transport> transport)
  : config_(std::move(config))
  , transport_(std::move(transport))
{
  if (config_.max_batch == 0)
  {
    throw ConfigError("max_batch must be positive");
  }
  if (!transport_)
  {
    throw ConfigError("RemoteEmbedder needs a transport");
  }
}

std::filesystem::path RemoteEmbedder::cache_path(std::string const &text) const
{
  std::uint64_t h = fnv1a(config_.endpoint);
  h               = fnv1a(std::string_view("\0", 1), h);
  h               = fnv1a(config_.model, h);
  h               = fnv1a(std::string_view("\0", 1), h);
  h               = fnv1a(text, h);
  return config_.cache_dir / (to_hex(h) + ".json");
}

bool RemoteEmbedder::load_cached(std::string const &text, DenseEmbedding &out) const
{
  if (config_.cache_dir.empty())
  {
    return false;
  }
  std::ifstream in(cache_path(text));
  if (!in)
  {
    return false;
  }
  try
  {
    json const doc = json::parse(in);
    if (doc.at("endpoint") != config_.endpoint || doc.at("model") != config_.model ||
        doc.at("text") != text)
    {
      return false;
    }
    auto values = doc.at("embedding").get<std::vector<double>>();
    if (values.size() != config_.dim)
    {
      return false;
    }
    out = DenseEmbedding::from_unit(std::move(values));
    return true;
  }
  catch (json::exception const &)
  {
    return false;
  }
  catch (NumericError const &)
  {
    return false;
  }
}

void RemoteEmbedder::store_cached(std::string const &text, DenseEmbedding const &e)
{
  if (config_.cache_dir.empty())
  {
    return;
  }
  std::lock_guard<std::mutex> lock(cache_mutex_);
  std::filesystem::create_directories(config_.cache_dir);
  json doc;
  doc["endpoint"]  = config_.endpoint;
  doc["model"]     = config_.model;
  doc["text"]      = text;
  doc["embedding"] = std::vector<double>(e.values().begin(), e.values().end());
  auto const path  = cache_path(text);
  auto const tmp   = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    out << doc.dump();
  }
  std::filesystem::rename(tmp, path);
}

std::vector<DenseEmbedding> RemoteEmbedder::fetch(std::vector<std::string> const &texts)
{
  json request;
  request["model"] = config_.model;
  request["input"] = texts;
  std::string const body = request.dump();

  HttpHeaders headers{{"Content-Type", "application/json"}};
  if (char const *key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0')
  {
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt)
  {
    HttpResponse res;
    ++network_calls_;
    try
    {
      res = transport_->post(config_.endpoint, body, headers);
    }
    catch (ConfigError const &)
    {
      throw;
    }
    catch (std::exception const &e)
    {
      last_error = e.what();
      continue;
    }
    if (res.status < 200 || res.status >= 300)
    {
      last_error = "HTTP status " + std::to_string(res.status);
      continue;
    }
    std::vector<std::vector<double>> rows(texts.size());
    try
    {
      json const doc = json::parse(res.body);
      for (auto const &item : doc.at("data"))
      {
        auto const index = item.at("index").get<std::size_t>();
        if (index >= rows.size() || !rows[index].empty())
        {
          throw std::runtime_error("bad or duplicate index " + std::to_string(index));
        }
        rows[index] = item.at("embedding").get<std::vector<double>>();
        if (rows[index].empty())
        {
          throw std::runtime_error("empty embedding");
        }
      }
      for (auto const &r : rows)
      {
        if (r.empty())
        {
          throw std::runtime_error("response is missing an index");
        }
      }
    }
    catch (std::exception const &e)
    {
      last_error = std::string("malformed response body: ") + e.what();
      continue;
    }
    std::vector<DenseEmbedding> out;
    out.reserve(rows.size());
    for (auto &r : rows)
    {
      if (r.size() != config_.dim)
      {
        throw ConfigError("embedding service returned dimension " + std::to_string(r.size()) +
                          ", configured " + std::to_string(config_.dim));
      }
      out.push_back(DenseEmbedding::normalized(std::move(r)));
    }
    return out;
  }
  throw RemoteError("embedding request to " + config_.endpoint + " failed: " + last_error,
                    config_.max_retries);
}

std::vector<DenseEmbedding> RemoteEmbedder::embed(std::span<std::string const> texts)
{
  if (texts.size() > config_.max_batch)
  {
    throw ConfigError("embedding batch of " + std::to_string(texts.size()) + " exceeds max_batch " +
                      std::to_string(config_.max_batch));
  }
  std::vector<DenseEmbedding> out(texts.size());
  std::vector<std::string>    missing;
  std::vector<std::size_t>    slots;
  for (std::size_t i = 0; i < texts.size(); ++i)
  {
    if (!load_cached(texts[i], out[i]))
    {
      missing.push_back(texts[i]);
      slots.push_back(i);
    }
  }
  if (!missing.empty())
  {
    auto fetched = fetch(missing);
    for (std::size_t j = 0; j < slots.size(); ++j)
    {
      store_cached(missing[j], fetched[j]);
      out[slots[j]] = std::move(fetched[j]);
    }
  }
  return out;
}

std::vector<DenseEmbedding> embed_remote(std::span<std::string const> texts, std::string const &endpoint,
                                         std::string const &model, std::size_t dim)
{
  RemoteConfig cfg;
  cfg.endpoint = endpoint;
  cfg.model    = model;
  cfg.dim      = dim;
  RemoteEmbedder client(std::move(cfg), std::make_shared<HttpTransport>());
  return client.embed(texts);
}

}  // namespace mharag::embedding
