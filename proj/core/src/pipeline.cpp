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

#include "mharag/pipeline.hpp"

#include <algorithm>
#include <random>

#include "mharag/embedding.hpp"
#include "mharag/error.hpp"

namespace mharag::pipeline {

using encoders::Method;

void MethodConfig::validate() const
{
  switch (method)
  {
  case Method::Mha:
    if (heads == 0)
    {
      throw ConfigError("mha needs H >= 1");
    }
    [[fallthrough]];
  case Method::Rag:
  case Method::Xrag:
  case Method::XragK:
    if (k == 0)
    {
      throw ConfigError(std::string(encoders::to_string(method)) + " needs K >= 1");
    }
    if (c > k)
    {
      throw ConfigError("hybrid c=" + std::to_string(c) + " exceeds K=" + std::to_string(k));
    }
    break;
  case Method::Pt:
  case Method::Idpg:
    if (m == 0)
    {
      throw ConfigError(std::string(encoders::to_string(method)) + " needs m >= 1");
    }
    break;
  case Method::ZeroShot:
    break;
  }
  if (c > 0 && !encoders::uses_exemplars(method))
  {
    throw ConfigError("hybrid text exemplars (c > 0) need a retrieval method");
  }
}

std::size_t MethodConfig::retrieve_count() const
{
  return encoders::uses_exemplars(method) ? k : 0;
}

namespace {

Matrix column_of(embedding::DenseEmbedding const &e)
{
  return Matrix::column(e.values());
}

void set_row(Matrix &m, std::size_t r, embedding::DenseEmbedding const &e)
{
  auto const v = e.values();
  std::copy(v.begin(), v.end(), m.row(r).begin());
}

}  // namespace

Features featurize(MethodConfig const &cfg, retrieval::ExemplarStore const &store, std::string const &question,
                   std::span<std::size_t const> order)
{
  auto const &embed = store.embedder();
  std::size_t const dp = embed.dim;
  Features          f;
  switch (cfg.method)
  {
  case Method::Mha:
    f.query = column_of(embed(question));
    f.rows  = Matrix(order.size(), dp);
    for (std::size_t j = 0; j < order.size(); ++j)
    {
      set_row(f.rows, j, store.dense(order[j]));
    }
    break;
  case Method::XragK:
    f.rows = Matrix(order.size(), dp);
    for (std::size_t j = 0; j < order.size(); ++j)
    {
      auto const &e = store.at(order[j]);
      set_row(f.rows, j, embed(embedding::join({question, e.question, e.answer})));
    }
    break;
  case Method::Xrag: {
    std::vector<std::string> parts{question};
    for (std::size_t idx : order)
    {
      parts.push_back(store.at(idx).question);
      parts.push_back(store.at(idx).answer);
    }
    f.joint = column_of(embed(embedding::join(parts)));
    break;
  }
  case Method::Idpg:
    f.query = column_of(embed(question));
    break;
  default:
    break;
  }
  return f;
}

numerics::Var soft_prompt_on_tape(numerics::Tape &tape, MethodConfig const &cfg, encoders::Adapter const &adapter,
                                  std::span<numerics::Var const> params, Features const &f)
{
  if (adapter.method != cfg.method)
  {
    throw ConfigError("adapter was trained for " + std::string(encoders::to_string(adapter.method)) + ", not " +
                      std::string(encoders::to_string(cfg.method)));
  }
  switch (cfg.method)
  {
  case Method::Mha:
    return encoders::mha_on_tape(tape, params, std::get<encoders::MhaRagParams>(adapter.params).heads(), f.query,
                                 f.rows);
  case Method::Xrag:
    return encoders::xrag_on_tape(tape, params, f.joint);
  case Method::XragK:
    return encoders::xrag_k_on_tape(tape, params, f.rows);
  case Method::Pt:
    return encoders::pt_on_tape(tape, params);
  case Method::Idpg: {
    auto const &p = std::get<encoders::IdpgParams>(adapter.params);
    return encoders::idpg_on_tape(tape, params, p.d, p.m, f.query);
  }
  default:
    throw ConfigError(std::string(encoders::to_string(cfg.method)) + " has no soft-prompt encoder");
  }
}

std::optional<Matrix> soft_prompt(MethodConfig const &cfg, encoders::Adapter const *adapter, Features const &f)
{
  if (!encoders::has_encoder(cfg.method))
  {
    return std::nullopt;
  }
  if (adapter == nullptr)
  {
    throw ConfigError(std::string(encoders::to_string(cfg.method)) + " needs a trained encoder checkpoint");
  }
  numerics::Tape             tape;
  std::vector<numerics::Var> vars;
  for (Matrix const *m : adapter->tensors())
  {
    vars.push_back(tape.constant_ref(*m));
  }
  return tape.value(soft_prompt_on_tape(tape, cfg, *adapter, vars, f));
}

lm::PromptedInput prompted_input(MethodConfig const &cfg, retrieval::ExemplarStore const &store,
                                 std::string const &question, std::span<std::size_t const> order,
                                 std::size_t prompt_length, std::optional<std::string> answer)
{
  lm::PromptedInput in;
  in.prompt_length    = prompt_length;
  in.question         = question;
  in.answer           = std::move(answer);
  std::size_t const c = cfg.method == Method::Rag ? order.size() : std::min(cfg.c, order.size());
  for (std::size_t j = 0; j < c; ++j)
  {
    in.context.push_back(store.at(order[j]));
  }
  return in;
}

RetrievalCache retrieve_all(retrieval::ExemplarStore const &store, std::span<data::Exemplar const> items,
                            std::size_t k, bool leave_one_out)
{
  RetrievalCache cache;
  if (k == 0)
  {
    return cache;
  }
  for (data::Exemplar const &e : items)
  {
    try
    {
      auto r = leave_one_out ? store.top_k(e.question, k, {e.id}) : store.top_k(e.question, k);
      cache.emplace(e.id, std::move(r.indices));
    }
    catch (EmptyResultError const &)
    {
    }
  }
  return cache;
}

std::vector<std::size_t> shuffled(std::span<std::size_t const> order, std::uint64_t seed, std::string const &id)
{
  std::vector<std::size_t> out(order.begin(), order.end());
  std::mt19937_64          rng(embedding::fnv1a_u64(seed, embedding::fnv1a(id)));
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

EvalResult evaluate(lm::LmWeights const &weights, MethodConfig const &cfg, encoders::Adapter const *adapter,
                    retrieval::ExemplarStore const &store, std::span<data::Exemplar const> items,
                    RetrievalCache const &cache, EvalOptions const &options)
{
  cfg.validate();
  EvalResult                     out;
  std::vector<std::size_t> const none;
  for (data::Exemplar const &item : items)
  {
    std::vector<std::size_t> order;
    if (cfg.retrieve_count() > 0)
    {
      auto const it = cache.find(item.id);
      if (it == cache.end() || it->second.empty())
      {
        ++out.skipped;
        out.predictions.emplace_back();
        continue;
      }
      order = options.shuffle_seed ? shuffled(it->second, *options.shuffle_seed, item.id) : it->second;
    }
    Features const        f = featurize(cfg, store, item.question, order);
    std::optional<Matrix> z = soft_prompt(cfg, adapter, f);
    auto const in = prompted_input(cfg, store, item.question, order, z ? z->cols() : 0);
    std::size_t const pick =
      lm::choose_answer(weights, in, options.candidates.answers, z ? &*z : nullptr);
    std::string const &pred = options.candidates.answers[pick];
    out.counts.add(pred == options.candidates.positive, item.answer == options.candidates.positive);
    out.predictions.push_back(pred);
  }
  out.effective_accuracy = metrics::effective_accuracy(out.counts);
  return out;
}

}  // namespace mharag::pipeline
