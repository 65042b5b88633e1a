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

#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "mharag/data.hpp"
#include "mharag/embedding.hpp"
#include "mharag/encoders.hpp"
#include "mharag/numerics/tape.hpp"
#include "mharag/retrieval.hpp"
#include "mharag/toy_lm.hpp"

namespace {

using namespace mharag;
using numerics::Matrix;

std::vector<embedding::DenseEmbedding> random_embeddings(std::size_t n, std::size_t dim, std::mt19937_64 &rng)
{
  std::normal_distribution<double>       g(0.0, 1.0);
  std::vector<embedding::DenseEmbedding> out;
  for (std::size_t i = 0; i < n; ++i)
  {
    std::vector<double> v(dim);
    for (double &x : v)
    {
      x = g(rng);
    }
    out.push_back(embedding::DenseEmbedding::normalized(std::move(v)));
  }
  return out;
}

lm::RenderedInput prompted_input(lm::LmConfig const &cfg, std::size_t m, std::size_t c)
{
  lm::PromptedInput in;
  in.prompt_length = m;
  in.question      = "CC(=O)Nc1ccc(O)cc1CCN";
  in.answer        = "Yes";
  for (std::size_t i = 0; i < c; ++i)
  {
    in.context.push_back({"ctx" + std::to_string(i), "CCOc1ccccc1N", i % 2 == 0 ? "Yes" : "No", std::nullopt});
  }
  return lm::render(in, cfg);
}

void BM_EncodeMha(benchmark::State &state)
{
  std::mt19937_64   rng(1);
  std::size_t const k      = static_cast<std::size_t>(state.range(0));
  auto const        params = encoders::MhaRagParams::init(128, 64, 4, rng);
  auto const        query  = random_embeddings(1, 64, rng).front();
  auto const        ex     = random_embeddings(k, 64, rng);
  for (auto _ : state)
  {
    benchmark::DoNotOptimize(encoders::encode_mha(params, query, ex));
  }
}
BENCHMARK(BM_EncodeMha)->Arg(1)->Arg(5)->Arg(10);

void BM_LmForward(benchmark::State &state)
{
  std::mt19937_64 rng(2);
  lm::LmConfig    cfg;
  cfg.layers         = 2;
  cfg.d              = 64;
  auto const weights = lm::LmWeights::init(cfg, rng);
  auto const input   = prompted_input(cfg, 4, static_cast<std::size_t>(state.range(0)));
  Matrix     prompt(cfg.d, 4);
  for (auto _ : state)
  {
    benchmark::DoNotOptimize(lm::loss(weights, input, &prompt));
  }
  state.counters["tokens"] = static_cast<double>(input.tokens.size());
}
BENCHMARK(BM_LmForward)->Arg(0)->Arg(2);

void BM_TapeBackward(benchmark::State &state)
{
  std::mt19937_64 rng(3);
  lm::LmConfig    cfg;
  cfg.layers         = 2;
  cfg.d              = 64;
  auto const weights = lm::LmWeights::init(cfg, rng);
  auto const input   = prompted_input(cfg, 4, 0);
  Matrix     z(cfg.d, 4);
  for (auto _ : state)
  {
    numerics::Tape tape;
    auto const     bound  = lm::bind_frozen(tape, weights);
    auto const     prompt = tape.leaf_ref(z);
    auto const     loss   = lm::forward_loss(tape, weights, bound, input, prompt);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(prompt));
  }
}
BENCHMARK(BM_TapeBackward);

void BM_TopK(benchmark::State &state)
{
  data::ClusterSpec spec;
  spec.train                 = static_cast<std::size_t>(state.range(0));
  auto const               ds = data::gen_cluster_classification(spec);
  auto const               mode = state.range(1) == 0 ? retrieval::Mode::Tanimoto : retrieval::Mode::Cosine;
  retrieval::ExemplarStore store(ds.train, mode);
  std::size_t              i = 0;
  for (auto _ : state)
  {
    benchmark::DoNotOptimize(store.top_k(ds.test[i++ % ds.test.size()].question, 5));
  }
}
BENCHMARK(BM_TopK)->Args({1500, 0})->Args({1500, 1});

}  // namespace

BENCHMARK_MAIN();
