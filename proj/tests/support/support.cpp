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

#include "support.hpp"

#include <algorithm>
#include <cmath>

#include "mharag/harness.hpp"
#include "mharag/numerics/tape.hpp"
#include "mharag/pipeline.hpp"

namespace mharag::testing {

namespace fs = std::filesystem;

namespace {

// Same allocator settings as the CLI: large tapes otherwise churn mmap/trim.
[[maybe_unused]] bool const allocator_tuned = [] {
  harness::tune_allocator();
  return true;
}();

}  // namespace

TempDir::TempDir()
{
  std::random_device rd;
  for (int attempt = 0; attempt < 100; ++attempt)
  {
    auto candidate = fs::temp_directory_path() / ("mharag-test-" + embedding::to_hex((std::uint64_t{rd()} << 32) | rd()));
    if (fs::create_directories(candidate))
    {
      path_ = candidate;
      return;
    }
  }
  throw std::runtime_error("cannot create a temporary directory");
}

TempDir::~TempDir()
{
  std::error_code ec;
  fs::remove_all(path_, ec);
}

lm::LmConfig tiny_lm()
{
  lm::LmConfig c;
  c.layers        = 1;
  c.d             = 16;
  c.heads         = 2;
  c.max_positions = 256;
  return c;
}

lm::LmWeights tiny_weights(std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  return lm::LmWeights::init(tiny_lm(), rng);
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64 &rng, double scale)
{
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix                                 m(rows, cols);
  for (double &x : m.data())
  {
    x = u(rng);
  }
  return m;
}

embedding::DenseEmbedding random_embedding(std::size_t dim, std::mt19937_64 &rng)
{
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double>              v(dim);
  for (double &x : v)
  {
    x = n(rng);
  }
  return embedding::DenseEmbedding::normalized(std::move(v));
}

data::SplitDataset small_cluster(std::uint64_t seed)
{
  data::ClusterSpec spec;
  spec.clusters      = 6;
  spec.center_length = 14;
  spec.train         = 60;
  spec.dev           = 20;
  spec.test          = 20;
  spec.seed          = seed;
  return data::gen_cluster_classification(spec);
}

Matrix naive_mha(encoders::MhaRagParams const &params, embedding::DenseEmbedding const &query,
                 std::span<embedding::DenseEmbedding const> exemplars)
{
  std::size_t const d  = params.d;
  std::size_t const dp = params.d_prime;
  std::size_t const K  = exemplars.size();
  Matrix            z(d, params.heads());
  for (std::size_t h = 0; h < params.heads(); ++h)
  {
    auto const project = [&](Matrix const &w, embedding::DenseEmbedding const &e) {
      std::vector<double> out(d, 0.0);
      for (std::size_t r = 0; r < d; ++r)
      {
        for (std::size_t c = 0; c < dp; ++c)
        {
          out[r] += w(r, c) * e.values()[c];
        }
      }
      return out;
    };
    std::vector<double> const q = project(params.query[h], query);
    std::vector<double>       score(K);
    for (std::size_t k = 0; k < K; ++k)
    {
      std::vector<double> const key = project(params.key[h], exemplars[k]);
      double                    s   = 0.0;
      for (std::size_t r = 0; r < d; ++r)
      {
        s += q[r] * key[r];
      }
      score[k] = s / std::sqrt(static_cast<double>(d));
    }
    double const top = *std::max_element(score.begin(), score.end());
    double       total = 0.0;
    for (double &s : score)
    {
      s = std::exp(s - top);
      total += s;
    }
    for (std::size_t k = 0; k < K; ++k)
    {
      std::vector<double> const v = project(params.value[h], exemplars[k]);
      for (std::size_t r = 0; r < d; ++r)
      {
        z(r, h) += score[k] / total * v[r];
      }
    }
  }
  return z;
}

double relative_error(double analytic, double numeric, double floor)
{
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace {

std::vector<std::string> tensor_names(encoders::Adapter const &adapter)
{
  using encoders::Method;
  std::vector<std::string> names;
  switch (adapter.method)
  {
  case Method::Mha: {
    auto const &p = std::get<encoders::MhaRagParams>(adapter.params);
    for (std::size_t h = 0; h < p.heads(); ++h)
    {
      auto const i = std::to_string(h);
      names.insert(names.end(), {"W_Q[" + i + "]", "W_K[" + i + "]", "W_V[" + i + "]"});
    }
    break;
  }
  case Method::Xrag:
  case Method::XragK:
  case Method::Idpg:
    names = {"W", "b"};
    break;
  case Method::Pt:
    names = {"P"};
    break;
  default:
    break;
  }
  return names;
}

}  // namespace

std::vector<GradientReport> pipeline_gradient_check(lm::LmWeights const &weights, encoders::Method method,
                                                    std::size_t coords, std::uint64_t seed)
{
  using numerics::Tape;
  using numerics::Var;

  static data::SplitDataset const ds = small_cluster(0);
  retrieval::ExemplarStore const  store(ds.train, retrieval::Mode::Tanimoto);
  std::mt19937_64                 rng(seed);

  pipeline::MethodConfig cfg;
  cfg.method = method;
  cfg.k      = 3;
  cfg.heads  = 2;
  cfg.m      = 3;

  data::Exemplar const &item = ds.test[seed % ds.test.size()];
  auto const            hit  = store.top_k(item.question, cfg.k);

  encoders::Adapter adapter =
    encoders::init_adapter({method, weights.config.d, store.embedder().dim, cfg.heads, cfg.m}, rng);
  // Larger than the training init so attention and outputs are far from degenerate.
  for (Matrix *t : adapter.tensors())
  {
    *t = random_matrix(t->rows(), t->cols(), rng, 0.3);
  }

  pipeline::Features const features = pipeline::featurize(cfg, store, item.question, hit.indices);
  lm::RenderedInput const  rendered = lm::render(
    pipeline::prompted_input(cfg, store, item.question, hit.indices, adapter.prompt_length(cfg.k), item.answer),
    weights.config);

  auto const untracked_loss = [&] {
    auto const z = pipeline::soft_prompt(cfg, &adapter, features);
    return lm::loss(weights, rendered, &*z);
  };

  std::vector<GradientReport> out;
  {
    Tape             tape;
    auto const       bound = lm::bind_frozen(tape, weights);
    std::vector<Var> vars;
    for (Matrix const *t : adapter.tensors())
    {
      vars.push_back(tape.leaf_ref(*t));
    }
    Var const z = pipeline::soft_prompt_on_tape(tape, cfg, adapter, vars, features);
    tape.backward(lm::forward_loss(tape, weights, bound, rendered, z));

    auto const names   = tensor_names(adapter);
    auto       tensors = adapter.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i)
    {
      Matrix const   grad = tape.grad(vars[i]);
      GradientReport rep{names.at(i), coords, 0.0};
      std::uniform_int_distribution<std::size_t> pick_r(0, tensors[i]->rows() - 1), pick_c(0, tensors[i]->cols() - 1);
      for (std::size_t n = 0; n < coords; ++n)
      {
        std::size_t const r   = pick_r(rng);
        std::size_t const c   = pick_c(rng);
        double const      num = numerics::central_difference(untracked_loss, *tensors[i], r, c);
        rep.max_rel_err       = std::max(rep.max_rel_err, relative_error(grad(r, c), num));
      }
      out.push_back(rep);
    }
  }
  {
    Matrix z = *pipeline::soft_prompt(cfg, &adapter, features);
    Tape   tape;
    auto const bound = lm::bind_frozen(tape, weights);
    Var const  leaf  = tape.leaf_ref(z);
    tape.backward(lm::forward_loss(tape, weights, bound, rendered, leaf));
    Matrix const   grad = tape.grad(leaf);
    GradientReport rep{"Z", coords, 0.0};
    std::uniform_int_distribution<std::size_t> pick_r(0, z.rows() - 1), pick_c(0, z.cols() - 1);
    for (std::size_t n = 0; n < coords; ++n)
    {
      std::size_t const r   = pick_r(rng);
      std::size_t const c   = pick_c(rng);
      double const      num = numerics::central_difference([&] { return lm::loss(weights, rendered, &z); }, z, r, c);
      rep.max_rel_err       = std::max(rep.max_rel_err, relative_error(grad(r, c), num));
    }
    out.push_back(rep);
  }
  return out;
}

}  // namespace mharag::testing
