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

#include "mharag/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mharag/error.hpp"
#include "mharag/numerics/adam.hpp"

namespace mharag::training {

using numerics::Matrix;
using numerics::Tape;
using numerics::Var;

void TrainConfig::validate() const
{
  method.validate();
  if (!encoders::has_encoder(method.method))
  {
    throw ConfigError(std::string(encoders::to_string(method.method)) + " has nothing to train");
  }
  if (!(learning_rate > 0.0) || epochs == 0 || batch == 0 || d_prime == 0)
  {
    throw ConfigError("training needs lr > 0, epochs >= 1, batch >= 1 and d' >= 1");
  }
  if (candidates.answers.empty())
  {
    throw ConfigError("training needs answer candidates for dev evaluation");
  }
}

namespace {

/// Adds every sample's loss to `tape`; returns the mean-loss node. `features`
/// must stay alive as long as the tape.
Var batch_on_tape(Tape &tape, TrainConfig const &cfg, encoders::Adapter const &adapter,
                  std::span<Var const> params, lm::BoundWeights const &bound, lm::LmWeights const &weights,
                  retrieval::ExemplarStore const &store, std::span<data::Exemplar const *const> items,
                  pipeline::RetrievalCache const &cache, std::vector<pipeline::Features> &features)
{
  std::vector<std::size_t> const none;
  Var                            total;
  features.clear();
  features.reserve(items.size());
  for (data::Exemplar const *item : items)
  {
    std::vector<std::size_t> const *order = &none;
    if (cfg.method.retrieve_count() > 0)
    {
      order = &cache.at(item->id);
    }
    features.push_back(pipeline::featurize(cfg.method, store, item->question, *order));
    Var const z  = pipeline::soft_prompt_on_tape(tape, cfg.method, adapter, params, features.back());
    auto const m = tape.value(z).cols();
    auto const in = pipeline::prompted_input(cfg.method, store, item->question, *order, m, item->answer);
    Var const loss = lm::forward_loss(tape, weights, bound, lm::render(in, weights.config), z);
    total          = total.valid() ? tape.add(total, loss) : loss;
  }
  return tape.scale(total, 1.0 / static_cast<double>(items.size()));
}

std::vector<Var> bind_adapter(Tape &tape, encoders::Adapter const &adapter, bool trainable)
{
  std::vector<Var> vars;
  for (Matrix const *m : adapter.tensors())
  {
    vars.push_back(trainable ? tape.leaf_ref(*m) : tape.constant_ref(*m));
  }
  return vars;
}

}  // namespace

double batch_loss(TrainConfig const &cfg, encoders::Adapter const &adapter, retrieval::ExemplarStore const &store,
                  std::span<data::Exemplar const> items, pipeline::RetrievalCache const &cache,
                  lm::LmWeights const &weights)
{
  if (items.empty())
  {
    throw ContractError("batch_loss of an empty batch");
  }
  std::vector<data::Exemplar const *> ptrs;
  for (auto const &e : items)
  {
    ptrs.push_back(&e);
  }
  Tape                            tape;
  auto const                      bound  = lm::bind_frozen(tape, weights);
  auto const                      params = bind_adapter(tape, adapter, false);
  std::vector<pipeline::Features> features;
  return tape.value(batch_on_tape(tape, cfg, adapter, params, bound, weights, store, ptrs, cache, features))(0, 0);
}

double sample_loss(TrainConfig const &cfg, encoders::Adapter const &adapter, retrieval::ExemplarStore const &store,
                   data::Exemplar const &item, pipeline::RetrievalCache const &cache, lm::LmWeights const &weights)
{
  return batch_loss(cfg, adapter, store, std::span<data::Exemplar const>(&item, 1), cache, weights);
}

TrainResult train_adapter(TrainConfig const &cfg, retrieval::ExemplarStore const &store,
                          std::span<data::Exemplar const> train, std::span<data::Exemplar const> dev,
                          lm::LmWeights const &weights, RetrievalHook const &hook)
{
  cfg.validate();
  if (train.empty())
  {
    throw ConfigError("training split is empty");
  }
  if (dev.empty())
  {
    throw ConfigError("dev split is empty; best-by-dev selection needs one");
  }
  if (store.embedder().dim != cfg.d_prime)
  {
    throw ConfigError("store embeds at d'=" + std::to_string(store.embedder().dim) + " but training expects d'=" +
                      std::to_string(cfg.d_prime));
  }

  std::mt19937_64   rng(cfg.seed);
  encoders::Adapter adapter = encoders::init_adapter(
    {cfg.method.method, weights.config.d, cfg.d_prime, cfg.method.heads, cfg.method.m}, rng);

  std::size_t const k          = cfg.method.retrieve_count();
  auto const        train_cache = pipeline::retrieve_all(store, train, k, cfg.leave_one_out);
  auto const        dev_cache   = pipeline::retrieve_all(store, dev, k, false);

  std::vector<data::Exemplar const *> usable;
  std::size_t                         skipped = 0;
  for (auto const &e : train)
  {
    if (k > 0 && train_cache.find(e.id) == train_cache.end())
    {
      ++skipped;
      continue;
    }
    usable.push_back(&e);
  }
  if (usable.empty())
  {
    throw EmptyResultError("no training sample has a non-empty retrieval");
  }

  numerics::Adam                  opt({cfg.learning_rate, 0.9, 0.999, 1e-8});
  auto                            tensors = adapter.tensors();
  std::vector<Matrix>             grads;
  std::vector<pipeline::Features> features;
  TrainResult                     result;
  result.best = adapter;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch)
  {
    std::shuffle(usable.begin(), usable.end(), rng);
    double      loss_sum = 0.0;
    std::size_t seen     = 0;
    for (std::size_t start = 0; start < usable.size(); start += cfg.batch)
    {
      std::size_t const n = std::min(cfg.batch, usable.size() - start);
      std::span<data::Exemplar const *const> batch(usable.data() + start, n);
      if (hook)
      {
        for (auto const *item : batch)
        {
          static std::vector<std::size_t> const none;
          hook(item->id, k > 0 ? std::span<std::size_t const>(train_cache.at(item->id)) : none);
        }
      }
      Tape       tape;
      auto const bound  = lm::bind_frozen(tape, weights);
      auto const params = bind_adapter(tape, adapter, true);
      Var const  loss   = batch_on_tape(tape, cfg, adapter, params, bound, weights, store, batch, train_cache, features);
      double const value = tape.value(loss)(0, 0);
      if (!std::isfinite(value))
      {
        throw NumericError("training loss is not finite at epoch " + std::to_string(epoch) + ", sample offset " +
                           std::to_string(start));
      }
      tape.backward(loss);
      grads.clear();
      for (Var v : params)
      {
        grads.push_back(tape.grad(v));
      }
      numerics::clip_global_norm(grads, cfg.clip_norm);
      opt.step(tensors, grads);
      loss_sum += value * static_cast<double>(n);
      seen += n;
    }

    auto const dev_eval = pipeline::evaluate(weights, cfg.method, &adapter, store, dev, dev_cache,
                                             {std::nullopt, cfg.candidates});
    EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), dev_eval.effective_accuracy, skipped};
    result.history.push_back(rec);
    if (rec.dev_eff_acc > result.best_dev)
    {
      result.best_dev   = rec.dev_eff_acc;
      result.best_epoch = epoch;
      result.best       = adapter;
    }
  }
  result.optimizer_state = opt.state_entries();
  return result;
}

SweepResult lr_sweep(TrainConfig const &cfg, retrieval::ExemplarStore const &store,
                     std::span<data::Exemplar const> train, std::span<data::Exemplar const> dev,
                     lm::LmWeights const &weights)
{
  if (cfg.lr_grid.empty())
  {
    throw ConfigError("learning-rate grid is empty");
  }
  SweepResult              out;
  std::vector<double>      grid = cfg.lr_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::optional<std::size_t> best;
  for (double lr : grid)
  {
    SweepPoint  point;
    point.learning_rate = lr;
    TrainConfig run     = cfg;
    run.learning_rate   = lr;
    try
    {
      point.result   = train_adapter(run, store, train, dev, weights);
      point.best_dev = point.result->best_dev;
    }
    catch (Error const &e)
    {
      point.error = e.what();
    }
    out.points.push_back(std::move(point));
    auto const &p = out.points.back();
    // Ascending grid plus strict improvement keeps the smaller lr on ties.
    if (p.best_dev && (!best || *p.best_dev > *out.points[*best].best_dev))
    {
      best = out.points.size() - 1;
    }
  }
  if (!best)
  {
    throw ConfigError("every learning rate in the sweep failed; first error: " + out.points.front().error);
  }
  out.best_index = *best;
  out.best_lr    = out.points[*best].learning_rate;
  return out;
}

void write_history_csv(std::filesystem::path const &path, TrainConfig const &cfg,
                       std::span<EpochRecord const> history)
{
  if (path.has_parent_path())
  {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
  {
    throw IoError("cannot write history " + path.string());
  }
  out << "epoch,train_loss,dev_eff_acc,lr,seed,method,K,H,m\n";
  out.precision(17);
  bool const  mha = cfg.method.method == encoders::Method::Mha;
  std::size_t m   = 0;
  switch (cfg.method.method)
  {
  case encoders::Method::Mha:
    m = cfg.method.heads;
    break;
  case encoders::Method::Xrag:
    m = 1;
    break;
  case encoders::Method::XragK:
    m = cfg.method.k;
    break;
  default:
    m = cfg.method.m;
  }
  for (auto const &r : history)
  {
    out << r.epoch << ',' << r.train_loss << ',' << r.dev_eff_acc << ',' << cfg.learning_rate << ',' << cfg.seed
        << ',' << encoders::to_string(cfg.method.method) << ',' << cfg.method.retrieve_count() << ','
        << (mha ? std::to_string(cfg.method.heads) : "") << ',' << m << '\n';
  }
}

}  // namespace mharag::training
