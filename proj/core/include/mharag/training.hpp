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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mharag/encoders.hpp"
#include "mharag/pipeline.hpp"
#include "mharag/retrieval.hpp"
#include "mharag/toy_lm.hpp"

namespace mharag::training {

struct TrainConfig
{
  pipeline::MethodConfig method;
  std::size_t            d_prime       = embedding::kDefaultEmbeddingDim;
  double                 learning_rate = 1e-2;
  std::size_t            epochs        = 5;
  std::size_t            batch         = 8;
  std::uint64_t          seed          = 0;
  double                 clip_norm     = 1.0;
  bool                   leave_one_out = true;
  std::vector<double>    lr_grid;
  pipeline::Candidates   candidates;

  /// Throws ConfigError when the method has no encoder or a field is out of range.
  void validate() const;
};

struct EpochRecord
{
  std::size_t epoch      = 0;
  double      train_loss = 0.0;
  double      dev_eff_acc = 0.0;
  std::size_t skipped    = 0;  // samples dropped for empty retrieval
};

struct TrainResult
{
  encoders::Adapter        best;
  std::size_t              best_epoch = 0;
  double                   best_dev   = -1.0;
  std::vector<EpochRecord> history;
  std::size_t              optimizer_state = 0;  // Adam moment entries per buffer
};

/// Called for every sample of every step with the ids it retrieved.
using RetrievalHook = std::function<void(std::string const &id, std::span<std::size_t const> retrieved)>;

/// Trains φ with θ frozen. Each step samples a batch, retrieves D_K (leave-one-out
/// by default), encodes Z, runs the frozen LM and takes an Adam step on φ. The
/// adapter with the best dev effective accuracy is kept; ties keep the earlier epoch.
TrainResult train_adapter(TrainConfig const &cfg, retrieval::ExemplarStore const &store,
                          std::span<data::Exemplar const> train, std::span<data::Exemplar const> dev,
                          lm::LmWeights const &weights, RetrievalHook const &hook = {});

/// Mean loss over a batch evaluated on one tape.
double batch_loss(TrainConfig const &cfg, encoders::Adapter const &adapter, retrieval::ExemplarStore const &store,
                  std::span<data::Exemplar const> items, pipeline::RetrievalCache const &cache,
                  lm::LmWeights const &weights);

/// Loss of one sample on its own tape.
double sample_loss(TrainConfig const &cfg, encoders::Adapter const &adapter, retrieval::ExemplarStore const &store,
                   data::Exemplar const &item, pipeline::RetrievalCache const &cache, lm::LmWeights const &weights);

struct SweepPoint
{
  double                     learning_rate = 0.0;
  std::optional<double>      best_dev;
  std::string                error;
  std::optional<TrainResult> result;
};

struct SweepResult
{
  std::vector<SweepPoint> points;
  double                  best_lr = 0.0;
  std::size_t             best_index = 0;
};

/// One full training run per grid point with the same seed. The best dev score
/// wins; ties go to the smaller learning rate. A failing point is recorded.
/// Throws ConfigError on an empty grid or when every point fails.
SweepResult lr_sweep(TrainConfig const &cfg, retrieval::ExemplarStore const &store,
                     std::span<data::Exemplar const> train, std::span<data::Exemplar const> dev,
                     lm::LmWeights const &weights);

/// Columns: epoch,train_loss,dev_eff_acc,lr,seed,method,K,H,m
void write_history_csv(std::filesystem::path const &path, TrainConfig const &cfg,
                       std::span<EpochRecord const> history);

}  // namespace mharag::training
