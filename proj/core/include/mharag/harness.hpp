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
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mharag/cost.hpp"
#include "mharag/data.hpp"
#include "mharag/pipeline.hpp"
#include "mharag/toy_lm.hpp"
#include "mharag/training.hpp"

namespace mharag::harness {

namespace fs = std::filesystem;

/// `git describe` of the build.
std::string version();

/// Keeps freed tensor buffers in the heap instead of returning them to the OS
/// after every forward pass (glibc only; a no-op elsewhere). Call once from main.
void tune_allocator();

/// Output root: an explicit flag wins, then MHARAG_OUT, then `fallback`.
fs::path output_root(std::optional<std::string> const &flag, std::string const &fallback = "out");

/// Minimal CSV table; cells are written verbatim, so callers format numbers.
struct CsvTable
{
  std::vector<std::string>              header;
  std::vector<std::vector<std::string>> rows;

  void        write(fs::path const &path) const;
  std::string str() const;
};

/// Shortest round-trip decimal form of a double.
std::string fmt(double value);

/// Writes <dir>/metadata.json with a timestamp, kept apart from CSV bodies.
void write_metadata(fs::path const &dir, std::string const &command, nlohmann::json const &config);

/// One experiment: a dataset, a frozen LM, a method and its training knobs.
struct RunConfig
{
  std::string                dataset;  // dataset directory (gen output)
  std::string                lm;       // LM checkpoint
  std::string                method = "mha";
  std::size_t                k      = 5;
  std::size_t                heads  = 4;
  std::size_t                m      = 10;
  std::size_t                c      = 0;
  std::size_t                d_prime = embedding::kDefaultEmbeddingDim;
  double                     lr     = 1e-2;
  std::vector<double>        lr_grid;
  std::size_t                epochs = 5;
  std::size_t                batch  = 8;
  std::vector<std::uint64_t> seeds  = {0};
  std::string                split  = "test";
  std::string                checkpoint;  // eval of a trained encoder
  bool                       leave_one_out = true;

  /// Throws ConfigError naming the offending field.
  void                   validate() const;
  pipeline::MethodConfig method_config() const;
  training::TrainConfig  train_config(std::uint64_t seed) const;
  /// Resolved configuration; paths are kept, the output root is not.
  nlohmann::json to_json() const;
  /// Hex FNV-1a of to_json().dump().
  std::string hash() const;
  /// "mha-K5-H4", "pt-m10", "rag-K5", with "-c<c>" for hybrids.
  std::string tag() const;
};

/// Loaded inputs shared by the commands.
struct Workspace
{
  data::SplitDataset                        dataset;
  std::string                               manifest_hash;
  std::string                               dataset_name;
  lm::LmWeights                             weights;
  std::unique_ptr<retrieval::ExemplarStore> store;
};

/// Throws IoError naming the missing artifact.
Workspace open_workspace(RunConfig const &cfg);

/// Average rendered lengths over a split, used for cost reports.
cost::TokenCounts measure_tokens(retrieval::ExemplarStore const &store, std::span<data::Exemplar const> items);

// ---------------------------------------------------------------------------
// Commands. Each writes under `root` and returns what it wrote.

struct GenOptions
{
  std::string       task = "cluster";  // cluster | qa | probe
  std::string       name;              // directory under datasets/, defaults to task
  data::ClusterSpec cluster;
  data::DocQaSpec   qa;
  data::ProbeSpec   probe;
};

fs::path cmd_gen(GenOptions const &opts, fs::path const &root);

struct PretrainOptions
{
  std::vector<std::string> datasets;  // dataset directories whose train splits feed the corpus
  std::string              name = "toy";
  lm::LmConfig             lm;
  lm::PretrainConfig       train;
  std::size_t              episodes    = 4000;  // per dataset
  std::size_t              max_context = 4;
};

struct PretrainOutcome
{
  fs::path checkpoint;
  double   initial_loss = 0.0;
  double   final_loss   = 0.0;
};

PretrainOutcome cmd_pretrain(PretrainOptions const &opts, fs::path const &root, lm::ProgressFn const &progress = {});

struct TrainOutcome
{
  fs::path                                run_dir;
  std::vector<fs::path>                   checkpoints;  // one per seed
  std::vector<training::TrainResult>      results;
};

/// Trains one adapter per seed into runs/<dataset>/<tag>/seed<s>/.
TrainOutcome cmd_train(RunConfig const &cfg, fs::path const &root);

struct EvalRow
{
  std::uint64_t            seed = 0;
  pipeline::EvalResult     result;
  cost::CostReport         cost;
};

struct EvalOutcome
{
  fs::path             csv;
  std::vector<EvalRow> rows;
};

/// Evaluates `cfg.checkpoint` (required for encoder methods) or a text-only
/// baseline on `cfg.split`; writes results/<dataset>/<tag>/<split>[-seed<s>]/results.csv.
EvalOutcome cmd_eval(RunConfig const &cfg, fs::path const &root);

/// Header shared by eval and sweep result files.
std::vector<std::string> result_header();

struct SweepOptions
{
  std::string              axis;  // K | heads | c | lr
  std::vector<double>      values;
  std::vector<std::string> methods;  // empty: the base config's method
};

struct SweepOutcome
{
  fs::path cells_csv;
  fs::path summary_csv;
  CsvTable cells;
  CsvTable summary;
};

SweepOutcome cmd_sweep(RunConfig const &base, SweepOptions const &opts, fs::path const &root);

struct OrderVarianceOptions
{
  std::map<std::string, std::string> checkpoints;  // method -> encoder checkpoint
  std::vector<std::string>           methods = {"mha", "rag", "xrag", "xragk", "pt"};
  std::size_t                        shuffles    = 5;
  std::uint64_t                      shuffle_base = 0;
  bool                               use_probe   = true;
  data::ProbeSpec                    probe;
  std::size_t                        probe_attempts = 20;
  double                             mha_tolerance  = 1e-4;
};

struct OrderVarianceRow
{
  std::string         method;
  std::string         eval_set;  // test | probe
  double              std = 0.0;
  std::vector<double> scores;
  std::string         status;  // PASS / FAIL for mha, VARIES / STABLE otherwise, EXCLUDED for pt
  std::string         note;
};

struct OrderVarianceOutcome
{
  fs::path                      csv;
  std::vector<OrderVarianceRow> rows;
  nlohmann::json                probe_manifest;
};

/// Schema: method,std,seeds,n_shuffles,eval_set,status,scores,note plus provenance.
OrderVarianceOutcome cmd_order_variance(RunConfig const &cfg, OrderVarianceOptions const &opts, fs::path const &root);

struct FlopsOptions
{
  std::vector<std::string> methods = {"rag", "mha", "xrag", "xragk", "pt", "idpg"};
  std::vector<std::size_t> ks      = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<std::size_t> cs      = {0};
  std::vector<std::size_t> heads   = {1, 2, 4};
  std::size_t              m       = 10;
  lm::LmConfig             lm;
  cost::EncoderShape       encoder;
  cost::TokenCounts        tokens{26, 30, 2, 0};
  std::string              dataset;  // optional: measure token counts from it
};

struct FlopsOutcome
{
  fs::path csv;
  CsvTable table;
};

FlopsOutcome cmd_flops(FlopsOptions const &opts, fs::path const &root);

struct ModelShape
{
  std::string name;
  std::size_t d       = 0;  // LM hidden size
  std::size_t d_prime = 0;  // encoder hidden size
  std::size_t layers  = 0;  // LM layers, for LoRA
};

/// Parses "name:d:d_prime:layers".
ModelShape parse_model_shape(std::string const &text);

struct ParamsOptions
{
  std::vector<ModelShape>  models;
  std::vector<std::size_t> mha_heads = {1, 2, 4};
  std::size_t              pt_m      = 10;
  std::size_t              idpg_m    = 1;
  std::size_t              lora_rank = 64;
};

struct ParamsOutcome
{
  fs::path    csv;
  std::string table;  // methods × models, grouped like the appendix table
  CsvTable    rows;
};

ParamsOutcome cmd_params(ParamsOptions const &opts, fs::path const &root);

}  // namespace mharag::harness
