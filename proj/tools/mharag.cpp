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

// Command-line driver: one subcommand per experiment.

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "mharag/error.hpp"
#include "mharag/harness.hpp"

namespace {

using namespace mharag;
using namespace mharag::harness;

struct Common
{
  std::optional<std::string> out;
  bool                       verbose = false;
  bool                       quiet   = false;
};

void add_run_options(CLI::App *cmd, RunConfig &cfg, bool training)
{
  cmd->add_option("--dataset", cfg.dataset, "Dataset directory written by `gen`")->required();
  cmd->add_option("--lm", cfg.lm, "Frozen LM checkpoint written by `pretrain`")->required();
  cmd->add_option("--method", cfg.method, "mha | rag | xrag | xragk | pt | idpg | zeroshot")->capture_default_str();
  cmd->add_option("-K,--k", cfg.k, "Retrieved exemplars")->capture_default_str();
  cmd->add_option("-H,--heads", cfg.heads, "Attention heads (mha only)")->capture_default_str();
  cmd->add_option("-m,--prompt-length", cfg.m, "Soft prompt length (pt, idpg)")->capture_default_str();
  cmd->add_option("-c,--top-c", cfg.c, "Top-c exemplars also rendered as text")->capture_default_str();
  cmd->add_option("--d-prime", cfg.d_prime, "Embedding width d'")->capture_default_str();
  cmd->add_option("--seeds", cfg.seeds, "Seeds, one run each")->capture_default_str();
  if (training)
  {
    cmd->add_option("--lr", cfg.lr, "Learning rate")->capture_default_str();
    cmd->add_option("--lr-grid", cfg.lr_grid, "Pick the learning rate by dev score over this grid");
    cmd->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--batch", cfg.batch, "Batch size")->capture_default_str();
    cmd->add_flag("!--no-leave-one-out", cfg.leave_one_out, "Let training samples retrieve themselves");
  }
}

void setup_logging(Common const &common)
{
  if (common.quiet)
  {
    spdlog::set_level(spdlog::level::warn);
  }
  else if (common.verbose)
  {
    spdlog::set_level(spdlog::level::debug);
  }
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");
}

std::map<std::string, std::string> parse_pairs(std::vector<std::string> const &items)
{
  std::map<std::string, std::string> out;
  for (auto const &item : items)
  {
    auto const eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
    {
      throw ConfigError("expected method=path, got '" + item + "'");
    }
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Retrieval-conditioned soft prompts for a frozen toy LM: data, training, evaluation and cost reports"};
  app.set_version_flag("--version", version());
  app.set_config("--config", "", "TOML config file; command-line flags win over file values");
  app.require_subcommand(1);

  Common common;
  app.add_option("--out", common.out, "Output root (default: $MHARAG_OUT, then ./out)");
  app.add_flag("-v,--verbose", common.verbose, "Debug logging");
  app.add_flag("-q,--quiet", common.quiet, "Warnings and errors only");

  // gen
  GenOptions gen;
  auto      *gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset with its manifest");
  gen_cmd->add_option("--task", gen.task, "cluster | qa | probe")
    ->check(CLI::IsMember({"cluster", "qa", "probe"}))
    ->capture_default_str();
  gen_cmd->add_option("--name", gen.name, "Directory name under datasets/ (default: the task)");
  std::uint64_t gen_seed = 0;
  gen_cmd->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--clusters", gen.cluster.clusters, "cluster: number of clusters")->capture_default_str();
  gen_cmd->add_option("--center-length", gen.cluster.center_length, "cluster: center string length")
    ->capture_default_str();
  gen_cmd->add_option("--edit-rate", gen.cluster.edit_rate, "cluster: per-character edit probability")
    ->capture_default_str();
  gen_cmd->add_option("--train", gen.cluster.train, "cluster: train size")->capture_default_str();
  gen_cmd->add_option("--dev", gen.cluster.dev, "cluster: dev size")->capture_default_str();
  gen_cmd->add_option("--test", gen.cluster.test, "cluster: test size")->capture_default_str();
  gen_cmd->add_option("--entities", gen.qa.entities, "qa: number of entities")->capture_default_str();
  gen_cmd->add_option("--test-facts", gen.qa.test_facts, "qa: held-out test facts")->capture_default_str();
  gen_cmd->add_option("--dev-facts", gen.qa.dev_facts, "qa: held-out dev facts")->capture_default_str();
  gen_cmd->add_option("--items", gen.probe.items, "probe: number of queries")->capture_default_str();

  // pretrain
  PretrainOptions pre;
  auto           *pre_cmd = app.add_subcommand("pretrain", "Pretrain the frozen toy LM on in-context episodes");
  pre_cmd->add_option("--dataset", pre.datasets, "Dataset directories feeding the corpus")->required();
  pre_cmd->add_option("--name", pre.name, "Checkpoint name under lm/")->capture_default_str();
  pre_cmd->add_option("--steps", pre.train.steps, "Optimizer steps")->capture_default_str();
  pre_cmd->add_option("--batch", pre.train.batch, "Batch size")->capture_default_str();
  pre_cmd->add_option("--lr", pre.train.learning_rate, "Peak learning rate")->capture_default_str();
  pre_cmd->add_option("--seed", pre.train.seed, "Seed")->capture_default_str();
  pre_cmd->add_option("--episodes", pre.episodes, "Episodes per dataset")->capture_default_str();
  pre_cmd->add_option("--max-context", pre.max_context, "Most exemplars rendered per episode")
    ->capture_default_str();
  pre_cmd->add_option("--layers", pre.lm.layers, "LM layers")->capture_default_str();
  pre_cmd->add_option("--d-model", pre.lm.d, "LM width")->capture_default_str();
  pre_cmd->add_option("--lm-heads", pre.lm.heads, "LM attention heads")->capture_default_str();

  // train / eval
  RunConfig train_cfg;
  auto     *train_cmd = app.add_subcommand("train", "Train a prompt encoder per seed");
  add_run_options(train_cmd, train_cfg, true);

  RunConfig eval_cfg;
  auto     *eval_cmd = app.add_subcommand("eval", "Evaluate a trained encoder or a text baseline");
  add_run_options(eval_cmd, eval_cfg, false);
  eval_cmd->add_option("--checkpoint", eval_cfg.checkpoint, "Encoder checkpoint (required for trained methods)");
  eval_cmd->add_option("--split", eval_cfg.split, "train | dev | test")
    ->check(CLI::IsMember({"train", "dev", "test"}))
    ->capture_default_str();

  // sweep
  RunConfig    sweep_cfg;
  SweepOptions sweep;
  auto        *sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over one axis, per seed");
  add_run_options(sweep_cmd, sweep_cfg, true);
  sweep_cmd->add_option("--axis", sweep.axis, "K | heads | c | lr")
    ->check(CLI::IsMember({"K", "heads", "c", "lr"}))
    ->required();
  sweep_cmd->add_option("--values", sweep.values, "Axis values")->required();
  sweep_cmd->add_option("--methods", sweep.methods, "Methods to sweep (default: --method)");

  // order-variance
  RunConfig                ov_cfg;
  OrderVarianceOptions     ov;
  std::vector<std::string> ov_ckpts;
  bool                     no_probe = false;
  auto *ov_cmd = app.add_subcommand("order-variance", "Score spread across seeded shuffles of exemplar order");
  add_run_options(ov_cmd, ov_cfg, false);
  ov_cmd->add_option("--checkpoint", ov_ckpts, "method=path for each trained method");
  ov_cmd->add_option("--methods", ov.methods, "Methods to report")->capture_default_str();
  ov_cmd->add_option("--shuffles", ov.shuffles, "Shuffles per method")->capture_default_str();
  ov_cmd->add_option("--shuffle-base", ov.shuffle_base, "First shuffle seed")->capture_default_str();
  ov_cmd->add_option("--probe-attempts", ov.probe_attempts, "Probe regenerations before giving up")
    ->capture_default_str();
  ov_cmd->add_flag("--no-probe", no_probe, "Skip the order-sensitive probe");

  // flops
  FlopsOptions fl;
  auto        *fl_cmd = app.add_subcommand("flops", "Analytical inference FLOPs per method, K, c and H");
  fl_cmd->add_option("--methods", fl.methods, "Methods")->capture_default_str();
  fl_cmd->add_option("-K,--k", fl.ks, "K values")->capture_default_str();
  fl_cmd->add_option("-c,--top-c", fl.cs, "c values")->capture_default_str();
  fl_cmd->add_option("-H,--heads", fl.heads, "MHA head counts")->capture_default_str();
  fl_cmd->add_option("-m,--prompt-length", fl.m, "PT/IDPG prompt length")->capture_default_str();
  fl_cmd->add_option("--question-tokens", fl.tokens.question_tokens, "Rendered question length")
    ->capture_default_str();
  fl_cmd->add_option("--exemplar-tokens", fl.tokens.exemplar_tokens, "Rendered exemplar length")
    ->capture_default_str();
  fl_cmd->add_option("--new-tokens", fl.tokens.new_tokens, "Decoded tokens")->capture_default_str();
  fl_cmd->add_option("--dataset", fl.dataset, "Measure token lengths from this dataset instead");
  fl_cmd->add_option("--layers", fl.lm.layers, "LM layers")->capture_default_str();
  fl_cmd->add_option("--d-model", fl.lm.d, "LM width")->capture_default_str();
  fl_cmd->add_option("--vocab", fl.lm.vocab, "LM vocabulary")->capture_default_str();
  fl_cmd->add_option("--encoder-layers", fl.encoder.layers, "Encoder layers")->capture_default_str();
  fl_cmd->add_option("--encoder-hidden", fl.encoder.hidden, "Encoder width d'")->capture_default_str();

  // params
  ParamsOptions            pa;
  std::vector<std::string> models = {"Qwen3-0.6B:1024:384:28", "Qwen3-4B:2560:384:36",
                                     "Llama3.2-3B-Instruct:3072:384:28"};
  auto *pa_cmd = app.add_subcommand("params", "Trainable parameter counts, methods by models");
  pa_cmd->add_option("--model", models, "name:d:d_prime:layers")->capture_default_str();
  pa_cmd->add_option("--mha-heads", pa.mha_heads, "MHA head counts")->capture_default_str();
  pa_cmd->add_option("--pt-m", pa.pt_m, "PT prompt length")->capture_default_str();
  pa_cmd->add_option("--idpg-m", pa.idpg_m, "IDPG prompt length")->capture_default_str();
  pa_cmd->add_option("--lora-rank", pa.lora_rank, "LoRA rank")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  setup_logging(common);
  tune_allocator();

  try
  {
    fs::path const root = output_root(common.out);
    if (*gen_cmd)
    {
      gen.cluster.seed = gen.qa.seed = gen.probe.seed = gen_seed;
      std::cout << cmd_gen(gen, root).string() << '\n';
    }
    else if (*pre_cmd)
    {
      auto const r = cmd_pretrain(pre, root, [](std::size_t step, double loss) {
        spdlog::info("step {} held-out loss {:.4f}", step, loss);
      });
      std::cout << r.checkpoint.string() << '\n';
      spdlog::info("held-out loss {:.4f} -> {:.4f}", r.initial_loss, r.final_loss);
    }
    else if (*train_cmd)
    {
      auto const r = cmd_train(train_cfg, root);
      for (std::size_t i = 0; i < r.checkpoints.size(); ++i)
      {
        std::cout << r.checkpoints[i].string() << "  best dev " << r.results[i].best_dev << " at epoch "
                  << r.results[i].best_epoch << '\n';
      }
    }
    else if (*eval_cmd)
    {
      auto const r = cmd_eval(eval_cfg, root);
      std::cout << r.csv.string() << '\n';
      for (auto const &row : r.rows)
      {
        std::cout << "seed " << row.seed << "  effective accuracy " << harness::fmt(row.result.effective_accuracy)
                  << "  total FLOPs " << row.cost.total << '\n';
      }
    }
    else if (*sweep_cmd)
    {
      auto const r = cmd_sweep(sweep_cfg, sweep, root);
      std::cout << r.summary.str() << r.summary_csv.string() << '\n';
    }
    else if (*ov_cmd)
    {
      ov.checkpoints = parse_pairs(ov_ckpts);
      ov.use_probe   = !no_probe;
      auto const r   = cmd_order_variance(ov_cfg, ov, root);
      for (auto const &row : r.rows)
      {
        std::cout << row.method << '\t' << row.eval_set << '\t' << harness::fmt(row.std) << '\t' << row.status
                  << (row.note.empty() ? "" : "\t" + row.note) << '\n';
      }
      std::cout << r.csv.string() << '\n';
    }
    else if (*fl_cmd)
    {
      auto const r = cmd_flops(fl, root);
      std::cout << r.csv.string() << '\n';
    }
    else if (*pa_cmd)
    {
      for (auto const &m : models)
      {
        pa.models.push_back(parse_model_shape(m));
      }
      auto const r = cmd_params(pa, root);
      std::cout << r.table << r.csv.string() << '\n';
    }
  }
  catch (mharag::Error const &e)
  {
    spdlog::error("{}", e.what());
    return 2;
  }
  catch (std::exception const &e)
  {
    spdlog::error("unexpected failure: {}", e.what());
    return 1;
  }
  return 0;
}
