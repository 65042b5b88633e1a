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

#include "mharag/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "mharag/checkpoint.hpp"
#include "mharag/error.hpp"
#include "mharag/metrics.hpp"

#ifndef MHARAG_VERSION
#define MHARAG_VERSION "unknown"
#endif

namespace mharag::harness {

using encoders::Method;
using nlohmann::json;

std::string version()
{
  return MHARAG_VERSION;
}

void tune_allocator()
{
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
  mallopt(M_TOP_PAD, 64 * 1024 * 1024);
#endif
}

fs::path output_root(std::optional<std::string> const &flag, std::string const &fallback)
{
  if (flag && !flag->empty())
  {
    return *flag;
  }
  if (char const *env = std::getenv("MHARAG_OUT"); env != nullptr && *env != '\0')
  {
    return env;
  }
  return fallback;
}

// ---------------------------------------------------------------------------
// CSV and metadata

std::string fmt(double value)
{
  if (std::isnan(value))
  {
    return "nan";
  }
  std::ostringstream os;
  os << std::setprecision(17) << value;
  std::string const long_form = os.str();
  // Prefer the shortest form that still round-trips.
  for (int p = 6; p < 17; ++p)
  {
    std::ostringstream s;
    s << std::setprecision(p) << value;
    if (std::stod(s.str()) == value)
    {
      return s.str();
    }
  }
  return long_form;
}

std::string CsvTable::str() const
{
  auto const line = [](std::vector<std::string> const &cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i)
    {
      std::string const &c = cells[i];
      if (i > 0)
      {
        out += ',';
      }
      if (c.find_first_of(",\"\n") != std::string::npos)
      {
        out += '"';
        for (char ch : c)
        {
          out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        }
        out += '"';
      }
      else
      {
        out += c;
      }
    }
    return out + "\n";
  };
  std::string out = line(header);
  for (auto const &r : rows)
  {
    out += line(r);
  }
  return out;
}

void CsvTable::write(fs::path const &path) const
{
  if (path.has_parent_path())
  {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << str();
  if (!out)
  {
    throw IoError("cannot write " + path.string());
  }
}

void write_metadata(fs::path const &dir, std::string const &command, json const &config)
{
  fs::create_directories(dir);
  auto const         now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm            utc{};
  gmtime_r(&now, &utc);
  std::ostringstream ts;
  ts << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
  json const    meta = {{"command", command}, {"created_utc", ts.str()}, {"version", version()}, {"config", config}};
  std::ofstream out(dir / "metadata.json", std::ios::binary | std::ios::trunc);
  out << meta.dump(2) << '\n';
}

namespace {

void write_json(fs::path const &path, json const &j)
{
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out)
  {
    throw IoError("cannot write " + path.string());
  }
}

std::string hash_json(json const &j)
{
  return embedding::to_hex(embedding::fnv1a(j.dump()));
}

std::string join_list(std::vector<std::string> const &items, char sep = ';')
{
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i)
  {
    out += (i > 0 ? std::string(1, sep) : std::string()) + items[i];
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const
{
  Method const mt = encoders::parse_method(method);
  method_config().validate();
  if (mt != Method::Mha && heads != RunConfig{}.heads && heads != 0)
  {
    spdlog::debug("H={} ignored for method {}", heads, method);
  }
  if (seeds.empty())
  {
    throw ConfigError("seeds: at least one seed is required");
  }
  if (split != "train" && split != "dev" && split != "test")
  {
    throw ConfigError("split must be train, dev or test, got '" + split + "'");
  }
  if (encoders::has_encoder(mt) && (epochs == 0 || batch == 0 || !(lr > 0.0) || d_prime < 8))
  {
    throw ConfigError("training needs epochs >= 1, batch >= 1, lr > 0 and d' >= 8");
  }
}

pipeline::MethodConfig RunConfig::method_config() const
{
  pipeline::MethodConfig mc;
  mc.method = encoders::parse_method(method);
  mc.k      = k;
  mc.heads  = heads;
  mc.m      = m;
  mc.c      = c;
  return mc;
}

training::TrainConfig RunConfig::train_config(std::uint64_t seed) const
{
  training::TrainConfig tc;
  tc.method        = method_config();
  tc.d_prime       = d_prime;
  tc.learning_rate = lr;
  tc.epochs        = epochs;
  tc.batch         = batch;
  tc.seed          = seed;
  tc.leave_one_out = leave_one_out;
  tc.lr_grid       = lr_grid;
  return tc;
}

json RunConfig::to_json() const
{
  Method const mt = encoders::parse_method(method);
  json         j  = {
    {"dataset", dataset},
    {"lm", lm},
    {"method", encoders::to_string(mt)},
    {"K", encoders::uses_exemplars(mt) ? k : 0},
    {"H", mt == Method::Mha ? heads : 0},
    {"m", (mt == Method::Pt || mt == Method::Idpg) ? m : 0},
    {"c", c},
    {"d_prime", d_prime},
    {"split", split},
    {"leave_one_out", leave_one_out},
  };
  if (encoders::has_encoder(mt))
  {
    j["lr"]      = lr;
    j["lr_grid"] = lr_grid;
    j["epochs"]  = epochs;
    j["batch"]   = batch;
  }
  if (!checkpoint.empty())
  {
    j["checkpoint"] = checkpoint;
  }
  return j;
}

std::string RunConfig::hash() const
{
  return hash_json(to_json());
}

std::string RunConfig::tag() const
{
  Method const mt = encoders::parse_method(method);
  std::string  t(encoders::to_string(mt));
  switch (mt)
  {
  case Method::Mha:
    t += "-K" + std::to_string(k) + "-H" + std::to_string(heads);
    break;
  case Method::Rag:
  case Method::Xrag:
  case Method::XragK:
    t += "-K" + std::to_string(k);
    break;
  case Method::Pt:
  case Method::Idpg:
    t += "-m" + std::to_string(m);
    break;
  case Method::ZeroShot:
    break;
  }
  if (c > 0)
  {
    t += "-c" + std::to_string(c);
  }
  return t;
}

Workspace open_workspace(RunConfig const &cfg)
{
  if (cfg.dataset.empty())
  {
    throw ConfigError("no dataset given (pass --dataset <dir> produced by `mharag gen`)");
  }
  if (!fs::exists(cfg.dataset))
  {
    throw IoError("dataset directory " + cfg.dataset + " does not exist (run `mharag gen` first)");
  }
  if (cfg.lm.empty())
  {
    throw ConfigError("no LM checkpoint given (pass --lm <file> produced by `mharag pretrain`)");
  }
  if (!fs::exists(cfg.lm))
  {
    throw IoError("LM checkpoint " + cfg.lm + " does not exist (run `mharag pretrain` first)");
  }
  Workspace ws;
  ws.dataset       = data::read_dataset(cfg.dataset);
  ws.manifest_hash = data::manifest_hash(ws.dataset.manifest);
  ws.dataset_name  = fs::path(cfg.dataset).lexically_normal().filename().string();
  if (ws.dataset_name.empty())
  {
    ws.dataset_name = fs::path(cfg.dataset).lexically_normal().parent_path().filename().string();
  }
  ws.weights = lm::LmWeights::load(cfg.lm);
  ws.store   = std::make_unique<retrieval::ExemplarStore>(ws.dataset.train, ws.dataset.mode,
                                                        embedding::NgramEmbedder{cfg.d_prime, 0});
  return ws;
}

cost::TokenCounts measure_tokens(retrieval::ExemplarStore const &store, std::span<data::Exemplar const> items)
{
  cost::TokenCounts t;
  t.store_size = store.size();
  if (!items.empty())
  {
    std::size_t q = 0;
    for (auto const &e : items)
    {
      q += lm::tokenize(lm::question_text(e.question)).size() + 2;  // BOS, ANS
    }
    t.question_tokens = (q + items.size() - 1) / items.size();
  }
  if (store.size() > 0)
  {
    std::size_t x = 0;
    for (auto const &e : store.exemplars())
    {
      x += lm::tokenize(lm::exemplar_text(e)).size() + 1;  // SEP
    }
    t.exemplar_tokens = (x + store.size() - 1) / store.size();
  }
  return t;
}

// ---------------------------------------------------------------------------
// gen / pretrain

fs::path cmd_gen(GenOptions const &opts, fs::path const &root)
{
  std::string const name = opts.name.empty() ? opts.task : opts.name;
  fs::path const    dir  = root / "datasets" / name;
  if (opts.task == "cluster")
  {
    data::write_dataset(data::gen_cluster_classification(opts.cluster), dir);
  }
  else if (opts.task == "qa")
  {
    data::write_dataset(data::gen_doc_qa(opts.qa), dir);
  }
  else if (opts.task == "probe")
  {
    auto               probe = data::gen_order_sensitive_probe(opts.probe);
    data::SplitDataset ds;
    ds.mode     = retrieval::Mode::Tanimoto;
    ds.train    = probe.store;
    ds.test     = probe.queries;
    ds.manifest = probe.manifest;
    data::write_dataset(ds, dir);
  }
  else
  {
    throw ConfigError("unknown task '" + opts.task + "' (expected cluster, qa or probe)");
  }
  write_metadata(dir, "gen", {{"task", opts.task}, {"name", name}});
  return dir;
}

PretrainOutcome cmd_pretrain(PretrainOptions const &opts, fs::path const &root, lm::ProgressFn const &progress)
{
  if (opts.datasets.empty())
  {
    throw ConfigError("pretraining needs at least one --dataset");
  }
  std::vector<lm::PromptedInput> corpus;
  json                           sources = json::array();
  for (std::size_t i = 0; i < opts.datasets.size(); ++i)
  {
    auto const ds   = data::read_dataset(opts.datasets[i]);
    auto       part = data::build_pretraining_corpus(ds.train, ds.mode,
                                                     {opts.episodes, opts.max_context, opts.train.seed + i});
    corpus.insert(corpus.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    sources.push_back({{"dataset", opts.datasets[i]}, {"manifest_hash", data::manifest_hash(ds.manifest)}});
  }

  CsvTable log{{"step", "loss"}, {}};
  auto     result = lm::pretrain_toy(opts.lm, corpus, opts.train, [&](std::size_t step, double loss) {
    log.rows.push_back({std::to_string(step), fmt(loss)});
    if (progress)
    {
      progress(step, loss);
    }
  });

  fs::path const dir  = root / "lm";
  fs::path const ckpt = dir / (opts.name + ".ckpt");
  fs::create_directories(dir);
  result.weights.save(ckpt);
  log.write(dir / (opts.name + "-loss.csv"));
  json const summary = {
    {"name", opts.name},
    {"sources", sources},
    {"steps", opts.train.steps},
    {"batch", opts.train.batch},
    {"lr", opts.train.learning_rate},
    {"seed", opts.train.seed},
    {"episodes_per_dataset", opts.episodes},
    {"initial_heldout_loss", result.initial_heldout_loss},
    {"final_heldout_loss", result.final_heldout_loss},
    {"weights_checksum", embedding::to_hex(result.weights.checksum())},
    {"version", version()},
  };
  write_json(dir / (opts.name + ".json"), summary);
  write_metadata(dir, "pretrain", summary);
  return {ckpt, result.initial_heldout_loss, result.final_heldout_loss};
}

// ---------------------------------------------------------------------------
// train / eval

namespace {

data::Dataset const &split_of(data::SplitDataset const &ds, std::string const &split)
{
  if (split == "train")
  {
    return ds.train;
  }
  if (split == "dev")
  {
    return ds.dev;
  }
  return ds.test;
}

std::vector<std::string> result_cells(RunConfig const &cfg, Workspace const &ws, std::uint64_t seed,
                                      EvalRow const &row, std::size_t n)
{
  Method const mt = encoders::parse_method(cfg.method);
  auto const  &c  = row.result.counts;
  std::string  ratio;
  if (mt == Method::Rag)
  {
    ratio = "1";
  }
  else if (encoders::uses_exemplars(mt) && row.cost.budget.m > 0)
  {
    ratio = fmt(encoders::compression_ratio(cfg.k * measure_tokens(*ws.store, {}).exemplar_tokens,
                                            row.cost.budget.m));
  }
  return {version(),
          cfg.hash(),
          ws.manifest_hash,
          std::to_string(seed),
          ws.dataset_name,
          cfg.split,
          std::string(encoders::to_string(mt)),
          encoders::uses_exemplars(mt) ? std::to_string(cfg.k) : "",
          mt == Method::Mha ? std::to_string(cfg.heads) : "",
          std::to_string(row.cost.budget.m),
          std::to_string(cfg.c),
          std::to_string(n),
          std::to_string(c.tp),
          std::to_string(c.fp),
          std::to_string(c.tn),
          std::to_string(c.fn),
          fmt(row.result.effective_accuracy),
          std::to_string(row.result.skipped),
          std::to_string(row.cost.encoder_flops),
          std::to_string(row.cost.projector_flops),
          std::to_string(row.cost.lm_prefill_flops),
          std::to_string(row.cost.lm_decode_flops),
          std::to_string(row.cost.total),
          ratio};
}

EvalRow evaluate_one(RunConfig const &cfg, Workspace const &ws, encoders::Adapter const *adapter,
                     std::uint64_t seed)
{
  auto const  mc    = cfg.method_config();
  auto const &items = split_of(ws.dataset, cfg.split);
  auto const  cache = pipeline::retrieve_all(*ws.store, items, mc.retrieve_count(), cfg.split == "train");
  EvalRow     row;
  row.seed   = seed;
  row.result = pipeline::evaluate(ws.weights, mc, adapter, *ws.store, items, cache);
  cost::CostQuery q{mc.method, mc.k, mc.c, mc.heads, mc.m, measure_tokens(*ws.store, items)};
  row.cost = cost::flops_inference(ws.weights.config, {2, cfg.d_prime, lm::kVocab}, q);
  return row;
}

}  // namespace

std::vector<std::string> result_header()
{
  return {"version",       "config_hash",     "manifest_hash",    "seed",           "dataset",
          "split",         "method",          "K",                "H",              "m",
          "c",             "n",               "tp",               "fp",             "tn",
          "fn",            "eff_acc",         "skipped",          "encoder_flops",  "projector_flops",
          "lm_prefill_flops", "lm_decode_flops", "total_flops", "compression_ratio"};
}

TrainOutcome cmd_train(RunConfig const &cfg, fs::path const &root)
{
  cfg.validate();
  if (!encoders::has_encoder(encoders::parse_method(cfg.method)))
  {
    throw ConfigError("method " + cfg.method + " has no trainable encoder; use `mharag eval` directly");
  }
  Workspace    ws = open_workspace(cfg);
  TrainOutcome out;
  out.run_dir = root / "runs" / ws.dataset_name / cfg.tag();
  for (std::uint64_t seed : cfg.seeds)
  {
    auto const     tc  = cfg.train_config(seed);
    fs::path const dir = out.run_dir / ("seed" + std::to_string(seed));
    fs::create_directories(dir);
    training::TrainConfig used = tc;
    training::TrainResult result;
    if (!cfg.lr_grid.empty())
    {
      auto     sweep = training::lr_sweep(tc, *ws.store, ws.dataset.train, ws.dataset.dev, ws.weights);
      CsvTable table{{"lr", "best_dev_eff_acc", "error", "seed", "config_hash", "manifest_hash", "version"}, {}};
      for (auto const &p : sweep.points)
      {
        table.rows.push_back({fmt(p.learning_rate), p.best_dev ? fmt(*p.best_dev) : "", p.error,
                              std::to_string(seed), cfg.hash(), ws.manifest_hash, version()});
      }
      table.write(dir / "lr_sweep.csv");
      result             = *sweep.points[sweep.best_index].result;
      used.learning_rate = sweep.best_lr;
    }
    else
    {
      result = training::train_adapter(tc, *ws.store, ws.dataset.train, ws.dataset.dev, ws.weights);
    }
    json const extra = {{"seed", seed},
                        {"config_hash", cfg.hash()},
                        {"manifest_hash", ws.manifest_hash},
                        {"lr", used.learning_rate},
                        {"best_epoch", result.best_epoch},
                        {"K", cfg.k},
                        {"c", cfg.c}};
    fs::path const ckpt = dir / "adapter.ckpt";
    encoders::save_adapter(result.best, ckpt, extra);
    training::write_history_csv(dir / "history.csv", used, result.history);
    json resolved             = cfg.to_json();
    resolved["seed"]          = seed;
    resolved["config_hash"]   = cfg.hash();
    resolved["manifest_hash"] = ws.manifest_hash;
    resolved["selected_lr"]   = used.learning_rate;
    write_json(dir / "config.json", resolved);
    write_metadata(dir, "train", resolved);
    out.checkpoints.push_back(ckpt);
    out.results.push_back(std::move(result));
  }
  return out;
}

EvalOutcome cmd_eval(RunConfig const &cfg, fs::path const &root)
{
  cfg.validate();
  Method const mt = encoders::parse_method(cfg.method);
  std::optional<encoders::Adapter> adapter;
  std::vector<std::uint64_t>       seeds = cfg.seeds;
  if (encoders::has_encoder(mt))
  {
    if (cfg.checkpoint.empty())
    {
      throw ConfigError("method " + cfg.method + " needs --checkpoint (an adapter written by `mharag train`)");
    }
    if (!fs::exists(cfg.checkpoint))
    {
      throw IoError("encoder checkpoint " + cfg.checkpoint + " does not exist");
    }
    adapter = encoders::load_adapter(cfg.checkpoint);
    if (adapter->method != mt)
    {
      throw ConfigError("checkpoint " + cfg.checkpoint + " holds a " +
                        std::string(encoders::to_string(adapter->method)) + " encoder, not " + cfg.method);
    }
    auto const meta = read_checkpoint(cfg.checkpoint).meta;
    seeds           = {meta.value("seed", cfg.seeds.front())};
  }
  Workspace   ws = open_workspace(cfg);
  EvalOutcome out;
  CsvTable    table{result_header(), {}};
  auto const &items = split_of(ws.dataset, cfg.split);
  for (std::uint64_t seed : seeds)
  {
    EvalRow row = evaluate_one(cfg, ws, adapter ? &*adapter : nullptr, seed);
    table.rows.push_back(result_cells(cfg, ws, seed, row, items.size()));
    out.rows.push_back(std::move(row));
  }
  std::string leaf = cfg.split;
  if (adapter)
  {
    leaf += "-seed" + std::to_string(seeds.front());
  }
  fs::path const dir = root / "results" / ws.dataset_name / cfg.tag() / leaf;
  out.csv            = dir / "results.csv";
  table.write(out.csv);
  write_json(dir / "config.json", cfg.to_json());
  write_metadata(dir, "eval", cfg.to_json());
  return out;
}

// ---------------------------------------------------------------------------
// sweep

SweepOutcome cmd_sweep(RunConfig const &base, SweepOptions const &opts, fs::path const &root)
{
  if (opts.values.empty())
  {
    throw ConfigError("sweep needs at least one value");
  }
  if (opts.axis != "K" && opts.axis != "heads" && opts.axis != "c" && opts.axis != "lr")
  {
    throw ConfigError("sweep axis must be K, heads, c or lr, got '" + opts.axis + "'");
  }
  std::vector<std::string> methods = opts.methods.empty() ? std::vector<std::string>{base.method} : opts.methods;
  for (auto const &name : methods)
  {
    Method const mt = encoders::parse_method(name);
    if (opts.axis == "heads" && mt != Method::Mha)
    {
      throw ConfigError("the heads axis only applies to mha, not " + name);
    }
    if ((opts.axis == "K" || opts.axis == "c") && !encoders::uses_exemplars(mt))
    {
      throw ConfigError("the " + opts.axis + " axis needs a retrieval method, not " + name);
    }
    if (opts.axis == "lr" && !encoders::has_encoder(mt))
    {
      throw ConfigError("the lr axis needs a trainable method, not " + name);
    }
  }

  RunConfig    probe_cfg = base;
  Workspace    ws        = open_workspace(probe_cfg);
  SweepOutcome out;
  out.cells.header = result_header();
  out.cells.header.insert(out.cells.header.end(), {"axis", "value", "error"});
  out.summary.header = {"axis",      "value",       "method",      "mean_eff_acc", "std_eff_acc", "n_seeds",
                        "total_flops", "config_hash", "manifest_hash", "version"};

  for (auto const &name : methods)
  {
    for (double value : opts.values)
    {
      RunConfig cfg = base;
      cfg.method    = name;
      if (opts.axis == "K")
      {
        cfg.k = static_cast<std::size_t>(value);
      }
      else if (opts.axis == "heads")
      {
        cfg.heads = static_cast<std::size_t>(value);
      }
      else if (opts.axis == "c")
      {
        cfg.c = static_cast<std::size_t>(value);
      }
      else
      {
        cfg.lr = value;
      }
      std::vector<double> scores;
      std::uint64_t       flops = 0;
      for (std::uint64_t seed : cfg.seeds)
      {
        std::vector<std::string> cells;
        try
        {
          cfg.validate();
          Method const                     mt = encoders::parse_method(cfg.method);
          std::optional<encoders::Adapter> adapter;
          if (encoders::has_encoder(mt))
          {
            adapter = training::train_adapter(cfg.train_config(seed), *ws.store, ws.dataset.train, ws.dataset.dev,
                                              ws.weights)
                        .best;
          }
          EvalRow row = evaluate_one(cfg, ws, adapter ? &*adapter : nullptr, seed);
          scores.push_back(row.result.effective_accuracy);
          flops = row.cost.total;
          cells = result_cells(cfg, ws, seed, row, split_of(ws.dataset, cfg.split).size());
          cells.insert(cells.end(), {opts.axis, fmt(value), ""});
        }
        catch (Error const &e)
        {
          cells.assign(result_header().size(), "");
          cells[0] = version();
          cells[1] = cfg.hash();
          cells[2] = ws.manifest_hash;
          cells[3] = std::to_string(seed);
          cells[6] = cfg.method;
          cells.insert(cells.end(), {opts.axis, fmt(value), e.what()});
          spdlog::warn("sweep cell {}={} seed {} failed: {}", opts.axis, fmt(value), seed, e.what());
        }
        out.cells.rows.push_back(std::move(cells));
      }
      double mean = 0.0;
      for (double s : scores)
      {
        mean += s;
      }
      out.summary.rows.push_back({opts.axis, fmt(value), cfg.method,
                                  scores.empty() ? "" : fmt(mean / static_cast<double>(scores.size())),
                                  scores.empty() ? "" : fmt(metrics::population_std(scores)),
                                  std::to_string(scores.size()), std::to_string(flops), cfg.hash(), ws.manifest_hash,
                                  version()});
    }
  }
  fs::path const dir = root / "results" / ws.dataset_name / ("sweep-" + opts.axis);
  out.cells_csv      = dir / "cells.csv";
  out.summary_csv    = dir / "summary.csv";
  out.cells.write(out.cells_csv);
  out.summary.write(out.summary_csv);
  json config         = base.to_json();
  config["axis"]      = opts.axis;
  config["values"]    = opts.values;
  config["methods"]   = methods;
  write_json(dir / "config.json", config);
  write_metadata(dir, "sweep", config);
  return out;
}

// ---------------------------------------------------------------------------
// order variance

OrderVarianceOutcome cmd_order_variance(RunConfig const &cfg, OrderVarianceOptions const &opts, fs::path const &root)
{
  if (opts.shuffles < 2)
  {
    throw ConfigError("order variance needs at least 2 shuffles");
  }
  Workspace  ws    = open_workspace(cfg);
  auto const seeds = metrics::shuffle_seeds(opts.shuffles, opts.shuffle_base);

  std::map<std::string, encoders::Adapter> adapters;
  for (auto const &name : opts.methods)
  {
    Method const mt = encoders::parse_method(name);
    if (!encoders::has_encoder(mt) || !encoders::uses_exemplars(mt))
    {
      continue;
    }
    auto const it = opts.checkpoints.find(std::string(encoders::to_string(mt)));
    if (it == opts.checkpoints.end())
    {
      throw ConfigError("order variance for " + name + " needs a checkpoint (--checkpoint " + name + "=<file>)");
    }
    if (!fs::exists(it->second))
    {
      throw IoError("encoder checkpoint " + it->second + " does not exist");
    }
    adapters.emplace(std::string(encoders::to_string(mt)), encoders::load_adapter(it->second));
  }

  auto const config_for = [&](std::string const &name) {
    RunConfig c = cfg;
    c.method    = name;
    return c;
  };
  auto const variance = [&](std::string const &name, retrieval::ExemplarStore const &store,
                            std::span<data::Exemplar const> items) {
    RunConfig const c  = config_for(name);
    auto const      mc = c.method_config();
    auto const      cache = pipeline::retrieve_all(store, items, mc.retrieve_count(), false);
    auto const      key   = std::string(encoders::to_string(mc.method));
    encoders::Adapter const *adapter = adapters.count(key) ? &adapters.at(key) : nullptr;
    return metrics::order_variance(
      [&](std::uint64_t s) {
        return pipeline::evaluate(ws.weights, mc, adapter, store, items, cache, {s, {}}).effective_accuracy;
      },
      seeds);
  };

  OrderVarianceOutcome out;
  auto const push = [&](std::string const &name, std::string const &set, metrics::OrderVarianceResult const &r) {
    Method const       mt = encoders::parse_method(name);
    OrderVarianceRow   row{std::string(encoders::to_string(mt)), set, r.std, r.scores, "", ""};
    if (mt == Method::Mha)
    {
      row.status = r.std <= opts.mha_tolerance ? "PASS" : "FAIL";
    }
    else
    {
      row.status = r.std > 0.0 ? "VARIES" : "STABLE";
    }
    out.rows.push_back(std::move(row));
  };

  for (auto const &name : opts.methods)
  {
    Method const mt = encoders::parse_method(name);
    if (!encoders::uses_exemplars(mt))
    {
      out.rows.push_back({std::string(encoders::to_string(mt)), "-", 0.0, {}, "EXCLUDED",
                          "prompt does not depend on retrieved exemplars"});
      continue;
    }
    push(name, "test", variance(name, *ws.store, ws.dataset.test));
  }

  if (opts.use_probe)
  {
    std::vector<std::string> sensitive;
    for (auto const &name : opts.methods)
    {
      Method const mt = encoders::parse_method(name);
      if (encoders::uses_exemplars(mt) && mt != Method::Mha)
      {
        sensitive.push_back(name);
      }
    }
    auto const make_store = [&](data::Probe const &p) {
      return retrieval::ExemplarStore(p.store, retrieval::Mode::Tanimoto, embedding::NgramEmbedder{cfg.d_prime, 0});
    };
    data::Probe probe;
    try
    {
      probe = data::find_order_sensitive_probe(
        opts.probe,
        [&](data::Probe const &candidate) {
          auto const store = make_store(candidate);
          for (auto const &name : sensitive)
          {
            if (!(variance(name, store, candidate.queries).std > 0.0))
            {
              return false;
            }
          }
          return true;
        },
        opts.probe_attempts);
    }
    catch (ConfigError const &e)
    {
      probe                      = data::gen_order_sensitive_probe(opts.probe);
      probe.manifest["attempts"] = opts.probe_attempts;
      probe.manifest["error"]    = e.what();
    }
    out.probe_manifest = probe.manifest;
    auto const store   = make_store(probe);
    for (auto const &name : opts.methods)
    {
      if (encoders::uses_exemplars(encoders::parse_method(name)))
      {
        push(name, "probe", variance(name, store, probe.queries));
      }
    }
    data::SplitDataset pds;
    pds.train    = probe.store;
    pds.test     = probe.queries;
    pds.manifest = probe.manifest;
    data::write_dataset(pds, root / "results" / ws.dataset_name / "order_variance_probe");
  }

  CsvTable table{{"method", "std", "seeds", "n_shuffles", "eval_set", "status", "scores", "note", "version",
                  "config_hash", "manifest_hash"},
                 {}};
  std::vector<std::string> seed_text;
  for (auto s : seeds)
  {
    seed_text.push_back(std::to_string(s));
  }
  std::string const probe_hash = data::manifest_hash(out.probe_manifest);
  for (auto const &r : out.rows)
  {
    std::vector<std::string> scores;
    for (double s : r.scores)
    {
      scores.push_back(fmt(s));
    }
    bool const excluded = r.status == "EXCLUDED";
    table.rows.push_back({r.method, excluded ? "" : fmt(r.std), join_list(seed_text),
                          std::to_string(opts.shuffles), r.eval_set, r.status, join_list(scores), r.note, version(),
                          config_for(r.method).hash(), r.eval_set == "probe" ? probe_hash : ws.manifest_hash});
  }
  fs::path const dir = root / "results" / ws.dataset_name;
  out.csv            = dir / "order_variance.csv";
  table.write(out.csv);
  json config          = cfg.to_json();
  config["methods"]    = opts.methods;
  config["shuffles"]   = opts.shuffles;
  config["checkpoints"] = opts.checkpoints;
  write_metadata(dir / "order_variance_meta", "order-variance", config);
  return out;
}

// ---------------------------------------------------------------------------
// flops / params

FlopsOutcome cmd_flops(FlopsOptions const &opts, fs::path const &root)
{
  cost::TokenCounts tokens        = opts.tokens;
  std::string       manifest_hash = "none";
  if (!opts.dataset.empty())
  {
    auto const ds = data::read_dataset(opts.dataset);
    retrieval::ExemplarStore store(ds.train, ds.mode, embedding::NgramEmbedder{opts.encoder.hidden, 0});
    tokens            = measure_tokens(store, ds.test);
    tokens.new_tokens = opts.tokens.new_tokens;
    manifest_hash     = data::manifest_hash(ds.manifest);
  }
  json const config = {
    {"methods", opts.methods},
    {"K", opts.ks},
    {"c", opts.cs},
    {"H", opts.heads},
    {"m", opts.m},
    {"lm", {{"layers", opts.lm.layers}, {"d", opts.lm.d}, {"vocab", opts.lm.vocab}}},
    {"encoder", {{"layers", opts.encoder.layers}, {"hidden", opts.encoder.hidden}, {"vocab", opts.encoder.vocab}}},
    {"tokens",
     {{"question", tokens.question_tokens}, {"exemplar", tokens.exemplar_tokens}, {"new", tokens.new_tokens}}},
    {"dataset", opts.dataset},
  };
  std::string const hash = hash_json(config);

  FlopsOutcome out;
  out.table.header = {"method",        "K",           "c",
                      "H",             "m",           "question_tokens",
                      "exemplar_tokens", "encoder_flops", "projector_flops",
                      "lm_prefill_flops", "lm_decode_flops", "total_flops",
                      "retrieval_flops", "version",     "config_hash",
                      "manifest_hash", "seed"};
  for (auto const &name : opts.methods)
  {
    Method const mt = encoders::parse_method(name);
    std::vector<std::size_t> heads = mt == Method::Mha ? opts.heads : std::vector<std::size_t>{0};
    for (std::size_t h : heads)
    {
      for (std::size_t k : opts.ks)
      {
        for (std::size_t c : opts.cs)
        {
          bool const hybrid_ok = mt == Method::Mha || mt == Method::Xrag || mt == Method::XragK;
          if (c > k || (c > 0 && !hybrid_ok))
          {
            continue;
          }
          cost::CostQuery q{mt, k, c, std::max<std::size_t>(h, 1), opts.m, tokens};
          auto const      r = cost::flops_inference(opts.lm, opts.encoder, q);
          out.table.rows.push_back({std::string(encoders::to_string(mt)), std::to_string(k), std::to_string(c),
                                    mt == Method::Mha ? std::to_string(h) : "", std::to_string(r.budget.m),
                                    std::to_string(tokens.question_tokens), std::to_string(tokens.exemplar_tokens),
                                    std::to_string(r.encoder_flops), std::to_string(r.projector_flops),
                                    std::to_string(r.lm_prefill_flops), std::to_string(r.lm_decode_flops),
                                    std::to_string(r.total), std::to_string(r.retrieval_flops), version(), hash,
                                    manifest_hash, "0"});
        }
      }
    }
  }
  fs::path const dir = root / "results" / "flops";
  out.csv            = dir / "flops.csv";
  out.table.write(out.csv);
  write_json(dir / "config.json", config);
  write_metadata(dir, "flops", config);
  return out;
}

ModelShape parse_model_shape(std::string const &text)
{
  std::vector<std::string> parts;
  std::stringstream        ss(text);
  std::string              part;
  while (std::getline(ss, part, ':'))
  {
    parts.push_back(part);
  }
  if (parts.size() != 4 || parts[0].empty())
  {
    throw ConfigError("model shape '" + text + "' must look like name:d:d_prime:layers");
  }
  try
  {
    return {parts[0], std::stoul(parts[1]), std::stoul(parts[2]), std::stoul(parts[3])};
  }
  catch (std::exception const &)
  {
    throw ConfigError("model shape '" + text + "' has a non-numeric size");
  }
}

namespace {

std::string human_count(std::uint64_t n)
{
  auto const scaled = [](double v, char const *unit) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    std::string s = os.str();
    while (s.back() == '0')
    {
      s.pop_back();
    }
    if (s.back() == '.')
    {
      s.pop_back();
    }
    return s + unit;
  };
  if (n >= 1000000)
  {
    return scaled(static_cast<double>(n) / 1e6, "M");
  }
  if (n >= 1000)
  {
    return scaled(static_cast<double>(n) / 1e3, "K");
  }
  return std::to_string(n);
}

}  // namespace

ParamsOutcome cmd_params(ParamsOptions const &opts, fs::path const &root)
{
  if (opts.models.empty())
  {
    throw ConfigError("params needs at least one --model name:d:d_prime:layers");
  }
  struct Line
  {
    std::string group, label;
    std::function<cost::ParamQuery(ModelShape const &)> query;
  };
  std::vector<Line> lines;
  lines.push_back({"Retrieval-Based Baselines", "xRAG",
                   [](ModelShape const &s) { return cost::ParamQuery{"xrag", s.d, s.d_prime, 0, 0, 0, {}}; }});
  lines.push_back({"Retrieval-Based Baselines", "xRAG-K",
                   [](ModelShape const &s) { return cost::ParamQuery{"xragk", s.d, s.d_prime, 0, 0, 0, {}}; }});
  for (std::size_t h : opts.mha_heads)
  {
    lines.push_back({"Retrieval-Based Baselines", "MHA-RAG (m=" + std::to_string(h) + ")",
                     [h](ModelShape const &s) { return cost::ParamQuery{"mha", s.d, s.d_prime, h, 0, 0, {}}; }});
  }
  std::size_t const pt_m = opts.pt_m, idpg_m = opts.idpg_m, rank = opts.lora_rank;
  lines.push_back({"PEFT Baselines", "PT (m=" + std::to_string(pt_m) + ")",
                   [pt_m](ModelShape const &s) { return cost::ParamQuery{"pt", s.d, 0, 0, pt_m, 0, {}}; }});
  lines.push_back({"PEFT Baselines", "IDPG (m=" + std::to_string(idpg_m) + ")", [idpg_m](ModelShape const &s) {
                     return cost::ParamQuery{"idpg", s.d, s.d_prime, 0, idpg_m, 0, {}};
                   }});
  lines.push_back({"PEFT Baselines", "LoRA (r=" + std::to_string(rank) + ")", [rank](ModelShape const &s) {
                     lm::LmConfig shape;
                     shape.layers = s.layers;
                     shape.d      = s.d;
                     shape.heads  = 1;
                     return cost::ParamQuery{"lora", s.d, 0, 0, 0, rank, cost::lora_attention_shapes(shape)};
                   }});

  ParamsOutcome out;
  out.rows.header = {"group", "method", "model", "d", "d_prime", "layers", "params", "version", "config_hash"};
  json models     = json::array();
  for (auto const &m : opts.models)
  {
    models.push_back({{"name", m.name}, {"d", m.d}, {"d_prime", m.d_prime}, {"layers", m.layers}});
  }
  json const config = {{"models", models},
                       {"mha_heads", opts.mha_heads},
                       {"pt_m", opts.pt_m},
                       {"idpg_m", opts.idpg_m},
                       {"lora_rank", opts.lora_rank}};
  std::string const hash = hash_json(config);

  std::vector<std::size_t> widths{std::string("Training Methods").size()};
  for (auto const &l : lines)
  {
    widths[0] = std::max({widths[0], l.label.size(), l.group.size() + 2});
  }
  std::vector<std::vector<std::string>> cells;
  for (auto const &l : lines)
  {
    std::vector<std::string> row{l.label};
    for (auto const &m : opts.models)
    {
      std::uint64_t const n = cost::count_trainable(l.query(m));
      row.push_back(human_count(n));
      out.rows.rows.push_back({l.group, l.label, m.name, std::to_string(m.d), std::to_string(m.d_prime),
                               std::to_string(m.layers), std::to_string(n), version(), hash});
    }
    cells.push_back(std::move(row));
  }
  for (std::size_t j = 0; j < opts.models.size(); ++j)
  {
    std::size_t w = opts.models[j].name.size();
    for (auto const &r : cells)
    {
      w = std::max(w, r[j + 1].size());
    }
    widths.push_back(w);
  }
  auto const render_row = [&](std::vector<std::string> const &r) {
    std::ostringstream os;
    os << "| ";
    for (std::size_t j = 0; j < r.size(); ++j)
    {
      os << std::left << std::setw(static_cast<int>(widths[j])) << r[j] << " |" << (j + 1 < r.size() ? " " : "");
    }
    return os.str() + "\n";
  };
  std::vector<std::string> head{"Training Methods"};
  for (auto const &m : opts.models)
  {
    head.push_back(m.name);
  }
  std::string table = render_row(head);
  std::string rule  = "|";
  for (std::size_t w : widths)
  {
    rule += std::string(w + 2, '-') + "|";
  }
  table += rule + "\n";
  std::string group;
  for (std::size_t i = 0; i < lines.size(); ++i)
  {
    if (lines[i].group != group)
    {
      group = lines[i].group;
      std::vector<std::string> g{"*" + group + "*"};
      g.resize(head.size());
      table += render_row(g);
    }
    table += render_row(cells[i]);
  }
  out.table = table;

  fs::path const dir = root / "results" / "params";
  out.csv            = dir / "params.csv";
  out.rows.write(out.csv);
  std::ofstream md(dir / "params.md", std::ios::binary | std::ios::trunc);
  md << out.table;
  write_metadata(dir, "params", config);
  return out;
}

}  // namespace mharag::harness
