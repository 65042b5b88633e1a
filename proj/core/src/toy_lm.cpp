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

#include "mharag/toy_lm.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mharag/checkpoint.hpp"
#include "mharag/error.hpp"
#include "mharag/numerics/adam.hpp"

namespace mharag::lm {

namespace {

constexpr std::size_t kPerLayer = 12;

std::size_t layer_slot(std::size_t layer, std::size_t k)
{
  return 2 + layer * kPerLayer + k;
}

void append(std::vector<int> &dst, std::vector<int> const &src)
{
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

void LmConfig::validate() const
{
  if (layers == 0 || d == 0 || heads == 0 || vocab == 0 || max_positions == 0)
  {
    throw ConfigError("LM config sizes must be positive");
  }
  if (d % heads != 0)
  {
    throw ConfigError("LM hidden size " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (vocab < static_cast<std::size_t>(kVocab))
  {
    throw ConfigError("LM vocab must cover the 256 bytes and 5 specials");
  }
}

std::vector<int> tokenize(std::string_view text)
{
  std::vector<int> out;
  out.reserve(text.size());
  for (char c : text)
  {
    out.push_back(static_cast<unsigned char>(c));
  }
  return out;
}

std::string detokenize(std::span<int const> tokens)
{
  std::string out;
  for (int t : tokens)
  {
    if (t >= 0 && t < 256)
    {
      out.push_back(static_cast<char>(t));
    }
  }
  return out;
}

std::string exemplar_text(data::Exemplar const &e)
{
  return "Q: " + e.question + "\nA: " + e.answer + "\n";
}

std::string question_text(std::string_view question)
{
  return "Q: " + std::string(question) + "\nA:";
}

RenderedInput render(PromptedInput const &input, LmConfig const &config, LossMask mask)
{
  RenderedInput out;
  out.m           = input.prompt_length;
  out.breakdown.m = input.prompt_length;
  out.tokens.push_back(kBos);
  for (auto const &e : input.context)
  {
    auto const t = tokenize(exemplar_text(e));
    append(out.tokens, t);
    out.tokens.push_back(kSep);
    out.breakdown.context_tokens += t.size() + 1;
  }
  auto const q = tokenize(question_text(input.question));
  append(out.tokens, q);
  out.breakdown.question_tokens = q.size();
  out.tokens.push_back(kAns);
  std::size_t const ans_pos = out.m + out.tokens.size() - 1;
  if (input.answer)
  {
    auto const a = tokenize(*input.answer);
    append(out.tokens, a);
    out.tokens.push_back(kEos);
    out.breakdown.answer_tokens = a.size();
    out.breakdown.eos           = 1;
  }
  if (out.length() > config.max_positions)
  {
    std::ostringstream os;
    os << "rendered input of " << out.length() << " positions exceeds max_positions " << config.max_positions
       << " (m=" << out.breakdown.m << ", bos=1, context=" << out.breakdown.context_tokens
       << ", question=" << out.breakdown.question_tokens << ", ans=1, answer=" << out.breakdown.answer_tokens
       << ", eos=" << out.breakdown.eos << ")";
    throw LengthError(os.str());
  }
  out.targets.assign(out.length(), -1);
  if (mask == LossMask::AllTokens)
  {
    for (std::size_t p = out.m; p + 1 < out.length(); ++p)
    {
      out.targets[p] = out.tokens[p - out.m + 1];
    }
  }
  else if (input.answer)
  {
    for (std::size_t p = ans_pos; p + 1 < out.length(); ++p)
    {
      out.targets[p] = out.tokens[p - out.m + 1];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weights

LmWeights LmWeights::init(LmConfig const &config, std::mt19937_64 &rng)
{
  config.validate();
  std::size_t const d  = config.d;
  std::size_t const ff = config.ff_dim();
  double const      s  = 0.02;
  double const      sr = 0.02 / std::sqrt(2.0 * static_cast<double>(config.layers));
  LmWeights         w;
  w.config             = config;
  w.token_embedding    = Matrix::normal(config.vocab, d, s, rng);
  w.position_embedding = Matrix::normal(config.max_positions, d, s, rng);
  for (std::size_t l = 0; l < config.layers; ++l)
  {
    Layer layer;
    layer.ln1_gain = Matrix(1, d, 1.0);
    layer.ln1_bias = Matrix(1, d);
    layer.w_qkv    = Matrix::normal(d, 3 * d, s, rng);
    layer.b_qkv    = Matrix(1, 3 * d);
    layer.w_out    = Matrix::normal(d, d, sr, rng);
    layer.b_out    = Matrix(1, d);
    layer.ln2_gain = Matrix(1, d, 1.0);
    layer.ln2_bias = Matrix(1, d);
    layer.w_up     = Matrix::normal(d, ff, s, rng);
    layer.b_up     = Matrix(1, ff);
    layer.w_down   = Matrix::normal(ff, d, sr, rng);
    layer.b_down   = Matrix(1, d);
    w.layers.push_back(std::move(layer));
  }
  w.final_gain  = Matrix(1, d, 1.0);
  w.final_bias  = Matrix(1, d);
  w.head_weight = Matrix::normal(d, config.vocab, s, rng);
  w.head_bias   = Matrix(1, config.vocab);
  return w;
}

std::vector<Matrix *> LmWeights::tensors()
{
  std::vector<Matrix *> out{&token_embedding, &position_embedding};
  for (Layer &l : layers)
  {
    out.insert(out.end(), {&l.ln1_gain, &l.ln1_bias, &l.w_qkv, &l.b_qkv, &l.w_out, &l.b_out, &l.ln2_gain,
                           &l.ln2_bias, &l.w_up, &l.b_up, &l.w_down, &l.b_down});
  }
  out.insert(out.end(), {&final_gain, &final_bias, &head_weight, &head_bias});
  return out;
}

std::vector<Matrix const *> LmWeights::tensors() const
{
  auto                        mut = const_cast<LmWeights *>(this)->tensors();
  std::vector<Matrix const *> out(mut.begin(), mut.end());
  return out;
}

std::size_t LmWeights::count() const
{
  std::size_t total = 0;
  for (Matrix const *m : tensors())
  {
    total += m->size();
  }
  return total;
}

std::uint64_t LmWeights::checksum() const
{
  auto const t = tensors();
  return mharag::checksum(t);
}

void LmWeights::save(std::filesystem::path const &path) const
{
  Checkpoint ckpt;
  ckpt.kind                  = "lm";
  ckpt.meta["layers"]        = config.layers;
  ckpt.meta["d"]             = config.d;
  ckpt.meta["heads"]         = config.heads;
  ckpt.meta["ff"]            = config.ff;
  ckpt.meta["vocab"]         = config.vocab;
  ckpt.meta["max_positions"] = config.max_positions;
  std::size_t i              = 0;
  for (Matrix const *m : tensors())
  {
    ckpt.tensors.emplace_back("t" + std::to_string(i++), *m);
  }
  write_checkpoint(ckpt, path);
}

LmWeights LmWeights::load(std::filesystem::path const &path)
{
  Checkpoint const ckpt = read_checkpoint(path);
  if (ckpt.kind != "lm")
  {
    throw SchemaError(path.string() + " holds a '" + ckpt.kind + "' checkpoint, not an LM");
  }
  LmConfig cfg;
  cfg.layers        = ckpt.meta.at("layers").get<std::size_t>();
  cfg.d             = ckpt.meta.at("d").get<std::size_t>();
  cfg.heads         = ckpt.meta.at("heads").get<std::size_t>();
  cfg.ff            = ckpt.meta.at("ff").get<std::size_t>();
  cfg.vocab         = ckpt.meta.at("vocab").get<std::size_t>();
  cfg.max_positions = ckpt.meta.at("max_positions").get<std::size_t>();
  std::mt19937_64 rng(0);
  LmWeights       w     = init(cfg, rng);
  auto            slots = w.tensors();
  if (slots.size() != ckpt.tensors.size())
  {
    throw SchemaError(path.string() + ": tensor count mismatch");
  }
  for (std::size_t k = 0; k < slots.size(); ++k)
  {
    Matrix const &src = ckpt.tensors[k].second;
    if (src.rows() != slots[k]->rows() || src.cols() != slots[k]->cols())
    {
      throw SchemaError(path.string() + ": tensor " + std::to_string(k) + " has shape " + src.shape_string());
    }
    *slots[k] = src;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Forward

BoundWeights bind_frozen(Tape &tape, LmWeights const &weights)
{
  BoundWeights b;
  for (Matrix const *m : weights.tensors())
  {
    b.vars.push_back(tape.constant_ref(*m));
  }
  return b;
}

BoundWeights bind_trainable(Tape &tape, LmWeights const &weights)
{
  BoundWeights b;
  for (Matrix const *m : weights.tensors())
  {
    b.vars.push_back(tape.leaf_ref(*m));
  }
  return b;
}

Var forward_logits(Tape &tape, LmWeights const &weights, BoundWeights const &bound, RenderedInput const &input,
                   std::optional<Var> prompt)
{
  LmConfig const &cfg = weights.config;
  auto const     &v   = bound.vars;
  std::size_t const T = input.length();
  if (T > cfg.max_positions)
  {
    throw LengthError("input of " + std::to_string(T) + " positions exceeds max_positions " +
                      std::to_string(cfg.max_positions));
  }
  if ((input.m > 0) != prompt.has_value())
  {
    throw ContractError("soft prompt presence does not match the rendered layout (m=" + std::to_string(input.m) +
                        ")");
  }

  std::vector<std::size_t> ids(input.tokens.begin(), input.tokens.end());
  Var                      x = tape.row_select(v[0], ids);
  if (prompt)
  {
    Matrix const &z = tape.value(*prompt);
    if (z.rows() != cfg.d || z.cols() != input.m)
    {
      throw ShapeError("soft prompt " + z.shape_string() + " does not fit d=" + std::to_string(cfg.d) +
                       ", m=" + std::to_string(input.m));
    }
    Var const parts[] = {tape.transpose(*prompt), x};
    x                 = tape.concat_rows(parts);
  }
  std::vector<std::size_t> positions(T);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  x = tape.add(x, tape.row_select(v[1], positions));

  std::size_t const d    = cfg.d;
  std::size_t const dh   = d / cfg.heads;
  double const      norm = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < cfg.layers; ++l)
  {
    auto const p = [&](std::size_t k) { return v[layer_slot(l, k)]; };
    Var const  h = tape.layernorm(x, p(0), p(1));
    Var const  qkv = tape.add_row(tape.matmul(h, p(2)), p(3));
    std::vector<Var> heads;
    heads.reserve(cfg.heads);
    for (std::size_t j = 0; j < cfg.heads; ++j)
    {
      Var const q     = tape.scale(tape.slice_cols(qkv, j * dh, dh), norm);
      Var const k     = tape.slice_cols(qkv, d + j * dh, dh);
      Var const val   = tape.slice_cols(qkv, 2 * d + j * dh, dh);
      Var const probs = tape.softmax_rows(tape.matmul_nt(q, k), true);
      heads.push_back(tape.matmul(probs, val));
    }
    Var const attn = tape.add_row(tape.matmul(tape.concat_cols(heads), p(4)), p(5));
    x              = tape.add(x, attn);
    Var const h2   = tape.layernorm(x, p(6), p(7));
    Var const up   = tape.gelu(tape.add_row(tape.matmul(h2, p(8)), p(9)));
    x              = tape.add(x, tape.add_row(tape.matmul(up, p(10)), p(11)));
  }
  std::size_t const tail = 2 + cfg.layers * kPerLayer;
  Var const         hf   = tape.layernorm(x, v[tail], v[tail + 1]);
  return tape.add_row(tape.matmul(hf, v[tail + 2]), v[tail + 3]);
}

Var forward_loss(Tape &tape, LmWeights const &weights, BoundWeights const &bound, RenderedInput const &input,
                 std::optional<Var> prompt)
{
  Var const logits = forward_logits(tape, weights, bound, input, prompt);
  Var const loss   = tape.cross_entropy(logits, input.targets);
  if (!std::isfinite(tape.value(loss)(0, 0)))
  {
    throw NumericError("LM loss is not finite (T=" + std::to_string(input.length()) + ")");
  }
  return loss;
}

Matrix logits(LmWeights const &weights, RenderedInput const &input, Matrix const *prompt)
{
  Tape                tape;
  auto const          bound = bind_frozen(tape, weights);
  std::optional<Var>  z;
  if (prompt != nullptr)
  {
    z = tape.constant_ref(*prompt);
  }
  return tape.value(forward_logits(tape, weights, bound, input, z));
}

double loss(LmWeights const &weights, RenderedInput const &input, Matrix const *prompt)
{
  Tape               tape;
  auto const         bound = bind_frozen(tape, weights);
  std::optional<Var> z;
  if (prompt != nullptr)
  {
    z = tape.constant_ref(*prompt);
  }
  return tape.value(forward_loss(tape, weights, bound, input, z))(0, 0);
}

double sequence_logprob(LmWeights const &weights, RenderedInput const &input, Matrix const *prompt)
{
  Matrix const out   = logits(weights, input, prompt);
  double       total = 0.0;
  for (std::size_t r = 0; r < out.rows(); ++r)
  {
    int const t = input.targets[r];
    if (t < 0)
    {
      continue;
    }
    auto const   row = out.row(r);
    double const mx  = *std::max_element(row.begin(), row.end());
    double       z   = 0.0;
    for (double v : row)
    {
      z += std::exp(v - mx);
    }
    total += row[static_cast<std::size_t>(t)] - mx - std::log(z);
  }
  return total;
}

std::string generate(LmWeights const &weights, RenderedInput const &prefix, Matrix const *prompt,
                     std::size_t max_new)
{
  if (!prefix.tokens.empty() && prefix.tokens.back() == kEos)
  {
    return {};
  }
  RenderedInput    cur = prefix;
  std::vector<int> produced;
  for (std::size_t step = 0; step < max_new && cur.length() < weights.config.max_positions; ++step)
  {
    cur.targets.assign(cur.length(), -1);
    Matrix const out  = logits(weights, cur, prompt);
    auto const   last = out.row(out.rows() - 1);
    auto const   best = static_cast<int>(std::max_element(last.begin(), last.end()) - last.begin());
    if (best == kEos)
    {
      break;
    }
    produced.push_back(best);
    cur.tokens.push_back(best);
  }
  return detokenize(produced);
}

std::size_t choose_answer(LmWeights const &weights, PromptedInput input, std::span<std::string const> candidates,
                          Matrix const *prompt)
{
  if (candidates.empty())
  {
    throw ContractError("choose_answer needs at least one candidate");
  }
  std::size_t best       = 0;
  double      best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i)
  {
    input.answer        = candidates[i];
    double const score  = sequence_logprob(weights, render(input, weights.config), prompt);
    if (score > best_score)
    {
      best       = i;
      best_score = score;
    }
  }
  return best;
}

double mean_loss(LmWeights const &weights, std::span<RenderedInput const> inputs)
{
  if (inputs.empty())
  {
    throw ContractError("mean_loss over an empty set");
  }
  double total = 0.0;
  for (auto const &in : inputs)
  {
    total += loss(weights, in);
  }
  return total / static_cast<double>(inputs.size());
}

// ---------------------------------------------------------------------------
// Pretraining

PretrainResult pretrain_toy(LmConfig const &config, std::span<PromptedInput const> corpus,
                            PretrainConfig const &options, ProgressFn const &progress)
{
  config.validate();
  if (corpus.size() <= options.heldout)
  {
    throw ConfigError("pretraining corpus of " + std::to_string(corpus.size()) + " items cannot spare " +
                      std::to_string(options.heldout) + " held-out items");
  }
  if (options.steps == 0 || options.batch == 0)
  {
    throw ConfigError("pretraining needs steps >= 1 and batch >= 1");
  }
  std::mt19937_64          rng(options.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<RenderedInput> heldout;
  std::vector<RenderedInput> train;
  for (std::size_t i = 0; i < order.size(); ++i)
  {
    auto r = render(corpus[order[i]], config, LossMask::AllTokens);
    (i < options.heldout ? heldout : train).push_back(std::move(r));
  }

  PretrainResult result{LmWeights::init(config, rng), 0.0, 0.0, {}};
  LmWeights     &w                = result.weights;
  result.initial_heldout_loss     = mean_loss(w, heldout);

  auto                params = w.tensors();
  std::vector<Matrix> grads;
  for (Matrix const *p : params)
  {
    grads.emplace_back(p->rows(), p->cols());
  }
  numerics::Adam opt({options.learning_rate, 0.9, 0.999, 1e-8});
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  std::size_t const check_at = std::max<std::size_t>(1, options.steps / 10);
  double            running  = 0.0;

  for (std::size_t step = 0; step < options.steps; ++step)
  {
    for (Matrix &g : grads)
    {
      g.fill(0.0);
    }
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < options.batch; ++b)
    {
      RenderedInput const &item = train[pick(rng)];
      Tape                 tape;
      auto const           bound = bind_trainable(tape, w);
      Var const            l     = forward_loss(tape, w, bound, item, std::nullopt);
      batch_loss += tape.value(l)(0, 0);
      tape.backward(l);
      for (std::size_t k = 0; k < params.size(); ++k)
      {
        tape.accumulate_grad(bound.vars[k], grads[k]);
      }
    }
    double const inv = 1.0 / static_cast<double>(options.batch);
    for (Matrix &g : grads)
    {
      for (double &x : g.data())
      {
        x *= inv;
      }
    }
    batch_loss *= inv;
    numerics::clip_global_norm(grads, options.clip_norm);

    double const warm  = std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(options.warmup + 1));
    double const decay = 0.1 + 0.9 * 0.5 *
                                 (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                                 static_cast<double>(options.steps)));
    opt.set_learning_rate(options.learning_rate * warm * decay);
    opt.step(params, grads);

    result.step_losses.push_back(batch_loss);
    running = step == 0 ? batch_loss : 0.9 * running + 0.1 * batch_loss;
    if (step + 1 == check_at && running > result.initial_heldout_loss)
    {
      throw NumericError("pretraining diverged: running loss " + std::to_string(running) + " after " +
                         std::to_string(step + 1) + " steps exceeds initial held-out loss " +
                         std::to_string(result.initial_heldout_loss));
    }
    if (progress && options.log_every > 0 && (step + 1) % options.log_every == 0)
    {
      progress(step + 1, running);
    }
  }
  result.final_heldout_loss = mean_loss(w, heldout);
  return result;
}

}  // namespace mharag::lm
