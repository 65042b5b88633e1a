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
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mharag/exemplar.hpp"
#include "mharag/numerics/matrix.hpp"
#include "mharag/numerics/tape.hpp"

namespace mharag::lm {

using numerics::Matrix;
using numerics::Tape;
using numerics::Var;

// Byte-level vocabulary plus five specials.
inline constexpr int kBos   = 256;
inline constexpr int kSep   = 257;
inline constexpr int kAns   = 258;
inline constexpr int kEos   = 259;
inline constexpr int kPad   = 260;
inline constexpr int kVocab = 261;

struct LmConfig
{
  std::size_t layers        = 4;
  std::size_t d             = 128;
  std::size_t heads         = 4;
  std::size_t ff            = 0;  // 0 means 4·d
  std::size_t vocab         = kVocab;
  std::size_t max_positions = 512;

  std::size_t ff_dim() const noexcept
  {
    return ff == 0 ? 4 * d : ff;
  }
  /// Throws ConfigError when d is not divisible by heads or a size is zero.
  void validate() const;

  friend bool operator==(LmConfig const &, LmConfig const &) = default;
};

std::vector<int> tokenize(std::string_view text);
/// Bytes of the non-special tokens.
std::string detokenize(std::span<int const> tokens);

/// "Q: {question}\nA: {answer}\n"
std::string exemplar_text(data::Exemplar const &e);
/// "Q: {question}\nA:"
std::string question_text(std::string_view question);

/// What the frozen model is asked: an optional soft prompt of `prompt_length`
/// virtual tokens, c text exemplars, the question, and (when training) the answer.
struct PromptedInput
{
  std::size_t                 prompt_length = 0;
  std::vector<data::Exemplar> context;
  std::string                 question;
  std::optional<std::string>  answer;
};

struct LayoutBreakdown
{
  std::size_t m               = 0;
  std::size_t bos             = 1;
  std::size_t context_tokens  = 0;  // c exemplars plus one SEP each
  std::size_t question_tokens = 0;
  std::size_t ans             = 1;
  std::size_t answer_tokens   = 0;
  std::size_t eos             = 0;

  std::size_t prefill() const noexcept
  {
    return m + bos + context_tokens + question_tokens + ans;
  }
  std::size_t total() const noexcept
  {
    return prefill() + answer_tokens + eos;
  }
};

/// Token layout: [m virtual] BOS ex_1 SEP … ex_c SEP question ANS answer EOS.
/// Positions run 0..T-1 over virtual and real tokens alike.
struct RenderedInput
{
  std::size_t      m = 0;
  std::vector<int> tokens;   // real tokens only
  std::vector<int> targets;  // per position (length T); -1 where not scored
  LayoutBreakdown  breakdown;

  std::size_t length() const noexcept
  {
    return m + tokens.size();
  }
};

enum class LossMask
{
  Answer,     // answer tokens and EOS only
  AllTokens,  // every next-token prediction after BOS (pretraining)
};

/// Throws LengthError, with the budget breakdown, when the layout exceeds max_positions.
RenderedInput render(PromptedInput const &input, LmConfig const &config, LossMask mask = LossMask::Answer);

/// Weights θ of the toy decoder. Pre-LN blocks, learned absolute positions,
/// untied output head.
struct LmWeights
{
  struct Layer
  {
    Matrix ln1_gain, ln1_bias;
    Matrix w_qkv, b_qkv;  // d×3d, 1×3d
    Matrix w_out, b_out;  // d×d, 1×d
    Matrix ln2_gain, ln2_bias;
    Matrix w_up, b_up;      // d×ff, 1×ff
    Matrix w_down, b_down;  // ff×d, 1×d
  };

  LmConfig           config;
  Matrix             token_embedding;     // V×d
  Matrix             position_embedding;  // P×d
  std::vector<Layer> layers;
  Matrix             final_gain, final_bias;
  Matrix             head_weight, head_bias;  // d×V, 1×V

  static LmWeights init(LmConfig const &config, std::mt19937_64 &rng);

  std::vector<Matrix *>       tensors();
  std::vector<Matrix const *> tensors() const;
  std::size_t                 count() const;
  std::uint64_t               checksum() const;

  void             save(std::filesystem::path const &path) const;
  static LmWeights load(std::filesystem::path const &path);
};

/// Weight Vars on a tape, in LmWeights::tensors() order.
struct BoundWeights
{
  std::vector<Var> vars;
};

/// Frozen binding: weights enter as untracked constants, so no gradient is
/// ever formed for θ.
BoundWeights bind_frozen(Tape &tape, LmWeights const &weights);
/// Trainable binding, used only by pretraining.
BoundWeights bind_trainable(Tape &tape, LmWeights const &weights);

/// Logits (T×V) for a rendered input. `prompt` is the d×m soft prompt node
/// and must be present iff input.m > 0.
Var forward_logits(Tape &tape, LmWeights const &weights, BoundWeights const &bound, RenderedInput const &input,
                   std::optional<Var> prompt);

/// Mean cross-entropy over the scored positions of `input`.
Var forward_loss(Tape &tape, LmWeights const &weights, BoundWeights const &bound, RenderedInput const &input,
                 std::optional<Var> prompt);

/// Untracked convenience forms.
Matrix logits(LmWeights const &weights, RenderedInput const &input, Matrix const *prompt = nullptr);
double loss(LmWeights const &weights, RenderedInput const &input, Matrix const *prompt = nullptr);
/// Σ log p over the scored positions of `input`.
double sequence_logprob(LmWeights const &weights, RenderedInput const &input, Matrix const *prompt = nullptr);

/// Greedy decoding from a rendered prefix until EOS or max_new tokens.
/// A prefix that already ends in EOS generates nothing.
std::string generate(LmWeights const &weights, RenderedInput const &prefix, Matrix const *prompt,
                     std::size_t max_new);

/// Restricted decoding: index of the candidate answer whose continuation
/// (answer tokens then EOS) has the highest log-likelihood. Ties pick the
/// lower index.
std::size_t choose_answer(LmWeights const &weights, PromptedInput input, std::span<std::string const> candidates,
                          Matrix const *prompt = nullptr);

struct PretrainConfig
{
  std::size_t steps            = 1500;
  std::size_t batch            = 8;
  double      learning_rate    = 2e-3;
  std::size_t warmup           = 50;
  double      clip_norm        = 1.0;
  std::uint64_t seed           = 0;
  std::size_t heldout          = 64;  // corpus items reserved for the held-out loss
  std::size_t log_every        = 100;
};

struct PretrainResult
{
  LmWeights           weights;
  double              initial_heldout_loss = 0.0;
  double              final_heldout_loss   = 0.0;
  std::vector<double> step_losses;
};

using ProgressFn = std::function<void(std::size_t step, double loss)>;

/// Next-token pretraining on `corpus`. Aborts with NumericError when, after 10%
/// of the steps, the running training loss is still above the initial held-out loss.
PretrainResult pretrain_toy(LmConfig const &config, std::span<PromptedInput const> corpus,
                            PretrainConfig const &options, ProgressFn const &progress = {});

/// Mean loss over a set of rendered inputs (no soft prompts).
double mean_loss(LmWeights const &weights, std::span<RenderedInput const> inputs);

}  // namespace mharag::lm
