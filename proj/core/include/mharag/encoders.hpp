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
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mharag/embedding.hpp"
#include "mharag/numerics/matrix.hpp"
#include "mharag/numerics/tape.hpp"

namespace mharag::encoders {

using numerics::Matrix;
using numerics::Tape;
using numerics::Var;

/// Every way of conditioning the frozen LM that the harness knows about.
/// ZeroShot and Rag have no trainable encoder.
enum class Method
{
  ZeroShot,
  Rag,
  Mha,
  Xrag,
  XragK,
  Pt,
  Idpg,
};

std::string_view to_string(Method method);
Method           parse_method(std::string_view text);
bool             has_encoder(Method method);
/// True when the method consumes retrieved exemplars.
bool uses_exemplars(Method method);

inline constexpr double kInitStddev = 0.02;

/// Trainable matrices of one prompt generator, in a fixed order. Training,
/// checkpoints and gradient checks all walk tensors() in that order.
struct MhaRagParams
{
  std::size_t         d       = 0;
  std::size_t         d_prime = 0;
  std::vector<Matrix> query;  // H matrices, d×d'
  std::vector<Matrix> key;
  std::vector<Matrix> value;

  static MhaRagParams init(std::size_t d, std::size_t d_prime, std::size_t heads, std::mt19937_64 &rng);
  std::size_t         heads() const noexcept
  {
    return query.size();
  }
  std::size_t          count() const;
  std::vector<Matrix *> tensors();
  std::vector<Matrix const *> tensors() const;
};

/// Single affine projector d' → d shared by xRAG and xRAG-K.
struct XragParams
{
  Matrix weight;  // d×d'
  Matrix bias;    // d×1

  static XragParams init(std::size_t d, std::size_t d_prime, std::mt19937_64 &rng);
  std::size_t          count() const;
  std::vector<Matrix *> tensors();
  std::vector<Matrix const *> tensors() const;
};

/// Free soft-prompt table.
struct PtParams
{
  Matrix prompt;  // d×m

  static PtParams init(std::size_t d, std::size_t m, std::mt19937_64 &rng);
  std::size_t          count() const;
  std::vector<Matrix *> tensors();
  std::vector<Matrix const *> tensors() const;
};

/// Question-conditioned prompt generator: reshape(W·E_x + b) into d×m.
struct IdpgParams
{
  std::size_t d = 0;
  std::size_t m = 0;
  Matrix      weight;  // (m·d)×d'
  Matrix      bias;    // (m·d)×1

  static IdpgParams init(std::size_t d, std::size_t d_prime, std::size_t m, std::mt19937_64 &rng);
  std::size_t          count() const;
  std::vector<Matrix *> tensors();
  std::vector<Matrix const *> tensors() const;
};

/// Z ∈ R^{d×m}: m virtual-token column vectors.
struct SoftPrompt
{
  Matrix z;

  std::size_t d() const noexcept
  {
    return z.rows();
  }
  std::size_t m() const noexcept
  {
    return z.cols();
  }
};

// Tape forms. `params` are the Vars bound to tensors() in order; inputs are
// untracked. Each returns the d×m soft prompt node.
Var mha_on_tape(Tape &tape, std::span<Var const> params, std::size_t heads, Matrix const &query,
                Matrix const &exemplar_rows);
Var xrag_on_tape(Tape &tape, std::span<Var const> params, Matrix const &joint);
Var xrag_k_on_tape(Tape &tape, std::span<Var const> params, Matrix const &pair_rows);
Var pt_on_tape(Tape &tape, std::span<Var const> params);
Var idpg_on_tape(Tape &tape, std::span<Var const> params, std::size_t d, std::size_t m, Matrix const &query);

/// MHA-RAG. For head i: q = W^Q_i E_x, k_j = W^K_i E_j, v_j = W^V_i E_j,
/// z^(i) = Σ_j softmax_j(q·k_j / √d) v_j. Returns Z = [z^(1) … z^(H)].
/// Throws EmptyContextError with no exemplars and ShapeError on dim mismatch.
SoftPrompt encode_mha(MhaRagParams const &params, embedding::DenseEmbedding const &query,
                      std::span<embedding::DenseEmbedding const> exemplars);

/// Per-head attention weights over the exemplars, H×K.
Matrix mha_attention_weights(MhaRagParams const &params, embedding::DenseEmbedding const &query,
                             std::span<embedding::DenseEmbedding const> exemplars);

/// xRAG: one column W·E_joint + b, where E_joint embeds the whole ⊕-joined context.
SoftPrompt encode_xrag(XragParams const &params, embedding::DenseEmbedding const &joint);

/// xRAG-K: column k is W·E_pairs[k] + b.
SoftPrompt encode_xrag_k(XragParams const &params, std::span<embedding::DenseEmbedding const> pairs);

SoftPrompt encode_pt(PtParams const &params);

SoftPrompt encode_idpg(IdpgParams const &params, embedding::DenseEmbedding const &query);

/// context_tokens / m. RAG keeps every token, so its ratio is 1 by taking m := context_tokens.
double compression_ratio(std::size_t context_tokens, std::size_t m);

/// Parameters of one trained (or freshly initialized) prompt generator.
struct Adapter
{
  Method                                                      method = Method::Mha;
  std::variant<MhaRagParams, XragParams, PtParams, IdpgParams> params;

  std::size_t                 count() const;
  std::vector<Matrix *>       tensors();
  std::vector<Matrix const *> tensors() const;
  std::size_t                 d() const;
  std::size_t                 d_prime() const;
  /// Soft-prompt length this adapter emits for `k` retrieved exemplars.
  std::size_t prompt_length(std::size_t k) const;
};

struct AdapterShape
{
  Method      method  = Method::Mha;
  std::size_t d       = 0;
  std::size_t d_prime = 0;
  std::size_t heads   = 4;   // MHA-RAG
  std::size_t m       = 10;  // PT / IDPG
};

/// Normal(0, 0.02²) weights, zero biases. Throws ConfigError for methods
/// without an encoder or for zero shapes.
Adapter init_adapter(AdapterShape const &shape, std::mt19937_64 &rng);

/// Checkpoint container with header field "format": 1. `extra` is merged into
/// the header meta (run provenance such as seed and config hash).
void    save_adapter(Adapter const &adapter, std::filesystem::path const &path,
                     nlohmann::json const &extra = nlohmann::json::object());
Adapter load_adapter(std::filesystem::path const &path);

}  // namespace mharag::encoders
