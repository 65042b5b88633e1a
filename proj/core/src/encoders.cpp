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

#include "mharag/encoders.hpp"

#include <cmath>

#include "mharag/checkpoint.hpp"
#include "mharag/error.hpp"

namespace mharag::encoders {

namespace {

Matrix as_column(embedding::DenseEmbedding const &e)
{
  return Matrix::column(e.values());
}

/// Stacks embeddings as rows (K×d').
Matrix as_rows(std::span<embedding::DenseEmbedding const> es)
{
  if (es.empty())
  {
    return {};
  }
  std::size_t const dim = es.front().dim();
  Matrix            out(es.size(), dim);
  for (std::size_t k = 0; k < es.size(); ++k)
  {
    if (es[k].dim() != dim)
    {
      throw ShapeError("exemplar embeddings have mixed dimensions");
    }
    std::copy(es[k].values().begin(), es[k].values().end(), out.row(k).begin());
  }
  return out;
}

template <class P>
std::vector<Var> bind_constants(Tape &tape, P const &params)
{
  std::vector<Var> vars;
  for (Matrix const *m : params.tensors())
  {
    vars.push_back(tape.constant_ref(*m));
  }
  return vars;
}

void require_dim(Matrix const &weight, std::size_t d_prime, char const *what)
{
  if (weight.cols() != d_prime)
  {
    throw ShapeError(std::string(what) + ": weight " + weight.shape_string() + " cannot take a " +
                     std::to_string(d_prime) + "-dim embedding");
  }
}

}  // namespace

std::string_view to_string(Method method)
{
  switch (method)
  {
  case Method::ZeroShot:
    return "zeroshot";
  case Method::Rag:
    return "rag";
  case Method::Mha:
    return "mha";
  case Method::Xrag:
    return "xrag";
  case Method::XragK:
    return "xragk";
  case Method::Pt:
    return "pt";
  case Method::Idpg:
    return "idpg";
  }
  return "?";
}

Method parse_method(std::string_view text)
{
  for (Method m : {Method::ZeroShot, Method::Rag, Method::Mha, Method::Xrag, Method::XragK, Method::Pt,
                   Method::Idpg})
  {
    if (to_string(m) == text)
    {
      return m;
    }
  }
  throw ConfigError("unknown method '" + std::string(text) +
                    "' (expected zeroshot|rag|mha|xrag|xragk|pt|idpg)");
}

bool has_encoder(Method method)
{
  return method != Method::ZeroShot && method != Method::Rag;
}

bool uses_exemplars(Method method)
{
  return method == Method::Rag || method == Method::Mha || method == Method::Xrag || method == Method::XragK;
}

// ---------------------------------------------------------------------------
// Parameter structs

MhaRagParams MhaRagParams::init(std::size_t d, std::size_t d_prime, std::size_t heads, std::mt19937_64 &rng)
{
  if (heads == 0 || d == 0 || d_prime == 0)
  {
    throw ConfigError("MHA-RAG needs H >= 1 and positive d, d'");
  }
  MhaRagParams p;
  p.d       = d;
  p.d_prime = d_prime;
  for (std::size_t i = 0; i < heads; ++i)
  {
    p.query.push_back(Matrix::normal(d, d_prime, kInitStddev, rng));
    p.key.push_back(Matrix::normal(d, d_prime, kInitStddev, rng));
    p.value.push_back(Matrix::normal(d, d_prime, kInitStddev, rng));
  }
  return p;
}

std::size_t MhaRagParams::count() const
{
  std::size_t total = 0;
  for (Matrix const *m : tensors())
  {
    total += m->size();
  }
  return total;
}

// Head-major order: W^Q_1, W^K_1, W^V_1, W^Q_2, ...
std::vector<Matrix *> MhaRagParams::tensors()
{
  std::vector<Matrix *> out;
  for (std::size_t i = 0; i < heads(); ++i)
  {
    out.insert(out.end(), {&query[i], &key[i], &value[i]});
  }
  return out;
}

std::vector<Matrix const *> MhaRagParams::tensors() const
{
  std::vector<Matrix const *> out;
  for (std::size_t i = 0; i < heads(); ++i)
  {
    out.insert(out.end(), {&query[i], &key[i], &value[i]});
  }
  return out;
}

XragParams XragParams::init(std::size_t d, std::size_t d_prime, std::mt19937_64 &rng)
{
  if (d == 0 || d_prime == 0)
  {
    throw ConfigError("xRAG projector needs positive d, d'");
  }
  return {Matrix::normal(d, d_prime, kInitStddev, rng), Matrix(d, 1)};
}

std::size_t XragParams::count() const
{
  return weight.size() + bias.size();
}

std::vector<Matrix *> XragParams::tensors()
{
  return {&weight, &bias};
}

std::vector<Matrix const *> XragParams::tensors() const
{
  return {&weight, &bias};
}

PtParams PtParams::init(std::size_t d, std::size_t m, std::mt19937_64 &rng)
{
  if (d == 0 || m == 0)
  {
    throw ConfigError("prompt tuning needs m >= 1 and positive d");
  }
  return {Matrix::normal(d, m, kInitStddev, rng)};
}

std::size_t PtParams::count() const
{
  return prompt.size();
}

std::vector<Matrix *> PtParams::tensors()
{
  return {&prompt};
}

std::vector<Matrix const *> PtParams::tensors() const
{
  return {&prompt};
}

IdpgParams IdpgParams::init(std::size_t d, std::size_t d_prime, std::size_t m, std::mt19937_64 &rng)
{
  if (d == 0 || d_prime == 0 || m == 0)
  {
    throw ConfigError("IDPG needs m >= 1 and positive d, d'");
  }
  return {d, m, Matrix::normal(m * d, d_prime, kInitStddev, rng), Matrix(m * d, 1)};
}

std::size_t IdpgParams::count() const
{
  return weight.size() + bias.size();
}

std::vector<Matrix *> IdpgParams::tensors()
{
  return {&weight, &bias};
}

std::vector<Matrix const *> IdpgParams::tensors() const
{
  return {&weight, &bias};
}

// ---------------------------------------------------------------------------
// Tape forms

Var mha_on_tape(Tape &tape, std::span<Var const> params, std::size_t heads, Matrix const &query,
                Matrix const &exemplar_rows)
{
  if (exemplar_rows.rows() == 0)
  {
    throw EmptyContextError("MHA-RAG needs at least one retrieved exemplar");
  }
  if (params.size() != 3 * heads || heads == 0)
  {
    throw ContractError("mha_on_tape: expected " + std::to_string(3 * heads) + " parameter vars");
  }
  std::size_t const d       = tape.value(params[0]).rows();
  std::size_t const d_prime = tape.value(params[0]).cols();
  if (query.rows() != d_prime || query.cols() != 1 || exemplar_rows.cols() != d_prime)
  {
    throw ShapeError("MHA-RAG expects " + std::to_string(d_prime) + "-dim embeddings, got query " +
                     query.shape_string() + " and exemplars " + exemplar_rows.shape_string());
  }
  double const inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Var const    q_in       = tape.constant_ref(query);
  Var const    e_rows     = tape.constant_ref(exemplar_rows);
  std::vector<Var> columns;
  columns.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i)
  {
    Var const q      = tape.matmul(params[3 * i], q_in);           // d×1
    Var const keys   = tape.matmul_nt(e_rows, params[3 * i + 1]);  // K×d
    Var const values = tape.matmul_nt(e_rows, params[3 * i + 2]);  // K×d
    Var const logits = tape.scale(tape.transpose(tape.matmul(keys, q)), inv_sqrt_d);
    Var const w      = tape.softmax_rows(logits);                  // 1×K
    columns.push_back(tape.transpose(tape.matmul(w, values)));     // d×1
  }
  return tape.concat_cols(columns);
}

Var xrag_on_tape(Tape &tape, std::span<Var const> params, Matrix const &joint)
{
  require_dim(tape.value(params[0]), joint.rows(), "xRAG");
  return tape.add(tape.matmul(params[0], tape.constant_ref(joint)), params[1]);
}

Var xrag_k_on_tape(Tape &tape, std::span<Var const> params, Matrix const &pair_rows)
{
  if (pair_rows.rows() == 0)
  {
    throw EmptyContextError("xRAG-K needs at least one retrieved exemplar");
  }
  require_dim(tape.value(params[0]), pair_rows.cols(), "xRAG-K");
  Var const cols = tape.matmul_nt(params[0], tape.constant_ref(pair_rows));  // d×K
  return tape.add_col(cols, params[1]);
}

Var pt_on_tape(Tape &, std::span<Var const> params)
{
  return params[0];
}

Var idpg_on_tape(Tape &tape, std::span<Var const> params, std::size_t d, std::size_t m, Matrix const &query)
{
  require_dim(tape.value(params[0]), query.rows(), "IDPG");
  Var const flat = tape.add(tape.matmul(params[0], tape.constant_ref(query)), params[1]);
  return tape.reshape_columns(flat, d, m);
}

// ---------------------------------------------------------------------------
// Pure forms

SoftPrompt encode_mha(MhaRagParams const &params, embedding::DenseEmbedding const &query,
                      std::span<embedding::DenseEmbedding const> exemplars)
{
  if (exemplars.empty())
  {
    throw EmptyContextError("MHA-RAG needs at least one retrieved exemplar");
  }
  Tape         tape;
  auto const   vars = bind_constants(tape, params);
  Matrix const q    = as_column(query);
  Matrix const rows = as_rows(exemplars);
  return {tape.value(mha_on_tape(tape, vars, params.heads(), q, rows))};
}

Matrix mha_attention_weights(MhaRagParams const &params, embedding::DenseEmbedding const &query,
                             std::span<embedding::DenseEmbedding const> exemplars)
{
  if (exemplars.empty())
  {
    throw EmptyContextError("MHA-RAG needs at least one retrieved exemplar");
  }
  Matrix const q    = as_column(query);
  Matrix const rows = as_rows(exemplars);
  Matrix       out(params.heads(), exemplars.size());
  double const inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params.d));
  for (std::size_t i = 0; i < params.heads(); ++i)
  {
    Matrix logits = numerics::matmul(numerics::matmul_nt(rows, params.key[i]), numerics::matmul(params.query[i], q))
                      .transpose();
    for (double &v : logits.data())
    {
      v *= inv_sqrt_d;
    }
    Matrix const w = numerics::softmax_rows(logits);
    std::copy(w.data().begin(), w.data().end(), out.row(i).begin());
  }
  return out;
}

SoftPrompt encode_xrag(XragParams const &params, embedding::DenseEmbedding const &joint)
{
  Tape tape;
  auto vars = bind_constants(tape, params);
  return {tape.value(xrag_on_tape(tape, vars, as_column(joint)))};
}

SoftPrompt encode_xrag_k(XragParams const &params, std::span<embedding::DenseEmbedding const> pairs)
{
  if (pairs.empty())
  {
    throw EmptyContextError("xRAG-K needs at least one retrieved exemplar");
  }
  Tape tape;
  auto vars = bind_constants(tape, params);
  return {tape.value(xrag_k_on_tape(tape, vars, as_rows(pairs)))};
}

SoftPrompt encode_pt(PtParams const &params)
{
  return {params.prompt};
}

SoftPrompt encode_idpg(IdpgParams const &params, embedding::DenseEmbedding const &query)
{
  Tape tape;
  auto vars = bind_constants(tape, params);
  return {tape.value(idpg_on_tape(tape, vars, params.d, params.m, as_column(query)))};
}

double compression_ratio(std::size_t context_tokens, std::size_t m)
{
  if (m == 0)
  {
    throw DomainError("compression ratio undefined for m = 0");
  }
  return static_cast<double>(context_tokens) / static_cast<double>(m);
}

// ---------------------------------------------------------------------------
// Adapter

std::size_t Adapter::count() const
{
  return std::visit([](auto const &p) { return p.count(); }, params);
}

std::vector<Matrix *> Adapter::tensors()
{
  return std::visit([](auto &p) { return p.tensors(); }, params);
}

std::vector<Matrix const *> Adapter::tensors() const
{
  return std::visit([](auto const &p) { return p.tensors(); }, params);
}

std::size_t Adapter::d() const
{
  return tensors().front()->rows() / (method == Method::Idpg ? std::get<IdpgParams>(params).m : 1);
}

std::size_t Adapter::d_prime() const
{
  return method == Method::Pt ? 0 : tensors().front()->cols();
}

std::size_t Adapter::prompt_length(std::size_t k) const
{
  switch (method)
  {
  case Method::Mha:
    return std::get<MhaRagParams>(params).heads();
  case Method::Xrag:
    return 1;
  case Method::XragK:
    return k;
  case Method::Pt:
    return std::get<PtParams>(params).prompt.cols();
  case Method::Idpg:
    return std::get<IdpgParams>(params).m;
  default:
    return 0;
  }
}

Adapter init_adapter(AdapterShape const &shape, std::mt19937_64 &rng)
{
  switch (shape.method)
  {
  case Method::Mha:
    return {shape.method, MhaRagParams::init(shape.d, shape.d_prime, shape.heads, rng)};
  case Method::Xrag:
  case Method::XragK:
    return {shape.method, XragParams::init(shape.d, shape.d_prime, rng)};
  case Method::Pt:
    return {shape.method, PtParams::init(shape.d, shape.m, rng)};
  case Method::Idpg:
    return {shape.method, IdpgParams::init(shape.d, shape.d_prime, shape.m, rng)};
  default:
    throw ConfigError("method '" + std::string(to_string(shape.method)) + "' has no trainable encoder");
  }
}

void save_adapter(Adapter const &adapter, std::filesystem::path const &path, nlohmann::json const &extra)
{
  Checkpoint ckpt;
  ckpt.kind              = "encoder";
  ckpt.meta              = extra.is_object() ? extra : nlohmann::json::object();
  ckpt.meta["method"]    = to_string(adapter.method);
  ckpt.meta["d"]         = adapter.d();
  ckpt.meta["d_prime"]   = adapter.d_prime();
  ckpt.meta["H"]         = adapter.method == Method::Mha ? std::get<MhaRagParams>(adapter.params).heads() : 0;
  ckpt.meta["m"]         = adapter.prompt_length(0);
  std::size_t i          = 0;
  for (Matrix const *m : adapter.tensors())
  {
    ckpt.tensors.emplace_back("t" + std::to_string(i++), *m);
  }
  write_checkpoint(ckpt, path);
}

Adapter load_adapter(std::filesystem::path const &path)
{
  Checkpoint const ckpt = read_checkpoint(path);
  if (ckpt.kind != "encoder")
  {
    throw SchemaError(path.string() + " holds a '" + ckpt.kind + "' checkpoint, not an encoder");
  }
  AdapterShape shape;
  shape.method  = parse_method(ckpt.meta.at("method").get<std::string>());
  shape.d       = ckpt.meta.at("d").get<std::size_t>();
  shape.d_prime = ckpt.meta.at("d_prime").get<std::size_t>();
  shape.heads   = std::max<std::size_t>(1, ckpt.meta.at("H").get<std::size_t>());
  shape.m       = std::max<std::size_t>(1, ckpt.meta.at("m").get<std::size_t>());
  if (shape.method == Method::Pt)
  {
    shape.d_prime = 1;
  }
  std::mt19937_64 rng(0);
  Adapter         adapter = init_adapter(shape, rng);
  auto            slots   = adapter.tensors();
  if (slots.size() != ckpt.tensors.size())
  {
    throw SchemaError(path.string() + ": expected " + std::to_string(slots.size()) + " tensors, found " +
                      std::to_string(ckpt.tensors.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i)
  {
    Matrix const &src = ckpt.tensors[i].second;
    if (src.rows() != slots[i]->rows() || src.cols() != slots[i]->cols())
    {
      throw SchemaError(path.string() + ": tensor " + std::to_string(i) + " has shape " + src.shape_string() +
                        ", expected " + slots[i]->shape_string());
    }
    *slots[i] = src;
  }
  return adapter;
}

}  // namespace mharag::encoders
