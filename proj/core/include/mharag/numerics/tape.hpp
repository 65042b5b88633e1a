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

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mharag/numerics/matrix.hpp"

namespace mharag::numerics {

/// Handle to a node recorded on a Tape. Only meaningful for the tape that made it.
struct Var
{
  std::uint32_t id = UINT32_MAX;

  bool valid() const noexcept
  {
    return id != UINT32_MAX;
  }
};

/// Reverse-mode differentiation tape.
///
/// Nodes are appended in evaluation order, so insertion order is a topological
/// order and backward() simply walks the node list in reverse. A node requires a
/// gradient iff it is a tracked leaf or any of its parents requires one; adjoints
/// are only allocated and accumulated for those nodes, which is what keeps a
/// frozen model cheap to backpropagate through.
///
/// A tape is single-threaded. Use one tape per worker.
class Tape
{
public:
  Tape();
  ~Tape();
  Tape(Tape const &)            = delete;
  Tape &operator=(Tape const &) = delete;
  Tape(Tape &&) noexcept;
  Tape &operator=(Tape &&) noexcept;

  /// Untracked input owned by the tape.
  Var constant(Matrix value);
  /// Untracked input borrowed from the caller; `value` must outlive the tape.
  Var constant_ref(Matrix const &value);
  /// Tracked leaf (a trainable parameter). Rejects non-finite entries.
  Var leaf(Matrix value);
  /// Tracked leaf borrowed from the caller; `value` must outlive the tape.
  Var leaf_ref(Matrix const &value);

  Matrix const &value(Var v) const;
  /// Gradient of the last backward() loss w.r.t. `v`; zeros when no path exists.
  Matrix grad(Var v) const;
  /// acc += gradient of `v`; a no-op when no path exists.
  void accumulate_grad(Var v, Matrix &acc) const;
  bool   requires_grad(Var v) const;
  std::size_t size() const noexcept;

  /// Populate adjoints from a 1×1 loss node. A second call without
  /// reset_gradients() is a ContractError.
  void backward(Var loss);
  void reset_gradients();

  // Primitive operations. Shapes follow the usual linear-algebra rules and a
  // mismatch throws ShapeError naming both operands.
  Var matmul(Var a, Var b);
  /// a·bᵀ
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  /// Adds the 1×n row vector `row` to every row of `a`.
  Var add_row(Var a, Var row);
  /// Adds the n×1 column vector `col` to every column of `a`.
  Var add_col(Var a, Var col);
  Var scale(Var a, double s);
  Var transpose(Var a);
  /// Row-wise softmax. With `causal`, row i only sees columns j <= i + offset.
  Var softmax_rows(Var a, bool causal = false, std::size_t offset = 0);
  /// Stacks the operands vertically (all share a column count).
  Var concat_rows(std::span<Var const> parts);
  /// Places the operands side by side (all share a row count).
  Var concat_cols(std::span<Var const> parts);
  Var slice_rows(Var a, std::size_t begin, std::size_t count);
  Var slice_cols(Var a, std::size_t begin, std::size_t count);
  /// Gathers rows of `table` by index (embedding lookup). Indices may repeat.
  Var row_select(Var table, std::span<std::size_t const> indices);
  /// Row-wise layer normalization with 1×n gain and bias.
  Var layernorm(Var a, Var gain, Var bias, double eps = 1e-5);
  /// GELU, tanh approximation.
  Var gelu(Var a);
  /// Sum of all entries, 1×1.
  Var sum(Var a);
  /// Mean token cross-entropy over rows whose target is >= 0. Rows with a
  /// negative target are ignored. Returns 1×1.
  Var cross_entropy(Var logits, std::span<int const> targets);
  /// Reinterprets an (rows·cols)-entry vector as a rows×cols matrix filled
  /// column by column: out(r, c) = v[c·rows + r].
  Var reshape_columns(Var v, std::size_t rows, std::size_t cols);

private:
  struct Node;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Central finite-difference derivative of a scalar function of one matrix
/// entry. Test-side helper; independent of the tape.
template <class F>
double central_difference(F &&f, Matrix &m, std::size_t r, std::size_t c, double step = 1e-5)
{
  double const saved = m(r, c);
  m(r, c)            = saved + step;
  double const up    = f();
  m(r, c)            = saved - step;
  double const down  = f();
  m(r, c)            = saved;
  return (up - down) / (2.0 * step);
}

}  // namespace mharag::numerics
