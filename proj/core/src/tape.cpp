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

#include "mharag/numerics/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mharag/error.hpp"
#include "eigen_map.hpp"

namespace mharag::numerics {

namespace {

enum class Op
{
  Constant,
  Leaf,
  MatMul,
  MatMulNT,
  Add,
  AddRow,
  AddCol,
  Scale,
  Transpose,
  Softmax,
  ConcatRows,
  ConcatCols,
  SliceRows,
  SliceCols,
  RowSelect,
  LayerNorm,
  Gelu,
  Sum,
  CrossEntropy,
  ReshapeColumns,
};

constexpr double kGeluC = 0.044715;

std::string shapes(Matrix const &a, Matrix const &b)
{
  return "(" + a.shape_string() + ") and (" + b.shape_string() + ")";
}

}  // namespace

struct Tape::Node
{
  Op                         op;
  std::vector<std::uint32_t> parents;
  Matrix                     owned;
  Matrix const              *external = nullptr;
  Matrix                     adjoint;
  bool                       requires_grad = false;

  // Op-specific state.
  double                   scalar = 0.0;
  std::size_t              begin  = 0;
  std::size_t              count  = 0;
  bool                     flag   = false;
  std::vector<std::size_t> indices;
  std::vector<int>         targets;
  Matrix                   aux;
  Matrix                   aux2;

  Matrix const &value() const
  {
    return external != nullptr ? *external : owned;
  }
};

struct Tape::Impl
{
  std::vector<Node> nodes;
  bool              backward_done = false;

  Node &at(Var v)
  {
    if (v.id >= nodes.size())
    {
      throw ContractError("Var does not belong to this tape");
    }
    return nodes[v.id];
  }

  Node const &at(Var v) const
  {
    if (v.id >= nodes.size())
    {
      throw ContractError("Var does not belong to this tape");
    }
    return nodes[v.id];
  }

  Var push(Node node)
  {
    if (backward_done)
    {
      throw ContractError("cannot record new operations after backward(); call reset_gradients()");
    }
    nodes.push_back(std::move(node));
    return Var{static_cast<std::uint32_t>(nodes.size() - 1)};
  }

  Node make(Op op, std::initializer_list<Var> parents)
  {
    Node n;
    n.op = op;
    for (Var p : parents)
    {
      Node const &pn = at(p);
      n.parents.push_back(p.id);
      n.requires_grad = n.requires_grad || pn.requires_grad;
    }
    return n;
  }

  Matrix &adj(std::uint32_t id)
  {
    Node &n = nodes[id];
    if (n.adjoint.empty() && !n.value().empty())
    {
      n.adjoint = Matrix(n.value().rows(), n.value().cols());
    }
    return n.adjoint;
  }

  void backprop(std::uint32_t id);
};

Tape::Tape()
  : impl_(std::make_unique<Impl>())
{}
Tape::~Tape()                          = default;
Tape::Tape(Tape &&) noexcept            = default;
Tape &Tape::operator=(Tape &&) noexcept = default;

Var Tape::constant(Matrix value)
{
  Node n;
  n.op    = Op::Constant;
  n.owned = std::move(value);
  return impl_->push(std::move(n));
}

Var Tape::constant_ref(Matrix const &value)
{
  Node n;
  n.op       = Op::Constant;
  n.external = &value;
  return impl_->push(std::move(n));
}

Var Tape::leaf(Matrix value)
{
  value.require_finite("parameter");
  Node n;
  n.op            = Op::Leaf;
  n.owned         = std::move(value);
  n.requires_grad = true;
  return impl_->push(std::move(n));
}

Var Tape::leaf_ref(Matrix const &value)
{
  value.require_finite("parameter");
  Node n;
  n.op            = Op::Leaf;
  n.external      = &value;
  n.requires_grad = true;
  return impl_->push(std::move(n));
}

Matrix const &Tape::value(Var v) const
{
  return impl_->at(v).value();
}

Matrix Tape::grad(Var v) const
{
  Node const &n = impl_->at(v);
  if (n.adjoint.empty())
  {
    return Matrix(n.value().rows(), n.value().cols());
  }
  return n.adjoint;
}

void Tape::accumulate_grad(Var v, Matrix &acc) const
{
  Node const &n = impl_->at(v);
  if (n.adjoint.empty())
  {
    return;
  }
  if (acc.rows() != n.adjoint.rows() || acc.cols() != n.adjoint.cols())
  {
    throw ShapeError("accumulate_grad: accumulator " + acc.shape_string() + " for gradient " +
                     n.adjoint.shape_string());
  }
  detail::map(acc) += detail::map(n.adjoint);
}

bool Tape::requires_grad(Var v) const
{
  return impl_->at(v).requires_grad;
}

std::size_t Tape::size() const noexcept
{
  return impl_->nodes.size();
}

void Tape::reset_gradients()
{
  for (Node &n : impl_->nodes)
  {
    n.adjoint = Matrix();
  }
  impl_->backward_done = false;
}

void Tape::backward(Var loss)
{
  Node &root = impl_->at(loss);
  if (root.value().rows() != 1 || root.value().cols() != 1)
  {
    throw ContractError("backward needs a scalar (1x1) loss, got " + root.value().shape_string());
  }
  if (impl_->backward_done)
  {
    throw ContractError("backward called twice without reset_gradients()");
  }
  impl_->backward_done = true;
  if (!root.requires_grad)
  {
    return;
  }
  impl_->adj(loss.id)(0, 0) = 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;)
  {
    Node const &n = impl_->nodes[id];
    if (!n.requires_grad || n.adjoint.empty())
    {
      continue;
    }
    impl_->backprop(id);
  }
}

void Tape::Impl::backprop(std::uint32_t id)
{
  // `nodes` does not grow during backward, so references stay valid.
  Node const   &n  = nodes[id];
  Matrix const &dy = n.adjoint;
  auto          wants = [&](std::size_t k) { return nodes[n.parents[k]].requires_grad; };

  switch (n.op)
  {
  case Op::Constant:
  case Op::Leaf:
    break;
  case Op::MatMul:
  {
    Matrix const &a = nodes[n.parents[0]].value();
    Matrix const &b = nodes[n.parents[1]].value();
    if (wants(0))
    {
      detail::map(adj(n.parents[0])).noalias() += detail::map(dy) * detail::map(b).transpose();
    }
    if (wants(1))
    {
      detail::map(adj(n.parents[1])).noalias() += detail::map(a).transpose() * detail::map(dy);
    }
    break;
  }
  case Op::MatMulNT:
  {
    Matrix const &a = nodes[n.parents[0]].value();
    Matrix const &b = nodes[n.parents[1]].value();
    if (wants(0))
    {
      detail::map(adj(n.parents[0])).noalias() += detail::map(dy) * detail::map(b);
    }
    if (wants(1))
    {
      detail::map(adj(n.parents[1])).noalias() += detail::map(dy).transpose() * detail::map(a);
    }
    break;
  }
  case Op::Add:
    for (std::size_t k = 0; k < 2; ++k)
    {
      if (wants(k))
      {
        detail::map(adj(n.parents[k])) += detail::map(dy);
      }
    }
    break;
  case Op::AddRow:
  {
    if (wants(0))
    {
      detail::map(adj(n.parents[0])) += detail::map(dy);
    }
    if (wants(1))
    {
      Matrix &g = adj(n.parents[1]);
      for (std::size_t r = 0; r < dy.rows(); ++r)
      {
        for (std::size_t c = 0; c < dy.cols(); ++c)
        {
          g(0, c) += dy(r, c);
        }
      }
    }
    break;
  }
  case Op::AddCol:
  {
    if (wants(0))
    {
      detail::map(adj(n.parents[0])) += detail::map(dy);
    }
    if (wants(1))
    {
      Matrix &g = adj(n.parents[1]);
      for (std::size_t r = 0; r < dy.rows(); ++r)
      {
        for (std::size_t c = 0; c < dy.cols(); ++c)
        {
          g(r, 0) += dy(r, c);
        }
      }
    }
    break;
  }
  case Op::Scale:
    if (wants(0))
    {
      detail::map(adj(n.parents[0])) += n.scalar * detail::map(dy);
    }
    break;
  case Op::Transpose:
    if (wants(0))
    {
      detail::map(adj(n.parents[0])) += detail::map(dy).transpose();
    }
    break;
  case Op::Softmax:
  {
    if (!wants(0))
    {
      break;
    }
    Matrix const &y = n.value();
    Matrix       &g = adj(n.parents[0]);
    for (std::size_t r = 0; r < y.rows(); ++r)
    {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c)
      {
        dot += dy(r, c) * y(r, c);
      }
      for (std::size_t c = 0; c < y.cols(); ++c)
      {
        g(r, c) += y(r, c) * (dy(r, c) - dot);
      }
    }
    break;
  }
  case Op::ConcatRows:
  {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < n.parents.size(); ++k)
    {
      std::size_t const rows = nodes[n.parents[k]].value().rows();
      if (wants(k))
      {
        Matrix &g = adj(n.parents[k]);
        for (std::size_t r = 0; r < rows; ++r)
        {
          auto src = dy.row(offset + r);
          auto dst = g.row(r);
          for (std::size_t c = 0; c < src.size(); ++c)
          {
            dst[c] += src[c];
          }
        }
      }
      offset += rows;
    }
    break;
  }
  case Op::ConcatCols:
  {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < n.parents.size(); ++k)
    {
      std::size_t const cols = nodes[n.parents[k]].value().cols();
      if (wants(k))
      {
        Matrix &g = adj(n.parents[k]);
        for (std::size_t r = 0; r < dy.rows(); ++r)
        {
          for (std::size_t c = 0; c < cols; ++c)
          {
            g(r, c) += dy(r, offset + c);
          }
        }
      }
      offset += cols;
    }
    break;
  }
  case Op::SliceRows:
    if (wants(0))
    {
      Matrix &g = adj(n.parents[0]);
      for (std::size_t r = 0; r < n.count; ++r)
      {
        auto src = dy.row(r);
        auto dst = g.row(n.begin + r);
        for (std::size_t c = 0; c < src.size(); ++c)
        {
          dst[c] += src[c];
        }
      }
    }
    break;
  case Op::SliceCols:
    if (wants(0))
    {
      Matrix &g = adj(n.parents[0]);
      for (std::size_t r = 0; r < dy.rows(); ++r)
      {
        for (std::size_t c = 0; c < n.count; ++c)
        {
          g(r, n.begin + c) += dy(r, c);
        }
      }
    }
    break;
  case Op::RowSelect:
    if (wants(0))
    {
      Matrix &g = adj(n.parents[0]);
      for (std::size_t i = 0; i < n.indices.size(); ++i)
      {
        auto src = dy.row(i);
        auto dst = g.row(n.indices[i]);
        for (std::size_t c = 0; c < src.size(); ++c)
        {
          dst[c] += src[c];
        }
      }
    }
    break;
  case Op::LayerNorm:
  {
    Matrix const &xhat = n.aux;
    Matrix const &rstd = n.aux2;
    Matrix const &gain = nodes[n.parents[1]].value();
    std::size_t const cols = xhat.cols();
    if (wants(0))
    {
      Matrix &g = adj(n.parents[0]);
      std::vector<double> dxhat(cols);
      for (std::size_t r = 0; r < xhat.rows(); ++r)
      {
        double mean_d  = 0.0;
        double mean_dx = 0.0;
        for (std::size_t c = 0; c < cols; ++c)
        {
          dxhat[c] = dy(r, c) * gain(0, c);
          mean_d += dxhat[c];
          mean_dx += dxhat[c] * xhat(r, c);
        }
        mean_d /= static_cast<double>(cols);
        mean_dx /= static_cast<double>(cols);
        for (std::size_t c = 0; c < cols; ++c)
        {
          g(r, c) += rstd(r, 0) * (dxhat[c] - mean_d - xhat(r, c) * mean_dx);
        }
      }
    }
    if (wants(1))
    {
      Matrix &g = adj(n.parents[1]);
      for (std::size_t r = 0; r < xhat.rows(); ++r)
      {
        for (std::size_t c = 0; c < cols; ++c)
        {
          g(0, c) += dy(r, c) * xhat(r, c);
        }
      }
    }
    if (wants(2))
    {
      Matrix &g = adj(n.parents[2]);
      for (std::size_t r = 0; r < xhat.rows(); ++r)
      {
        for (std::size_t c = 0; c < cols; ++c)
        {
          g(0, c) += dy(r, c);
        }
      }
    }
    break;
  }
  case Op::Gelu:
  {
    if (!wants(0))
    {
      break;
    }
    Matrix const &x = nodes[n.parents[0]].value();
    Matrix       &g = adj(n.parents[0]);
    double const  k = std::sqrt(2.0 / std::numbers::pi);
    for (std::size_t i = 0; i < x.size(); ++i)
    {
      double const v   = x.data()[i];
      double const t   = std::tanh(k * (v + kGeluC * v * v * v));
      double const der = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * kGeluC * v * v);
      g.data()[i] += dy.data()[i] * der;
    }
    break;
  }
  case Op::Sum:
    if (wants(0))
    {
      Matrix &g = adj(n.parents[0]);
      for (double &v : g.data())
      {
        v += dy(0, 0);
      }
    }
    break;
  case Op::CrossEntropy:
  {
    if (!wants(0))
    {
      break;
    }
    Matrix const &probs = n.aux;
    Matrix       &g     = adj(n.parents[0]);
    double const  w     = dy(0, 0) / n.scalar;
    for (std::size_t r = 0; r < probs.rows(); ++r)
    {
      int const t = n.targets[r];
      if (t < 0)
      {
        continue;
      }
      for (std::size_t c = 0; c < probs.cols(); ++c)
      {
        g(r, c) += w * probs(r, c);
      }
      g(r, static_cast<std::size_t>(t)) -= w;
    }
    break;
  }
  case Op::ReshapeColumns:
    if (wants(0))
    {
      Matrix &g = adj(n.parents[0]);
      for (std::size_t c = 0; c < dy.cols(); ++c)
      {
        for (std::size_t r = 0; r < dy.rows(); ++r)
        {
          g.data()[c * dy.rows() + r] += dy(r, c);
        }
      }
    }
    break;
  }
}

Var Tape::matmul(Var a, Var b)
{
  Node n   = impl_->make(Op::MatMul, {a, b});
  n.owned  = numerics::matmul(value(a), value(b));
  return impl_->push(std::move(n));
}

Var Tape::matmul_nt(Var a, Var b)
{
  Node n  = impl_->make(Op::MatMulNT, {a, b});
  n.owned = numerics::matmul_nt(value(a), value(b));
  return impl_->push(std::move(n));
}

Var Tape::add(Var a, Var b)
{
  Matrix const &x = value(a);
  Matrix const &y = value(b);
  if (x.rows() != y.rows() || x.cols() != y.cols())
  {
    throw ShapeError("add shape mismatch: " + shapes(x, y));
  }
  Node n  = impl_->make(Op::Add, {a, b});
  n.owned = x;
  detail::map(n.owned) += detail::map(y);
  return impl_->push(std::move(n));
}

Var Tape::add_row(Var a, Var row)
{
  Matrix const &x = value(a);
  Matrix const &b = value(row);
  if (b.rows() != 1 || b.cols() != x.cols())
  {
    throw ShapeError("add_row shape mismatch: " + shapes(x, b));
  }
  Node n  = impl_->make(Op::AddRow, {a, row});
  n.owned = x;
  detail::map(n.owned).rowwise() += detail::map(b).row(0);
  return impl_->push(std::move(n));
}

Var Tape::add_col(Var a, Var col)
{
  Matrix const &x = value(a);
  Matrix const &b = value(col);
  if (b.cols() != 1 || b.rows() != x.rows())
  {
    throw ShapeError("add_col shape mismatch: " + shapes(x, b));
  }
  Node n  = impl_->make(Op::AddCol, {a, col});
  n.owned = x;
  detail::map(n.owned).colwise() += detail::map(b).col(0);
  return impl_->push(std::move(n));
}

Var Tape::scale(Var a, double s)
{
  Node n   = impl_->make(Op::Scale, {a});
  n.scalar = s;
  n.owned  = value(a);
  detail::map(n.owned) *= s;
  return impl_->push(std::move(n));
}

Var Tape::transpose(Var a)
{
  Node n  = impl_->make(Op::Transpose, {a});
  n.owned = value(a).transpose();
  return impl_->push(std::move(n));
}

Var Tape::softmax_rows(Var a, bool causal, std::size_t offset)
{
  Matrix const &x = value(a);
  if (x.cols() == 0)
  {
    throw EmptyContextError("softmax over zero entries");
  }
  Node n  = impl_->make(Op::Softmax, {a});
  n.flag  = causal;
  n.begin = offset;
  n.owned = Matrix(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
  {
    std::size_t const width = causal ? std::min(x.cols(), r + offset + 1) : x.cols();
    auto const        in    = x.row(r);
    auto              out   = n.owned.row(r);
    double const      mx    = *std::max_element(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(width));
    double            total = 0.0;
    for (std::size_t c = 0; c < width; ++c)
    {
      out[c] = std::exp(in[c] - mx);
      total += out[c];
    }
    for (std::size_t c = 0; c < width; ++c)
    {
      out[c] /= total;
    }
  }
  return impl_->push(std::move(n));
}

Var Tape::concat_rows(std::span<Var const> parts)
{
  if (parts.empty())
  {
    throw ShapeError("concat_rows of zero operands");
  }
  std::size_t const cols  = value(parts[0]).cols();
  std::size_t       rows  = 0;
  Node              n;
  n.op = Op::ConcatRows;
  for (Var p : parts)
  {
    Matrix const &m = value(p);
    if (m.cols() != cols)
    {
      throw ShapeError("concat_rows column mismatch: " + shapes(value(parts[0]), m));
    }
    rows += m.rows();
    n.parents.push_back(p.id);
    n.requires_grad = n.requires_grad || requires_grad(p);
  }
  n.owned          = Matrix(rows, cols);
  std::size_t row0 = 0;
  for (Var p : parts)
  {
    Matrix const &m = value(p);
    std::copy(m.data().begin(), m.data().end(), n.owned.data().begin() + static_cast<std::ptrdiff_t>(row0 * cols));
    row0 += m.rows();
  }
  return impl_->push(std::move(n));
}

Var Tape::concat_cols(std::span<Var const> parts)
{
  if (parts.empty())
  {
    throw ShapeError("concat_cols of zero operands");
  }
  std::size_t const rows = value(parts[0]).rows();
  std::size_t       cols = 0;
  Node              n;
  n.op = Op::ConcatCols;
  for (Var p : parts)
  {
    Matrix const &m = value(p);
    if (m.rows() != rows)
    {
      throw ShapeError("concat_cols row mismatch: " + shapes(value(parts[0]), m));
    }
    cols += m.cols();
    n.parents.push_back(p.id);
    n.requires_grad = n.requires_grad || requires_grad(p);
  }
  n.owned          = Matrix(rows, cols);
  std::size_t col0 = 0;
  for (Var p : parts)
  {
    Matrix const &m = value(p);
    for (std::size_t r = 0; r < rows; ++r)
    {
      for (std::size_t c = 0; c < m.cols(); ++c)
      {
        n.owned(r, col0 + c) = m(r, c);
      }
    }
    col0 += m.cols();
  }
  return impl_->push(std::move(n));
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t count)
{
  Matrix const &x = value(a);
  if (begin + count > x.rows())
  {
    throw ShapeError("slice_rows [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") out of range for " + x.shape_string());
  }
  Node n  = impl_->make(Op::SliceRows, {a});
  n.begin = begin;
  n.count = count;
  n.owned = Matrix(count, x.cols());
  std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(begin * x.cols()), count * x.cols(),
              n.owned.data().begin());
  return impl_->push(std::move(n));
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t count)
{
  Matrix const &x = value(a);
  if (begin + count > x.cols())
  {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") out of range for " + x.shape_string());
  }
  Node n  = impl_->make(Op::SliceCols, {a});
  n.begin = begin;
  n.count = count;
  n.owned = Matrix(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
  {
    std::copy_n(x.row(r).begin() + static_cast<std::ptrdiff_t>(begin), count, n.owned.row(r).begin());
  }
  return impl_->push(std::move(n));
}

Var Tape::row_select(Var table, std::span<std::size_t const> indices)
{
  Matrix const &t = value(table);
  Node          n = impl_->make(Op::RowSelect, {table});
  n.indices.assign(indices.begin(), indices.end());
  n.owned = Matrix(indices.size(), t.cols());
  for (std::size_t i = 0; i < indices.size(); ++i)
  {
    if (indices[i] >= t.rows())
    {
      throw ShapeError("row_select index " + std::to_string(indices[i]) + " out of range for " +
                       t.shape_string());
    }
    auto src = t.row(indices[i]);
    std::copy(src.begin(), src.end(), n.owned.row(i).begin());
  }
  return impl_->push(std::move(n));
}

Var Tape::layernorm(Var a, Var gain, Var bias, double eps)
{
  Matrix const &x = value(a);
  Matrix const &g = value(gain);
  Matrix const &b = value(bias);
  if (g.rows() != 1 || g.cols() != x.cols() || b.rows() != 1 || b.cols() != x.cols())
  {
    throw ShapeError("layernorm parameter shape mismatch: " + shapes(x, g));
  }
  Node n  = impl_->make(Op::LayerNorm, {a, gain, bias});
  n.aux   = Matrix(x.rows(), x.cols());
  n.aux2  = Matrix(x.rows(), 1);
  n.owned = Matrix(x.rows(), x.cols());
  auto const cols = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
  {
    auto const in   = x.row(r);
    double     mean = 0.0;
    for (double v : in)
    {
      mean += v;
    }
    mean /= cols;
    double var = 0.0;
    for (double v : in)
    {
      var += (v - mean) * (v - mean);
    }
    var /= cols;
    double const rstd = 1.0 / std::sqrt(var + eps);
    n.aux2(r, 0)      = rstd;
    for (std::size_t c = 0; c < in.size(); ++c)
    {
      double const xhat = (in[c] - mean) * rstd;
      n.aux(r, c)       = xhat;
      n.owned(r, c)     = xhat * g(0, c) + b(0, c);
    }
  }
  return impl_->push(std::move(n));
}

Var Tape::gelu(Var a)
{
  Matrix const &x = value(a);
  Node          n = impl_->make(Op::Gelu, {a});
  n.owned         = Matrix(x.rows(), x.cols());
  double const k  = std::sqrt(2.0 / std::numbers::pi);
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    double const v     = x.data()[i];
    n.owned.data()[i] = 0.5 * v * (1.0 + std::tanh(k * (v + kGeluC * v * v * v)));
  }
  return impl_->push(std::move(n));
}

Var Tape::sum(Var a)
{
  Node   n     = impl_->make(Op::Sum, {a});
  double total = 0.0;
  for (double v : value(a).data())
  {
    total += v;
  }
  n.owned = Matrix(1, 1, total);
  return impl_->push(std::move(n));
}

Var Tape::cross_entropy(Var logits, std::span<int const> targets)
{
  Matrix const &x = value(logits);
  if (targets.size() != x.rows())
  {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     x.shape_string() + " logits");
  }
  Node n = impl_->make(Op::CrossEntropy, {logits});
  n.targets.assign(targets.begin(), targets.end());
  n.aux           = Matrix(x.rows(), x.cols());
  double      sum = 0.0;
  std::size_t cnt = 0;
  for (std::size_t r = 0; r < x.rows(); ++r)
  {
    int const t = targets[r];
    if (t < 0)
    {
      continue;
    }
    if (static_cast<std::size_t>(t) >= x.cols())
    {
      throw ShapeError("cross_entropy target " + std::to_string(t) + " out of range for vocab " +
                       std::to_string(x.cols()));
    }
    auto const   in    = x.row(r);
    double const mx    = *std::max_element(in.begin(), in.end());
    double       total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c)
    {
      n.aux(r, c) = std::exp(in[c] - mx);
      total += n.aux(r, c);
    }
    for (std::size_t c = 0; c < in.size(); ++c)
    {
      n.aux(r, c) /= total;
    }
    sum += -(in[static_cast<std::size_t>(t)] - mx - std::log(total));
    ++cnt;
  }
  if (cnt == 0)
  {
    throw ContractError("cross_entropy with no target positions");
  }
  n.scalar = static_cast<double>(cnt);
  n.owned  = Matrix(1, 1, sum / n.scalar);
  if (!std::isfinite(n.owned(0, 0)))
  {
    throw NumericError("cross_entropy produced a non-finite loss");
  }
  return impl_->push(std::move(n));
}

Var Tape::reshape_columns(Var v, std::size_t rows, std::size_t cols)
{
  Matrix const &x = value(v);
  if (x.size() != rows * cols)
  {
    throw ShapeError("reshape_columns: " + x.shape_string() + " cannot become " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  }
  Node n  = impl_->make(Op::ReshapeColumns, {v});
  n.owned = Matrix(rows, cols);
  for (std::size_t c = 0; c < cols; ++c)
  {
    for (std::size_t r = 0; r < rows; ++r)
    {
      n.owned(r, c) = x.data()[c * rows + r];
    }
  }
  return impl_->push(std::move(n));
}

}  // namespace mharag::numerics
