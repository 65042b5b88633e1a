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

#include "mharag/numerics/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "mharag/error.hpp"
#include "eigen_map.hpp"

namespace mharag::numerics {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
  : rows_(rows)
  , cols_(cols)
  , data_(rows * cols, fill)
{}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
  : rows_(rows)
  , cols_(cols)
  , data_(std::move(data))
{
  if (data_.size() != rows * cols)
  {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows)
{
  std::size_t const r = rows.size();
  std::size_t const c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (auto const &row : rows)
  {
    if (row.size() != c)
    {
      throw ShapeError("ragged initializer for Matrix::from_rows");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return {r, c, std::move(data)};
}

Matrix Matrix::identity(std::size_t n)
{
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
  {
    m(i, i) = 1.0;
  }
  return m;
}

Matrix Matrix::column(std::span<double const> values)
{
  return {values.size(), 1, std::vector<double>(values.begin(), values.end())};
}

Matrix Matrix::row_vector(std::span<double const> values)
{
  return {1, values.size(), std::vector<double>(values.begin(), values.end())};
}

Matrix Matrix::normal(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64 &rng)
{
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double &v : m.data_)
  {
    v = dist(rng);
  }
  return m;
}

Matrix Matrix::transpose() const
{
  Matrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
  {
    for (std::size_t c = 0; c < cols_; ++c)
    {
      out(c, r) = (*this)(r, c);
    }
  }
  return out;
}

Matrix Matrix::column_at(std::size_t c) const
{
  if (c >= cols_)
  {
    throw ShapeError("column " + std::to_string(c) + " out of range for " + shape_string());
  }
  Matrix out(rows_, 1);
  for (std::size_t r = 0; r < rows_; ++r)
  {
    out(r, 0) = (*this)(r, c);
  }
  return out;
}

void Matrix::fill(double v)
{
  std::fill(data_.begin(), data_.end(), v);
}

bool Matrix::all_finite() const noexcept
{
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::require_finite(std::string const &what) const
{
  if (!all_finite())
  {
    throw NumericError(what + ": non-finite entry in " + shape_string() + " matrix");
  }
}

std::string Matrix::shape_string() const
{
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

Matrix matmul(Matrix const &a, Matrix const &b)
{
  if (a.cols() != b.rows())
  {
    throw ShapeError("matmul shape mismatch: (" + a.shape_string() + ") * (" + b.shape_string() + ")");
  }
  Matrix out(a.rows(), b.cols());
  detail::map(out).noalias() = detail::map(a) * detail::map(b);
  return out;
}

Matrix matmul_nt(Matrix const &a, Matrix const &b)
{
  if (a.cols() != b.cols())
  {
    throw ShapeError("matmul_nt shape mismatch: (" + a.shape_string() + ") * (" + b.shape_string() +
                     ")^T");
  }
  Matrix out(a.rows(), b.rows());
  detail::map(out).noalias() = detail::map(a) * detail::map(b).transpose();
  return out;
}

Matrix matmul_tn(Matrix const &a, Matrix const &b)
{
  if (a.rows() != b.rows())
  {
    throw ShapeError("matmul_tn shape mismatch: (" + a.shape_string() + ")^T * (" + b.shape_string() +
                     ")");
  }
  Matrix out(a.cols(), b.cols());
  detail::map(out).noalias() = detail::map(a).transpose() * detail::map(b);
  return out;
}

Matrix softmax_rows(Matrix const &logits)
{
  if (logits.cols() == 0)
  {
    throw EmptyContextError("softmax over zero entries");
  }
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r)
  {
    auto const in  = logits.row(r);
    auto       dst = out.row(r);
    double const mx = *std::max_element(in.begin(), in.end());
    double       total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c)
    {
      dst[c] = std::exp(in[c] - mx);
      total += dst[c];
    }
    for (double &v : dst)
    {
      v /= total;
    }
  }
  return out;
}

double max_abs_diff(Matrix const &a, Matrix const &b)
{
  if (a.rows() != b.rows() || a.cols() != b.cols())
  {
    throw ShapeError("max_abs_diff shape mismatch: " + a.shape_string() + " vs " + b.shape_string());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

double frobenius_norm(Matrix const &a)
{
  double total = 0.0;
  for (double v : a.data())
  {
    total += v * v;
  }
  return std::sqrt(total);
}

}  // namespace mharag::numerics
