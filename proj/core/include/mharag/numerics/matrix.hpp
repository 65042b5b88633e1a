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
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mharag::numerics {

/// Dense row-major matrix of doubles. Vectors are n×1 (column) or 1×n (row).
class Matrix
{
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix column(std::span<double const> values);
  static Matrix row_vector(std::span<double const> values);
  /// Entries drawn i.i.d. from Normal(0, stddev²).
  static Matrix normal(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64 &rng);

  std::size_t rows() const noexcept
  {
    return rows_;
  }
  std::size_t cols() const noexcept
  {
    return cols_;
  }
  std::size_t size() const noexcept
  {
    return data_.size();
  }
  bool empty() const noexcept
  {
    return data_.empty();
  }

  double &operator()(std::size_t r, std::size_t c)
  {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const
  {
    return data_[r * cols_ + c];
  }

  std::span<double>       data() noexcept
  {
    return data_;
  }
  std::span<double const> data() const noexcept
  {
    return data_;
  }
  std::span<double> row(std::size_t r)
  {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double const> row(std::size_t r) const
  {
    return {data_.data() + r * cols_, cols_};
  }

  Matrix transpose() const;
  Matrix column_at(std::size_t c) const;

  void fill(double v);
  bool all_finite() const noexcept;
  /// Throws NumericError naming `what` when any entry is NaN or infinite.
  void require_finite(std::string const &what) const;

  std::string shape_string() const;

  friend bool operator==(Matrix const &a, Matrix const &b) = default;

private:
  std::size_t         rows_ = 0;
  std::size_t         cols_ = 0;
  std::vector<double> data_;
};

/// a·b. Throws ShapeError naming both shapes on mismatch.
Matrix matmul(Matrix const &a, Matrix const &b);
/// a·bᵀ
Matrix matmul_nt(Matrix const &a, Matrix const &b);
/// aᵀ·b
Matrix matmul_tn(Matrix const &a, Matrix const &b);

/// Row-wise softmax with max subtraction. Throws EmptyContextError on zero columns.
Matrix softmax_rows(Matrix const &logits);

double max_abs_diff(Matrix const &a, Matrix const &b);
double frobenius_norm(Matrix const &a);

}  // namespace mharag::numerics
