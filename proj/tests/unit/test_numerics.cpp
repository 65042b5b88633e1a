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

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mharag/error.hpp"
#include "mharag/numerics/adam.hpp"
#include "mharag/numerics/matrix.hpp"
#include "mharag/numerics/tape.hpp"
#include "support.hpp"

namespace {

using namespace mharag;
using namespace mharag::numerics;
using mharag::testing::random_matrix;
using mharag::testing::relative_error;

TEST(Matmul, IdentityLeavesMatrixUnchanged)
{
  std::mt19937_64 rng(1);
  Matrix const    m = random_matrix(3, 4, rng);
  EXPECT_EQ(matmul(Matrix::identity(3), m), m);
}

TEST(Matmul, HandExample)
{
  Matrix const a = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix const b = Matrix::from_rows({{1}, {1}});
  EXPECT_EQ(matmul(a, b), Matrix::from_rows({{3}, {7}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes)
{
  try
  {
    (void)matmul(Matrix(2, 3), Matrix(4, 2));
    FAIL() << "expected ShapeError";
  }
  catch (ShapeError const &e)
  {
    std::string const what = e.what();
    EXPECT_NE(what.find("2x3"), std::string::npos) << what;
    EXPECT_NE(what.find("4x2"), std::string::npos) << what;
  }
}

TEST(Matmul, TransposedVariantsAgree)
{
  std::mt19937_64 rng(2);
  Matrix const    a = random_matrix(3, 5, rng);
  Matrix const    b = random_matrix(4, 5, rng);
  Matrix const    c = random_matrix(3, 4, rng);
  EXPECT_LE(max_abs_diff(matmul_nt(a, b), matmul(a, b.transpose())), 1e-14);
  EXPECT_LE(max_abs_diff(matmul_tn(a, c), matmul(a.transpose(), c)), 1e-14);
}

TEST(Softmax, UniformOnEqualLogits)
{
  Matrix const s = softmax_rows(Matrix(1, 3, 0.0));
  for (double v : s.data())
  {
    EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, SingletonIsOne)
{
  EXPECT_EQ(softmax_rows(Matrix::from_rows({{-42.5}}))(0, 0), 1.0);
}

TEST(Softmax, LargeLogitsDoNotOverflow)
{
  Matrix const s = softmax_rows(Matrix::from_rows({{1000, 1000}}));
  EXPECT_EQ(s(0, 0), 0.5);
  EXPECT_EQ(s(0, 1), 0.5);
}

TEST(Softmax, EmptyRowIsAnError)
{
  EXPECT_THROW((void)softmax_rows(Matrix(1, 0)), EmptyContextError);
}

TEST(Softmax, SumsToOneAndIgnoresShift)
{
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial)
  {
    Matrix const x = random_matrix(1, 1 + trial % 9, rng, 20.0);
    Matrix       shifted = x;
    for (double &v : shifted.data())
    {
      v += 123.25;
    }
    Matrix const s = softmax_rows(x);
    double       total = 0.0;
    for (double v : s.data())
    {
      EXPECT_GT(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_LE(max_abs_diff(s, softmax_rows(shifted)), 1e-12);
  }
}

TEST(Backward, SumOfProductGradientIsOnesTimesXTransposed)
{
  std::mt19937_64 rng(4);
  Matrix const    w = random_matrix(3, 4, rng);
  Matrix const    x = random_matrix(4, 1, rng);
  Tape            tape;
  Var const       wv = tape.leaf(w);
  Var const       xv = tape.constant(x);
  tape.backward(tape.sum(tape.matmul(wv, xv)));
  Matrix const expected = matmul(Matrix(3, 1, 1.0), x.transpose());
  EXPECT_LE(max_abs_diff(tape.grad(wv), expected), 1e-15);
}

TEST(Backward, DetachedParameterHasZeroGradient)
{
  Tape      tape;
  Var const p    = tape.leaf(Matrix(2, 2, 1.0));
  Var const q    = tape.leaf(Matrix(2, 2, 3.0));
  EXPECT_FALSE(tape.requires_grad(tape.constant(Matrix(1, 1))));
  tape.backward(tape.sum(q));
  EXPECT_EQ(tape.grad(p), Matrix(2, 2, 0.0));
}

TEST(Backward, SecondCallWithoutResetIsAnError)
{
  Tape      tape;
  Var const p    = tape.leaf(Matrix(2, 2, 1.0));
  Var const loss = tape.sum(p);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), ContractError);
  tape.reset_gradients();
  EXPECT_NO_THROW(tape.backward(loss));
}

TEST(Backward, NonScalarLossIsAnError)
{
  Tape      tape;
  Var const p = tape.leaf(Matrix(2, 2, 1.0));
  EXPECT_THROW(tape.backward(p), ContractError);
}

TEST(Backward, RepeatedRunsAreBitIdentical)
{
  std::mt19937_64 rng(5);
  Tape            tape;
  Var const       a = tape.leaf(random_matrix(4, 6, rng));
  Var const       b = tape.leaf(random_matrix(6, 5, rng));
  Var const       loss = tape.sum(tape.gelu(tape.softmax_rows(tape.matmul(a, b))));
  tape.backward(loss);
  Matrix const ga = tape.grad(a);
  Matrix const gb = tape.grad(b);
  tape.reset_gradients();
  tape.backward(loss);
  EXPECT_EQ(tape.grad(a), ga);
  EXPECT_EQ(tape.grad(b), gb);
}

TEST(Leaf, RejectsNonFiniteValues)
{
  Tape   tape;
  Matrix bad(1, 2, 0.0);
  bad(0, 1) = std::nan("");
  EXPECT_THROW((void)tape.leaf(bad), NumericError);
}

// ---------------------------------------------------------------------------
// Finite-difference checks for every primitive.

using Build = std::function<Var(Tape &, std::vector<Var> const &)>;

// Reduces an op output to a scalar with a dense random weighting a_i·b_j so
// every entry of the output contributes with a distinct coefficient.
Var weighted_sum(Tape &tape, Var out, std::mt19937_64 &rng)
{
  Matrix const &v = tape.value(out);
  Var const     a = tape.constant(random_matrix(1, v.rows(), rng));
  Var const     b = tape.constant(random_matrix(v.cols(), 1, rng));
  return tape.matmul(tape.matmul(a, out), b);
}

double check_op(Build const &build, std::vector<Matrix> inputs, std::uint64_t seed)
{
  auto const scalar = [&](std::vector<Matrix> const &values, Tape &tape, std::vector<Var> &leaves) {
    leaves.clear();
    for (auto const &m : values)
    {
      leaves.push_back(tape.leaf(m));
    }
    std::mt19937_64 rng(seed);
    return weighted_sum(tape, build(tape, leaves), rng);
  };
  Tape             tape;
  std::vector<Var> leaves;
  tape.backward(scalar(inputs, tape, leaves));

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i)
  {
    Matrix const grad = tape.grad(leaves[i]);
    for (std::size_t r = 0; r < inputs[i].rows(); ++r)
    {
      for (std::size_t c = 0; c < inputs[i].cols(); ++c)
      {
        double const num = central_difference(
          [&] {
            Tape             t;
            std::vector<Var> l;
            return t.value(scalar(inputs, t, l))(0, 0);
          },
          inputs[i], r, c);
        worst = std::max(worst, relative_error(grad(r, c), num, 1e-6));
      }
    }
  }
  return worst;
}

struct ShapeCase
{
  std::size_t r, c;
};

std::vector<ShapeCase> shapes()
{
  return {{2, 3}, {3, 3}, {4, 2}, {5, 7}, {8, 8}};
}

constexpr double kTol = 1e-4;

TEST(FiniteDifference, Matmul)
{
  std::mt19937_64 rng(10);
  for (auto s : shapes())
  {
    std::vector<Matrix> in{random_matrix(s.r, s.c, rng), random_matrix(s.c, s.r, rng)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.matmul(v[0], v[1]); }, in, 1), kTol);
    std::vector<Matrix> nt{random_matrix(s.r, s.c, rng), random_matrix(s.r + 1, s.c, rng)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.matmul_nt(v[0], v[1]); }, nt, 2), kTol);
  }
}

TEST(FiniteDifference, AddAndBroadcasts)
{
  std::mt19937_64 rng(11);
  for (auto s : shapes())
  {
    std::vector<Matrix> two{random_matrix(s.r, s.c, rng), random_matrix(s.r, s.c, rng)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.add(v[0], v[1]); }, two, 3), kTol);
    std::vector<Matrix> row{random_matrix(s.r, s.c, rng), random_matrix(1, s.c, rng)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.add_row(v[0], v[1]); }, row, 4), kTol);
    std::vector<Matrix> col{random_matrix(s.r, s.c, rng), random_matrix(s.r, 1, rng)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.add_col(v[0], v[1]); }, col, 5), kTol);
  }
}

TEST(FiniteDifference, ScaleTransposeSum)
{
  std::mt19937_64 rng(12);
  for (auto s : shapes())
  {
    std::vector<Matrix> one{random_matrix(s.r, s.c, rng)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.scale(v[0], -1.75); }, one, 6), kTol);
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.transpose(v[0]); }, one, 7), kTol);
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.sum(v[0]); }, one, 8), kTol);
  }
}

TEST(FiniteDifference, Softmax)
{
  std::mt19937_64 rng(13);
  for (auto s : shapes())
  {
    std::vector<Matrix> one{random_matrix(s.r, s.c, rng, 3.0)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.softmax_rows(v[0]); }, one, 9), kTol);
    std::vector<Matrix> sq{random_matrix(s.r, s.r + 2, rng, 3.0)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.softmax_rows(v[0], true, 2); }, sq, 10), kTol);
  }
}

TEST(FiniteDifference, ConcatAndSlice)
{
  std::mt19937_64 rng(14);
  for (auto s : shapes())
  {
    std::vector<Matrix> rows{random_matrix(s.r, s.c, rng), random_matrix(2, s.c, rng)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.concat_rows(v); }, rows, 11), kTol);
    std::vector<Matrix> cols{random_matrix(s.r, s.c, rng), random_matrix(s.r, 3, rng)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.concat_cols(v); }, cols, 12), kTol);
    std::vector<Matrix> one{random_matrix(s.r, s.c, rng)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.slice_rows(v[0], 1, 1); }, one, 13), kTol);
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.slice_cols(v[0], 1, 1); }, one, 14), kTol);
  }
}

TEST(FiniteDifference, RowSelectWithRepeats)
{
  std::mt19937_64                rng(15);
  std::vector<std::size_t> const idx{2, 0, 2, 1};
  for (auto s : shapes())
  {
    std::vector<Matrix> one{random_matrix(std::max<std::size_t>(s.r, 3), s.c, rng)};
    EXPECT_LE(check_op([&](Tape &t, auto const &v) { return t.row_select(v[0], idx); }, one, 15), kTol);
  }
}

TEST(FiniteDifference, LayernormAndGelu)
{
  std::mt19937_64 rng(16);
  for (auto s : shapes())
  {
    std::vector<Matrix> ln{random_matrix(s.r, s.c, rng, 2.0), random_matrix(1, s.c, rng),
                           random_matrix(1, s.c, rng)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.layernorm(v[0], v[1], v[2]); }, ln, 17), kTol);
    std::vector<Matrix> one{random_matrix(s.r, s.c, rng, 3.0)};
    EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.gelu(v[0]); }, one, 18), kTol);
  }
}

TEST(FiniteDifference, CrossEntropyIgnoresNegativeTargets)
{
  std::mt19937_64 rng(17);
  for (auto s : shapes())
  {
    std::vector<int> targets(s.r);
    for (std::size_t i = 0; i < s.r; ++i)
    {
      targets[i] = i % 3 == 1 ? -1 : static_cast<int>(i % s.c);
    }
    std::vector<Matrix> one{random_matrix(s.r, s.c, rng, 3.0)};
    EXPECT_LE(check_op([&](Tape &t, auto const &v) { return t.cross_entropy(v[0], targets); }, one, 19), kTol);
  }
}

TEST(FiniteDifference, ReshapeColumns)
{
  std::mt19937_64 rng(18);
  std::vector<Matrix> one{random_matrix(12, 1, rng)};
  EXPECT_LE(check_op([](Tape &t, auto const &v) { return t.reshape_columns(v[0], 4, 3); }, one, 20), kTol);
}

TEST(ReshapeColumns, FillsColumnByColumn)
{
  Tape      tape;
  Var const v = tape.constant(Matrix::from_rows({{1}, {2}, {3}, {4}, {5}, {6}}));
  EXPECT_EQ(tape.value(tape.reshape_columns(v, 2, 3)), Matrix::from_rows({{1, 3, 5}, {2, 4, 6}}));
}

TEST(CrossEntropy, UniformLogitsGiveLogOfWidth)
{
  Tape             tape;
  std::vector<int> targets{0, 3, -1};
  Var const        loss = tape.cross_entropy(tape.constant(Matrix(3, 7, 0.5)), targets);
  EXPECT_NEAR(tape.value(loss)(0, 0), std::log(7.0), 1e-14);
}

TEST(CrossEntropy, NoScoredRowIsAnError)
{
  Tape             tape;
  std::vector<int> targets{-1, -1};
  EXPECT_THROW((void)tape.cross_entropy(tape.constant(Matrix(2, 3)), targets), ContractError);
}

TEST(Adam, FirstStepMovesBySignTimesRate)
{
  Adam                adam({0.1, 0.9, 0.999, 1e-8});
  Matrix              p = Matrix::from_rows({{1.0, -2.0}});
  std::vector<Matrix> g{Matrix::from_rows({{0.5, -3.0}})};
  std::vector<Matrix *> params{&p};
  adam.step(params, g);
  // m̂ = g, v̂ = g², so the update is lr·g/(|g|+ε).
  EXPECT_NEAR(p(0, 0), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p(0, 1), -2.0 + 0.1 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_EQ(adam.state_entries(), 2u);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, RejectsNonPositiveRate)
{
  Adam adam({0.1, 0.9, 0.999, 1e-8});
  EXPECT_THROW(adam.set_learning_rate(0.0), ConfigError);
}

TEST(ClipGlobalNorm, RescalesOnlyAboveThreshold)
{
  std::vector<Matrix> g{Matrix::from_rows({{3.0}}), Matrix::from_rows({{4.0}})};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0](0, 0), 0.6, 1e-15);
  EXPECT_NEAR(g[1](0, 0), 0.8, 1e-15);
  std::vector<Matrix> small{Matrix::from_rows({{0.3}})};
  clip_global_norm(small, 1.0);
  EXPECT_EQ(small[0](0, 0), 0.3);
}

}  // namespace
