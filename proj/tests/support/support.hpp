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
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mharag/data.hpp"
#include "mharag/embedding.hpp"
#include "mharag/encoders.hpp"
#include "mharag/numerics/matrix.hpp"
#include "mharag/retrieval.hpp"
#include "mharag/toy_lm.hpp"

namespace mharag::testing {

using numerics::Matrix;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
  TempDir();
  ~TempDir();
  TempDir(TempDir const &)            = delete;
  TempDir &operator=(TempDir const &) = delete;

  std::filesystem::path const &path() const noexcept
  {
    return path_;
  }
  std::filesystem::path operator/(std::string const &name) const
  {
    return path_ / name;
  }

private:
  std::filesystem::path path_;
};

/// One layer, d=16: fast enough for per-test forward passes.
lm::LmConfig tiny_lm();
lm::LmWeights tiny_weights(std::uint64_t seed = 0);

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64 &rng, double scale = 1.0);
embedding::DenseEmbedding random_embedding(std::size_t dim, std::mt19937_64 &rng);

/// A small cluster-classification dataset (6 clusters, 60/20/20).
data::SplitDataset small_cluster(std::uint64_t seed = 0);

/// Per-head loops over the attention equations, sharing no code with the encoder.
Matrix naive_mha(encoders::MhaRagParams const &params, embedding::DenseEmbedding const &query,
                 std::span<embedding::DenseEmbedding const> exemplars);

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-7);

struct GradientReport
{
  std::string name;        // tensor class, e.g. "mha.W_Q[0]" or "Z"
  std::size_t coordinates = 0;
  double      max_rel_err = 0.0;
};

/// Compares tape gradients of the answer loss against central differences for
/// every trainable tensor of `method` and for the soft prompt Z itself, going
/// through encode -> frozen LM -> cross-entropy. Checks `coords` random
/// entries per tensor.
std::vector<GradientReport> pipeline_gradient_check(lm::LmWeights const &weights, encoders::Method method,
                                                    std::size_t coords, std::uint64_t seed);

}  // namespace mharag::testing
