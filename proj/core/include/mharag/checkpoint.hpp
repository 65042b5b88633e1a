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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mharag/numerics/matrix.hpp"

namespace mharag {

/// Binary checkpoint container shared by encoder and LM weights.
///
/// Layout: the 8 magic bytes "MHRGCKPT", a little-endian u32 header length, a
/// JSON header ({"format": 1, "kind": ..., "meta": {...}, "tensors":
/// [{"name", "rows", "cols"}]}), then every tensor's doubles in header order.
struct Checkpoint
{
  std::string                                            kind;
  nlohmann::json                                         meta = nlohmann::json::object();
  std::vector<std::pair<std::string, numerics::Matrix>> tensors;

  numerics::Matrix const &tensor(std::string const &name) const;
};

inline constexpr int kCheckpointFormat = 1;

void       write_checkpoint(Checkpoint const &ckpt, std::filesystem::path const &path);
Checkpoint read_checkpoint(std::filesystem::path const &path);

/// FNV-1a over the raw bytes of the tensors, in order.
std::uint64_t checksum(std::span<numerics::Matrix const *const> tensors);

}  // namespace mharag
