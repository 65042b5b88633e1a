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

#include <optional>
#include <string>

namespace mharag::data {

/// One (question, answer) pair of a task database, with a stable id.
struct Exemplar
{
  std::string                id;
  std::string                question;
  std::string                answer;
  std::optional<std::string> doc;

  friend bool operator==(Exemplar const &, Exemplar const &) = default;
};

}  // namespace mharag::data
