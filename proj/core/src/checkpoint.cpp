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

#include "mharag/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mharag/embedding.hpp"
#include "mharag/error.hpp"

namespace mharag {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'H', 'R', 'G', 'C', 'K', 'P', 'T'};

}  // namespace

numerics::Matrix const &Checkpoint::tensor(std::string const &name) const
{
  for (auto const &[n, m] : tensors)
  {
    if (n == name)
    {
      return m;
    }
  }
  throw SchemaError("checkpoint has no tensor '" + name + "'");
}

void write_checkpoint(Checkpoint const &ckpt, std::filesystem::path const &path)
{
  nlohmann::json header;
  header["format"] = kCheckpointFormat;
  header["kind"]   = ckpt.kind;
  header["meta"]   = ckpt.meta;
  auto &list       = header["tensors"] = nlohmann::json::array();
  for (auto const &[name, m] : ckpt.tensors)
  {
    list.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  std::string const text = header.dump();
  if (path.has_parent_path())
  {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out)
  {
    throw IoError("cannot write checkpoint " + path.string());
  }
  auto const len = static_cast<std::uint32_t>(text.size());
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<char const *>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto const &[name, m] : ckpt.tensors)
  {
    out.write(reinterpret_cast<char const *>(m.data().data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out)
  {
    throw IoError("short write to checkpoint " + path.string());
  }
}

Checkpoint read_checkpoint(std::filesystem::path const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    throw IoError("cannot open checkpoint " + path.string());
  }
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
  {
    throw SchemaError(path.string() + " is not a checkpoint file");
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char *>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in)
  {
    throw SchemaError("truncated checkpoint header in " + path.string());
  }
  nlohmann::json header;
  try
  {
    header = nlohmann::json::parse(text);
  }
  catch (nlohmann::json::exception const &e)
  {
    throw SchemaError("bad checkpoint header in " + path.string() + ": " + e.what());
  }
  if (header.value("format", 0) != kCheckpointFormat)
  {
    throw SchemaError("unsupported checkpoint format in " + path.string());
  }
  Checkpoint ckpt;
  ckpt.kind = header.at("kind").get<std::string>();
  ckpt.meta = header.at("meta");
  for (auto const &t : header.at("tensors"))
  {
    auto const       rows = t.at("rows").get<std::size_t>();
    auto const       cols = t.at("cols").get<std::size_t>();
    numerics::Matrix m(rows, cols);
    in.read(reinterpret_cast<char *>(m.data().data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in)
    {
      throw SchemaError("truncated tensor data in " + path.string());
    }
    ckpt.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  return ckpt;
}

std::uint64_t checksum(std::span<numerics::Matrix const *const> tensors)
{
  std::uint64_t h = embedding::kFnvOffset;
  for (numerics::Matrix const *m : tensors)
  {
    auto const bytes = std::as_bytes(m->data());
    h = embedding::fnv1a(std::string_view(reinterpret_cast<char const *>(bytes.data()), bytes.size()), h);
  }
  return h;
}

}  // namespace mharag
