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

#include <stdexcept>
#include <string>

namespace mharag {

// Root of every error the library throws. Subclasses name the failure class
// so callers (and tests) can distinguish contract violations from bad input.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error
{
public:
  using Error::Error;
};

class ContractError : public Error
{
public:
  using Error::Error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

class NumericError : public Error
{
public:
  using Error::Error;
};

/// An encoder that needs retrieved exemplars was handed none.
class EmptyContextError : public Error
{
public:
  using Error::Error;
};

/// Retrieval left no candidates after exclusion.
class EmptyResultError : public Error
{
public:
  using Error::Error;
};

class SchemaError : public Error
{
public:
  using Error::Error;
};

class LengthError : public Error
{
public:
  using Error::Error;
};

class DomainError : public Error
{
public:
  using Error::Error;
};

class UndefinedMetricError : public Error
{
public:
  using Error::Error;
};

class RemoteError : public Error
{
public:
  RemoteError(std::string const &what, int retries)
    : Error(what + " (after " + std::to_string(retries) + " retries)")
    , retries_(retries)
  {}

  int retries() const noexcept
  {
    return retries_;
  }

private:
  int retries_;
};

class IoError : public Error
{
public:
  using Error::Error;
};

}  // namespace mharag
