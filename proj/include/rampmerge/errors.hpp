// Copyright 2026 The rampmerge Authors
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

namespace rampmerge {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (edge lists, CSV, JSON payloads).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

// Graph or matrix violates a structural invariant.
class InvariantError : public Error {
 public:
  using Error::Error;
};

// Argument outside the documented domain of an operation.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Estimator or formula undefined on the given data (e.g. an empty arm).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Memory or enumeration budget exceeded.
class ResourceError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration; carries the JSON path of the offending field.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// External estimator process failed.
class PluginError : public Error {
 public:
  using Error::Error;
};

}  // namespace rampmerge
