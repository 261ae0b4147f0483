// Copyright 2026 The BFtS Lab Authors.
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

namespace bfts {

// Base of every error the library raises. The CLI maps the subclasses onto
// exit codes (usage 1, data 2, verification 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files, inconsistent graphs, invalid configurations.
class DataError : public Error {
 public:
  using Error::Error;
};

// Tensor shape disagreement inside the differentiation engine.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A metric or loss whose precondition on group composition fails
// (e.g. one sensitive group is empty on the evaluation mask).
class DegenerateGroupError : public Error {
 public:
  using Error::Error;
};

// An exhaustive search was asked to handle an instance beyond its limit.
class InstanceTooLargeError : public Error {
 public:
  using Error::Error;
};

}  // namespace bfts
