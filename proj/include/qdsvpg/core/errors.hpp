// Copyright 2026 The qdsvpg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef QDSVPG_CORE_ERRORS_HPP
#define QDSVPG_CORE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace qdsvpg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value went non-finite, or a solve failed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid state, action, or argument outside an operation's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A ratio is undefined because the denominator measure misses cells the numerator visits.
class SupportError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Invalid user configuration; the message carries the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace qdsvpg

#endif  // QDSVPG_CORE_ERRORS_HPP
