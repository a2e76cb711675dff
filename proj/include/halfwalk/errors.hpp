// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace halfwalk {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed model documents and hypothesis violations at load time.
class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Exponent guard in the generating functions.
class RangeError : public Error {
 public:
  using Error::Error;
};

// A solver could not certify its answer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

[[noreturn]] void fail_domain(const std::string& what);

}  // namespace halfwalk
