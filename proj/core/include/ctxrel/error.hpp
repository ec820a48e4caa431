#pragma once

#include <stdexcept>
#include <string>

namespace ctxrel {

/// Base for every error the library reports on bad input data.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent file content. The message names the offending record.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a data precondition (unknown ids, wrong dimensions).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Optimization could not start or diverged.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctxrel
