#pragma once

#include <stdexcept>
#include <string>

namespace ultr {

// Base for all toolkit errors. The CLI maps subclasses to exit codes:
// ConfigError -> 1, input/file errors -> 2, numeric divergence -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/vector shape disagreement.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Operation called in a state that does not support it (e.g. backward
// before forward, backward on an eval-mode batchnorm).
class StateError : public Error {
 public:
  using Error::Error;
};

// Lookup index outside a declared vocabulary or range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Non-finite value where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input text; message carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally well-formed input that violates a data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Bad configuration value or unknown configuration key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unknown query/document key.
class KeyError : public Error {
 public:
  using Error::Error;
};

// An annotated document has no score.
class CoverageError : public Error {
 public:
  using Error::Error;
};

// Checkpoint headers disagree (e.g. mismatched feature dimension).
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss; message names epoch and batch.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure (missing file, unwritable directory).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ultr
