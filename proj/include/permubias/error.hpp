#pragma once

#include <stdexcept>
#include <string>

namespace permubias {

// Base type for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape or size disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid configuration value (model config, run config, adapter target).
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite or out-of-domain numeric input.
struct NumericError : Error {
  using Error::Error;
};

// API contract violated (e.g. backward on a non-scalar loss).
struct ContractError : Error {
  using Error::Error;
};

// Sequence does not fit the model's position budget.
struct CapacityError : Error {
  using Error::Error;
};

// Index or count outside its valid range.
struct RangeError : Error {
  using Error::Error;
};

// Operation guarded against oversized inputs (use the sampling path instead).
struct GuardError : Error {
  using Error::Error;
};

// Prompt template missing a required placeholder or malformed.
struct TemplateError : Error {
  using Error::Error;
};

// File could not be parsed at all.
struct ParseError : Error {
  using Error::Error;
};

// File parsed but a record violates an invariant.
struct ValidationError : Error {
  using Error::Error;
};

// Filesystem failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace permubias
