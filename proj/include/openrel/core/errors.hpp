#pragma once

#include <stdexcept>
#include <string>

namespace openrel {

// Input that violates a documented contract (bad dataset, bad config, bad
// arguments). The CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed serialized input (JSON, checkpoint container).
class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace openrel
