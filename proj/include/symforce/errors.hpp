#pragma once

#include <stdexcept>
#include <string>

namespace symforce {

// Malformed input, foreign conditions, unknown registry ids.
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A bounded search or enumeration ran out of room. Inconclusive, never a refutation.
struct budget_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A documented precondition of a construction does not hold.
struct precondition_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace symforce
