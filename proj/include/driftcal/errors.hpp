// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace driftcal {

// Precondition violated by caller-supplied values (bad grid, mismatched lengths, ...).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed file contents or scenario/manifest descriptions.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File system failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace driftcal
