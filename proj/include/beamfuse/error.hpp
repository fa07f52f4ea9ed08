// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace beamfuse {

/// Invalid argument: bad shape, out-of-range value, violated precondition.
/// The CLI maps this to exit code 2.
class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operand dimensions do not agree.
class ShapeError : public ValueError {
 public:
  using ValueError::ValueError;
};

/// Malformed or inconsistent external data (model file, corpus, IO failure).
/// The CLI maps this to exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace beamfuse
