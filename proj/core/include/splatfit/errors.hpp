// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splatfit {

/// Tensor shapes that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation was called out of order (e.g. backward before forward).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite gradient or parameter seen by an optimizer.
class OptimizerError : public std::runtime_error {
 public:
  OptimizerError(std::string path, const std::string& what)
      : std::runtime_error(what), path_(std::move(path)) {}
  const std::string& parameter_path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Training produced a non-finite loss; carries the offending frame.
class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(int frame, const std::string& what)
      : std::runtime_error(what), frame_(frame) {}
  int frame_index() const noexcept { return frame_; }

 private:
  int frame_;
};

/// Malformed file or config.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace splatfit
