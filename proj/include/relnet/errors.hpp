#pragma once

#include <stdexcept>
#include <string>

namespace relnet {

// Bad user input: config values, shape mismatches, manifest mismatches.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / container format problems.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A verification suite (e.g. the gradient check) did not meet its bound.
class VerificationError : public std::runtime_error {
 public:
  explicit VerificationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace relnet
