#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace partlift {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based, 0 when not line oriented.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Input parsed, but breaks a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A point reached depth z <= 1e-6 m in the camera frame.
class DegenerateDepth : public Error {
 public:
  explicit DegenerateDepth(std::optional<std::size_t> part = std::nullopt)
      : Error(part ? "degenerate depth at part " + std::to_string(*part) : "degenerate depth"),
        part_(part) {}
  std::optional<std::size_t> part() const { return part_; }

 private:
  std::optional<std::size_t> part_;
};

class DegenerateConfiguration : public Error {
 public:
  using Error::Error;
};

class BehindCamera : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class MissingCalib : public Error {
 public:
  using Error::Error;
};

}  // namespace partlift
