#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace slash {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A vector with no active dimensions reached a path that needs at least one.
class EmptyVector : public Error {
 public:
  EmptyVector() : Error("vector has no active indices") {}
  using Error::Error;
};

/// Indices not strictly increasing, or out of range for the dimensionality.
class InvalidVector : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Two sketches with different W, B or row seeds were combined.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// Truncated or corrupt binary input (sketches, index files, frames).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::uint64_t line, std::size_t column, const std::string& what)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  std::uint64_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::uint64_t line_;
  std::size_t column_;
};

class TransportError : public Error {
 public:
  static constexpr int kUnknownRank = -1;

  TransportError(const std::string& what, int failed_rank = kUnknownRank)
      : Error(what), failed_rank_(failed_rank) {}

  /// Rank that was missing or failed, or kUnknownRank.
  int failed_rank() const noexcept { return failed_rank_; }

 private:
  int failed_rank_;
};

class InfeasibleParams : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace slash
