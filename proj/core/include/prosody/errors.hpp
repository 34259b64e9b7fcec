#pragma once

#include <stdexcept>
#include <string>

namespace prosody {

/// Caller broke an API contract (shape mismatch, bad call order, ...).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// Data violates a documented invariant (corpus, config, checkpoint).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A file could not be parsed; message carries the line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// CTC target cannot be emitted in the given number of frames.
class InfeasibleTargetError : public std::runtime_error {
 public:
  explicit InfeasibleTargetError(const std::string& what) : std::runtime_error(what) {}
};

/// Kappa is undefined because chance agreement is 1 (degenerate marginals).
class UndefinedKappaError : public std::runtime_error {
 public:
  explicit UndefinedKappaError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace prosody
