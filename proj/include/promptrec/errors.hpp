#pragma once

#include <stdexcept>
#include <string>

namespace promptrec {

// Every error carries the process exit code the CLI maps it to.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int exit_code = 1)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

// Violated precondition of an API (wrong call, not wrong data).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(what, 1) {}
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

class IndexError : public ContractError {
 public:
  IndexError(const std::string& what, long long index)
      : ContractError(what + " (index " + std::to_string(index) + ")"), index_(index) {}
  long long index() const noexcept { return index_; }

 private:
  long long index_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& what) : Error(what, 3) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, 4) {}
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what, 5) {}
};

}  // namespace promptrec
