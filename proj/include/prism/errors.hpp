#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace prism {

/// Caller broke a documented precondition (bad shape, out-of-range index, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A NaN or infinity showed up where finite values are required.
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary or text file. The message names the file and byte offset.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& file, std::uint64_t offset, const std::string& what)
      : std::runtime_error(file + " @" + std::to_string(offset) + ": " + what),
        file_(file),
        offset_(offset) {}

  const std::string& file() const noexcept { return file_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::string file_;
  std::uint64_t offset_;
};

/// Bad character in an input sequence.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t position, const std::string& what)
      : std::runtime_error("position " + std::to_string(position) + ": " + what),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Content that parses but violates a dataset rule (duplicate ids, negative signals).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PRISM_REQUIRE(cond, msg)                                           \
  do {                                                                     \
    if (!(cond)) throw ::prism::ContractViolation(std::string(msg));       \
  } while (0)

}  // namespace prism
