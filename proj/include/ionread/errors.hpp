#pragma once

#include <stdexcept>
#include <string>

namespace ionread {

// Bad physical parameters, bad operation arguments.
class InvalidParameter : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Malformed input files; carries a 1-based line number when known.
class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& what, long line = -1)
        : std::runtime_error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    long line() const { return line_; }

  private:
    long line_;
};

}  // namespace ionread
