#pragma once

#include <stdexcept>
#include <string>

namespace lenval {

// Parse or validation failure in a world/experiment file. what() is
// "file:line: message" when a line is known, "file: message" otherwise.
class config_error : public std::runtime_error {
 public:
  config_error(const std::string& file, int line, const std::string& message)
      : std::runtime_error(line > 0 ? file + ":" + std::to_string(line) + ": " + message
                                    : file + ": " + message),
        file_(file),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  int line() const noexcept { return line_; }

 private:
  std::string file_;
  int line_;
};

// Numerical failure: divergence, non-finite loss, singular system.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace lenval
