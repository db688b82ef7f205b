#pragma once

#include <stdexcept>
#include <string>

namespace asl {

// Every failure raised by the library derives from Error. The CLI maps the
// concrete type onto a process exit code (see exit_code_for()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

namespace exit_code {
inline constexpr int kSuccess = 0;
inline constexpr int kConfig = 2;
inline constexpr int kData = 3;
inline constexpr int kCheckFailure = 4;
}  // namespace exit_code

/// Maps an exception raised by the library to the CLI exit status.
int exit_code_for(const Error& e) noexcept;

}  // namespace asl
