#pragma once

#include <stdexcept>
#include <string>

namespace fairopt {

/// Base class for every error raised by the library. `exit_code()` maps the
/// error onto the CLI contract: 1 usage, 2 data, 3 solver.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 2; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

// data-side failures (exit code 2)
struct DataError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct DegenerateColumnError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct GroupError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct EstimationError : Error { using Error::Error; };
struct ModeError : Error { using Error::Error; };
struct CategoryError : Error { using Error::Error; };
struct ParameterError : Error { using Error::Error; };
struct ResidualTooLargeError : Error { using Error::Error; };

/// Requested tensor would exceed the configured entry budget.
struct LevelLimitError : Error { using Error::Error; };

struct ContractError : Error { using Error::Error; };

class SolverError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

struct UnsupportedLevelError : SolverError { using SolverError::SolverError; };

}  // namespace fairopt
