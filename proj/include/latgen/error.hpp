#pragma once

#include <stdexcept>
#include <string>

namespace latgen {

// Error categories map onto the CLI exit codes.
enum class ErrorCategory { Usage = 2, Data = 3, Numerical = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), category_(category), kind_(kind) {}

  ErrorCategory category() const noexcept { return category_; }
  const std::string& kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
  std::string kind_;
};

#define LATGEN_DEFINE_ERROR(Name, Category)                                   \
  class Name : public Error {                                                 \
   public:                                                                    \
    explicit Name(const std::string& what) : Error(Category, #Name, what) {} \
  }

LATGEN_DEFINE_ERROR(EmptyInput, ErrorCategory::Data);
LATGEN_DEFINE_ERROR(TagsetViolation, ErrorCategory::Data);
LATGEN_DEFINE_ERROR(LengthViolation, ErrorCategory::Data);
LATGEN_DEFINE_ERROR(InsufficientPoints, ErrorCategory::Data);
LATGEN_DEFINE_ERROR(InsufficientCandidates, ErrorCategory::Data);
LATGEN_DEFINE_ERROR(LabelError, ErrorCategory::Data);
LATGEN_DEFINE_ERROR(EmptyBag, ErrorCategory::Data);
LATGEN_DEFINE_ERROR(InputTooLong, ErrorCategory::Data);
LATGEN_DEFINE_ERROR(AlignmentError, ErrorCategory::Data);
LATGEN_DEFINE_ERROR(Undefined, ErrorCategory::Data);
LATGEN_DEFINE_ERROR(StaleEpisode, ErrorCategory::Data);
LATGEN_DEFINE_ERROR(ShapeError, ErrorCategory::Numerical);
LATGEN_DEFINE_ERROR(NumericalFault, ErrorCategory::Numerical);
LATGEN_DEFINE_ERROR(ConfigError, ErrorCategory::Usage);

#undef LATGEN_DEFINE_ERROR

// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCategory::Data, "ParseError",
              "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace latgen
