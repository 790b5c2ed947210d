#pragma once

#include <stdexcept>
#include <string>

namespace attrbench {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// corpus
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};
class ValidationError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class UnknownLexemeError : public Error { using Error::Error; };
class AgreementError : public Error { using Error::Error; };
class EmptyCorpusError : public Error { using Error::Error; };
class ArgumentError : public Error { using Error::Error; };
class UndefinedBiasError : public Error { using Error::Error; };

// numerics
class DimensionError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class ContractError : public Error { using Error::Error; };
class PolicyError : public Error { using Error::Error; };

// model / attribution / evaluation
class VocabularyError : public Error { using Error::Error; };
class MethodError : public Error { using Error::Error; };
class DegenerateError : public Error { using Error::Error; };
class AlignmentError : public Error { using Error::Error; };
class UndefinedRmaError : public Error { using Error::Error; };

class IncompleteGridError : public Error { using Error::Error; };
class ChecksumError : public Error { using Error::Error; };

}  // namespace attrbench
