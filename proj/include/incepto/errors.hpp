#pragma once

#include <stdexcept>
#include <string>

namespace incepto {

/// Failure classes. The CLI maps each class to a distinct exit code.
enum class ErrorKind {
  Dimension,
  Config,
  Index,
  Contract,
  Format,
  Labeling,
  Oversampling,
  Split,
  Numerical,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define INCEPTO_DEFINE_ERROR(Name, Kind)                                      \
  class Name : public Error {                                                  \
   public:                                                                     \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}   \
  };

INCEPTO_DEFINE_ERROR(DimensionError, Dimension)
INCEPTO_DEFINE_ERROR(ConfigError, Config)
INCEPTO_DEFINE_ERROR(IndexError, Index)
INCEPTO_DEFINE_ERROR(ContractError, Contract)
INCEPTO_DEFINE_ERROR(FormatError, Format)
INCEPTO_DEFINE_ERROR(LabelingError, Labeling)
INCEPTO_DEFINE_ERROR(OversamplingError, Oversampling)
INCEPTO_DEFINE_ERROR(SplitError, Split)
INCEPTO_DEFINE_ERROR(NumericalError, Numerical)
INCEPTO_DEFINE_ERROR(IoError, Io)

#undef INCEPTO_DEFINE_ERROR

/// Throws the subclass matching `kind`.
[[noreturn]] inline void throw_error(ErrorKind kind, const std::string& what) {
  switch (kind) {
    case ErrorKind::Dimension: throw DimensionError(what);
    case ErrorKind::Config: throw ConfigError(what);
    case ErrorKind::Index: throw IndexError(what);
    case ErrorKind::Contract: throw ContractError(what);
    case ErrorKind::Format: throw FormatError(what);
    case ErrorKind::Labeling: throw LabelingError(what);
    case ErrorKind::Oversampling: throw OversamplingError(what);
    case ErrorKind::Split: throw SplitError(what);
    case ErrorKind::Numerical: throw NumericalError(what);
    case ErrorKind::Io: throw IoError(what);
  }
  throw Error(kind, what);
}

}  // namespace incepto
