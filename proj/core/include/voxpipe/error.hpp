#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace voxpipe {

enum class ErrorKind {
  kIo,
  kFormat,
  kShape,
  kConflict,
  kSchema,
  kType,
  kBounds,
  kParameter,
  kDegenerateData,
  kConfig,
  kUndefinedInput,
};

std::string_view to_string(ErrorKind kind);

// Base of every exception thrown by the library. The kind drives CLI exit
// codes and lets callers branch without a cascade of catch clauses.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define VOXPIPE_DEFINE_ERROR(Name, Kind)                                \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

VOXPIPE_DEFINE_ERROR(IoError, kIo)
VOXPIPE_DEFINE_ERROR(FormatError, kFormat)
VOXPIPE_DEFINE_ERROR(ShapeError, kShape)
VOXPIPE_DEFINE_ERROR(ConflictError, kConflict)
VOXPIPE_DEFINE_ERROR(SchemaError, kSchema)
VOXPIPE_DEFINE_ERROR(TypeError, kType)
VOXPIPE_DEFINE_ERROR(BoundsError, kBounds)
VOXPIPE_DEFINE_ERROR(ParameterError, kParameter)
VOXPIPE_DEFINE_ERROR(DegenerateDataError, kDegenerateData)
VOXPIPE_DEFINE_ERROR(ConfigError, kConfig)
VOXPIPE_DEFINE_ERROR(UndefinedInputError, kUndefinedInput)

#undef VOXPIPE_DEFINE_ERROR

// Throws the subclass matching `kind`.
[[noreturn]] void throw_error(ErrorKind kind, const std::string& what);

}  // namespace voxpipe
