#include "voxpipe/error.hpp"

namespace voxpipe {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kType: return "type";
    case ErrorKind::kBounds: return "bounds";
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kDegenerateData: return "degenerate-data";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kUndefinedInput: return "undefined-input";
  }
  return "unknown";
}

void throw_error(ErrorKind kind, const std::string& what) {
  switch (kind) {
    case ErrorKind::kIo: throw IoError(what);
    case ErrorKind::kFormat: throw FormatError(what);
    case ErrorKind::kShape: throw ShapeError(what);
    case ErrorKind::kConflict: throw ConflictError(what);
    case ErrorKind::kSchema: throw SchemaError(what);
    case ErrorKind::kType: throw TypeError(what);
    case ErrorKind::kBounds: throw BoundsError(what);
    case ErrorKind::kParameter: throw ParameterError(what);
    case ErrorKind::kDegenerateData: throw DegenerateDataError(what);
    case ErrorKind::kConfig: throw ConfigError(what);
    case ErrorKind::kUndefinedInput: throw UndefinedInputError(what);
  }
  throw Error(kind, what);
}

}  // namespace voxpipe
