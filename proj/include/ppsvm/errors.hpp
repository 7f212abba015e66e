#pragma once

#include <stdexcept>

namespace ppsvm {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error { using Error::Error; };
struct NonFiniteInput : Error { using Error::Error; };
struct DegenerateMatrix : Error { using Error::Error; };

struct MalformedHeader : Error { using Error::Error; };
struct TruncatedData : Error { using Error::Error; };
struct EmptyImage : Error { using Error::Error; };

struct SingleClassData : Error { using Error::Error; };

struct MissingKey : Error { using Error::Error; };
struct UnknownClaim : Error { using Error::Error; };
struct UnknownClient : Error { using Error::Error; };
struct EmptyScores : Error { using Error::Error; };

struct IoError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ManifestMismatch : Error { using Error::Error; };
struct SchemaVersionMismatch : Error { using Error::Error; };

}  // namespace ppsvm
