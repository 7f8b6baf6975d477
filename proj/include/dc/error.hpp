#pragma once

#include <stdexcept>
#include <string>

namespace dc {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error { using Error::Error; };
struct TopologyError : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct LayoutError : Error { using Error::Error; };
struct DegenerateInput : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct NonFiniteError : Error { using Error::Error; };
struct VocabOverflow : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct RangeError : Error { using Error::Error; };
struct InsufficientSamples : Error { using Error::Error; };
struct EigenFailure : Error { using Error::Error; };
struct MagicMismatch : Error { using Error::Error; };
struct VersionUnsupported : Error { using Error::Error; };
struct TruncatedFile : Error { using Error::Error; };
struct SchemaHashMismatch : Error { using Error::Error; };

}  // namespace dc
