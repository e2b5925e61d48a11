#pragma once

#include <stdexcept>
#include <string>

namespace embalign {

/// Root of every error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error { using Error::Error; };
struct MaskValueError : Error { using Error::Error; };
struct TruncationError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct EmptyMaskError : Error { using Error::Error; };
struct TransformError : Error { using Error::Error; };
struct ArgumentError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct DegenerateInputError : Error { using Error::Error; };
struct DegenerateShapeError : Error { using Error::Error; };
struct ModelShapeError : Error { using Error::Error; };

} // namespace embalign
