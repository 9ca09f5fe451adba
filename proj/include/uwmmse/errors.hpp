#pragma once

#include <stdexcept>
#include <string>

namespace uwmmse {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

// A diagonal entry too small to take the element-wise reciprocal of.
class DegenerateDiagonal : public Error {
public:
    using Error::Error;
};

class SingularMatrix : public Error {
public:
    using Error::Error;
};

// All-zero precoders, non-positive power and similar inputs with no meaningful result.
class DegenerateInput : public Error {
public:
    using Error::Error;
};

class SingularW : public Error {
public:
    using Error::Error;
};

class DimensionExceeds : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace uwmmse
