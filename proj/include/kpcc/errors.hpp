// SPDX-License-Identifier: Apache-2.0

#ifndef KPCC_ERRORS_HPP
#define KPCC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace kpcc {

/// Base class of every error raised by the codec. `what()` carries a
/// human-readable message; the concrete type carries the category.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file or header (PLY, container, weights).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Value outside its legal domain (negative coordinate, NaN, token >= vocab).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Structural corruption detected while decoding.
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Caller passed an invalid configuration value.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Input contains nothing to encode.
class EmptyInputError : public Error {
public:
    using Error::Error;
};

/// Symbol or token outside a codebook.
class MappingError : public Error {
public:
    using Error::Error;
};

/// Model weights missing or inconsistent.
class LoadError : public Error {
public:
    using Error::Error;
};

/// External model process failed to answer.
class TransportError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Wraps an error raised inside one pipeline stage, prefixing the stage name.
/// The original category is preserved by rethrowing the same type.
template <typename E>
[[noreturn]] void rethrow_tagged(const char* stage, const E& e) {
    throw E(std::string(stage) + ": " + e.what());
}

} // namespace kpcc

#endif // KPCC_ERRORS_HPP
