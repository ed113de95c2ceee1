#pragma once

#include <stdexcept>
#include <string>

namespace fairscm {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised by the model-DSL parser; carries a 1-based source position.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line, int column)
        : Error(what), line(line), column(column) {}
    int line;
    int column;
};

/// Raised when evaluating a structural equation fails (division by zero,
/// value outside a declared discrete domain). Names the offending variable.
class EvalError : public Error {
public:
    EvalError(const std::string& what, std::string variable)
        : Error(what), variable(std::move(variable)) {}
    std::string variable;
};

/// Model-level contract violations (intervening on a background variable,
/// value out of domain, operations on invalid models).
class ModelError : public Error {
public:
    using Error::Error;
};

/// Abduction failures: unsupported model family, zero-probability evidence,
/// degenerate conditioning.
class AbductionError : public Error {
public:
    using Error::Error;
};

/// CSV ingestion and dataset shape problems.
class DataError : public Error {
public:
    using Error::Error;
};

} // namespace fairscm
