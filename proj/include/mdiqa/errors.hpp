#pragma once

#include <stdexcept>
#include <string>

namespace mdiqa {

// Error taxonomy. The CLI maps each family onto a stable exit code.

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Correlation asked of a constant vector, or too few samples.
class DegenerateInputError : public NumericError {
public:
    using NumericError::NumericError;
};

class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotFoundError : public IoError {
public:
    using IoError::IoError;
};

class IntegrityError : public IoError {
public:
    using IoError::IoError;
};

} // namespace mdiqa
