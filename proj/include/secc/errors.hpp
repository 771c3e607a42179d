#pragma once

#include <stdexcept>
#include <string>

namespace secc {

// Precondition or input validation failure. Message names the offending value.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A state that should be unreachable given valid inputs.
class InternalError : public std::runtime_error {
public:
    explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

// MI estimation needs at least one negative pair (batch of two or more).
class MiBatchTooSmallError : public ValidationError {
public:
    MiBatchTooSmallError() : ValidationError("MI_BATCH_TOO_SMALL: mutual information terms need a batch of >= 2 target samples") {}
};

// Experiment config file failed to parse or validate; `field` names the key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field_name, const std::string& msg)
        : std::runtime_error(msg), field(std::move(field_name)) {}
    std::string field;
};

// Training produced a non-finite loss; `term` names the breakdown column.
class TrainAbortError : public std::runtime_error {
public:
    TrainAbortError(std::string term_name, const std::string& msg)
        : std::runtime_error(msg), term(std::move(term_name)) {}
    std::string term;
};

} // namespace secc
