#pragma once

#include <stdexcept>
#include <string>

namespace dipro {

// Contract violations: bad arguments, wrong call sequence, invalid state.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or dimension disagreements between tensors.
struct DimError : ContractError {
    explicit DimError(const std::string& msg) : ContractError(msg) {}
};

// Invalid class labels or disease/head indices.
struct LabelError : ContractError {
    explicit LabelError(const std::string& msg) : ContractError(msg) {}
};

// NaN/Inf where a finite value is required, divergence, failed numeric checks.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files (cohort, config, checkpoint).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dipro
