#pragma once

#include <stdexcept>
#include <string>

namespace biasguard {

// Violated precondition or shape contract.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// NaN/Inf produced mid-computation, or a factorization that cannot proceed.
class NumericalFailure : public std::runtime_error {
public:
    explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or internally inconsistent file content.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace biasguard
