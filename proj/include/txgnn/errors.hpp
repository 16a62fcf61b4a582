#pragma once

#include <stdexcept>
#include <string>

namespace txgnn {

// Error taxonomy shared by all modules. Each type corresponds to one failure
// contract; CLI maps ConfigError/SpecError/ParseError-at-startup to exit 2,
// everything else to exit 1.

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct EmptyReductionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated API precondition (caller bug, not data).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Malformed input file; message carries "path:line".
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structurally inconsistent data (valid syntax, broken invariants).
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad or conflicting configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Infeasible generator specification.
struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Metric is mathematically undefined on the given inputs.
struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite gradient encountered during optimization; names the tensor.
struct GradientError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace txgnn
