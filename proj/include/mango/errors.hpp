#pragma once

#include <stdexcept>
#include <string>

namespace mango {

enum class ErrorCode {
    InvalidConfig,
    UnsatisfiableConfig,
    SteppedTerminalState,
    LayerOutOfRange,
    DimensionMismatch,
    PolicyMissing,
    TaskNotDecodable,
    FrozenTable,
    EmptyMask,
    PhaseOrderViolation,
    EmptyEvaluation,
    MissingPolicyDump,
    ParseError,
};

const char* to_string(ErrorCode code);

/// All engine failures surface as this exception; `code()` identifies the contract that was violated.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace mango
