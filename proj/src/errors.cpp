#include "mango/errors.hpp"

namespace mango {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::UnsatisfiableConfig: return "UnsatisfiableConfig";
        case ErrorCode::SteppedTerminalState: return "SteppedTerminalState";
        case ErrorCode::LayerOutOfRange: return "LayerOutOfRange";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::PolicyMissing: return "PolicyMissing";
        case ErrorCode::TaskNotDecodable: return "TaskNotDecodable";
        case ErrorCode::FrozenTable: return "FrozenTable";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::PhaseOrderViolation: return "PhaseOrderViolation";
        case ErrorCode::EmptyEvaluation: return "EmptyEvaluation";
        case ErrorCode::MissingPolicyDump: return "MissingPolicyDump";
        case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

}  // namespace mango
