#include "peace/error.hpp"

namespace peace {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UndecodableFile: return "UNDECODABLE_FILE";
    case ErrorCode::UnknownFunction: return "UNKNOWN_FUNCTION";
    case ErrorCode::ScorerUnavailable: return "SCORER_UNAVAILABLE";
    case ErrorCode::EmbedderUnavailable: return "EMBEDDER_UNAVAILABLE";
    case ErrorCode::NotARepo: return "NOT_A_REPO";
    case ErrorCode::RevisionNotFound: return "REVISION_NOT_FOUND";
    case ErrorCode::EmptyRange: return "EMPTY_RANGE";
    case ErrorCode::ModelFailure: return "MODEL_FAILURE";
    case ErrorCode::MalformedToolCall: return "MALFORMED_TOOL_CALL";
    case ErrorCode::ScriptExhausted: return "SCRIPT_EXHAUSTED";
    case ErrorCode::UnparseableCandidate: return "UNPARSEABLE_CANDIDATE";
    case ErrorCode::NoTests: return "NO_TESTS";
    case ErrorCode::SchemaViolation: return "SCHEMA_VIOLATION";
    case ErrorCode::EnvSetupFailure: return "ENV_SETUP_FAILURE";
    case ErrorCode::PatchApplyFailure: return "PATCH_APPLY_FAILURE";
    case ErrorCode::Timeout: return "TIMEOUT";
    case ErrorCode::EmptySet: return "EMPTY_SET";
    case ErrorCode::ZeroBaseline: return "ZERO_BASELINE";
    case ErrorCode::ZeroMethodCount: return "ZERO_METHOD_COUNT";
    case ErrorCode::MissingBaseline: return "MISSING_BASELINE";
    case ErrorCode::BackendMismatch: return "BACKEND_MISMATCH";
    case ErrorCode::ConfigInvalid: return "CONFIG_INVALID";
    case ErrorCode::CommandNotFound: return "COMMAND_NOT_FOUND";
    case ErrorCode::Io: return "IO_ERROR";
  }
  return "UNKNOWN";
}

}  // namespace peace
