#include "skillprobe/errors.hpp"

namespace skillprobe {

const char* errc_name(Errc code) {
    switch (code) {
    case Errc::missing_instruction: return "missing_instruction";
    case Errc::empty_skill: return "empty_skill";
    case Errc::traversal_violation: return "traversal_violation";
    case Errc::workspace_unavailable: return "workspace_unavailable";
    case Errc::adapter_launch_failure: return "adapter_launch_failure";
    case Errc::event_log_missing: return "event_log_missing";
    case Errc::provider_timeout: return "provider_timeout";
    case Errc::provider_http_error: return "provider_http_error";
    case Errc::transcript_exhausted: return "transcript_exhausted";
    case Errc::transcript_mismatch: return "transcript_mismatch";
    case Errc::schema_violation: return "schema_violation";
    case Errc::auditor_unavailable: return "auditor_unavailable";
    case Errc::attacker_unavailable: return "attacker_unavailable";
    case Errc::store_corrupt: return "store_corrupt";
    case Errc::config_invalid: return "config_invalid";
    case Errc::invalid_argument: return "invalid_argument";
    }
    return "unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

void raise(Errc code, const std::string& message) {
    throw Error(code, message);
}

} // namespace skillprobe
