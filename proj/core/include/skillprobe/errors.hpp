#pragma once

#include <stdexcept>
#include <string>

namespace skillprobe {

// Every failure the library raises carries one of these codes so callers
// (and the CLI exit-code mapping) can branch without string matching.
enum class Errc {
    // skill loading
    missing_instruction,
    empty_skill,
    traversal_violation,
    // sandbox
    workspace_unavailable,
    adapter_launch_failure,
    event_log_missing,
    // model providers
    provider_timeout,
    provider_http_error,
    transcript_exhausted,
    transcript_mismatch,
    schema_violation,
    auditor_unavailable,
    attacker_unavailable,
    // campaign store / config
    store_corrupt,
    config_invalid,
    // precondition violations (bad paths, bad arguments)
    invalid_argument,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message);

    [[nodiscard]] Errc code() const noexcept { return code_; }

    // Set for provider_http_error; 0 otherwise.
    [[nodiscard]] int http_status() const noexcept { return http_status_; }
    void set_http_status(int status) noexcept { http_status_ = status; }

private:
    Errc code_;
    int http_status_ = 0;
};

[[noreturn]] void raise(Errc code, const std::string& message);

} // namespace skillprobe
