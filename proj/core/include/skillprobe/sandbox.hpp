#pragma once

#include "skillprobe/provider.hpp"
#include "skillprobe/skill.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace skillprobe::sandbox {

enum class NetworkPolicy { deny, allowlist, record_only };

const char* to_string(NetworkPolicy policy);
std::optional<NetworkPolicy> network_policy_from(const std::string& name);

enum class WorkspaceRetention { keep, remove };

struct SandboxConfig {
    double wall_clock_limit_s = 120.0;
    int step_limit = 25;
    NetworkPolicy network_policy = NetworkPolicy::deny;
    std::vector<std::string> allowlist; // hosts, when policy == allowlist
    bool env_scrub = true;
    WorkspaceRetention retention = WorkspaceRetention::keep;
    // Where workspaces are created; empty → the system temp directory.
    std::filesystem::path workspace_base;
    std::size_t tool_output_cap = 16 * 1024;
};

struct AgentAction {
    int step = 0; // 1-based
    std::string tool;
    std::map<std::string, std::string> arguments;
    std::string raw_text; // the verbatim model/adapter output for this step
};

enum class ObservationStatus { ok, error, policy_denied, limit_truncated };

const char* to_string(ObservationStatus status);

struct Observation {
    int step = 0;
    std::string output;
    ObservationStatus status = ObservationStatus::ok;
    bool truncated = false;
};

struct DiffEntry {
    std::string path;
    std::optional<std::string> digest_before;
    std::optional<std::string> digest_after;
};

struct NetworkAttempt {
    std::string host;
    std::string method;
    std::string outcome; // "denied" | "recorded" | "sent"
};

struct ArtifactDiff {
    std::vector<DiffEntry> created;
    std::vector<DiffEntry> modified;
    std::vector<DiffEntry> deleted;
    std::vector<NetworkAttempt> network_attempts;

    [[nodiscard]] bool paths_empty() const {
        return created.empty() && modified.empty() && deleted.empty();
    }
};

struct LimitFlags {
    bool step_limit = false;
    bool wall_clock = false;
    bool provider_failure = false;

    [[nodiscard]] bool any() const { return step_limit || wall_clock || provider_failure; }
};

struct ExecutionRecord {
    std::vector<std::pair<AgentAction, Observation>> trajectory;
    ArtifactDiff artifact_diff;
    std::string final_response; // always present, possibly empty
    LimitFlags limits_hit;
    double duration_s = 0.0;
    std::string transcript_ref; // scope tag of the agent conversation
};

using DigestMap = std::map<std::string, std::string>; // relative path → sha-256

// Digest map of every regular file under root (symlinks skipped).
[[nodiscard]] DigestMap snapshot_tree(const std::filesystem::path& root);

// Pure set algebra over two digest maps; entry lists are path-sorted and
// mutually disjoint. network_attempts is left empty.
[[nodiscard]] ArtifactDiff snapshot_diff(const DigestMap& before, const DigestMap& after);

// A provisioned workspace: byte-identical copy of the skill plus the
// pre-execution snapshot. Removes the directory on destruction when the
// config says so.
class Sandbox {
public:
    Sandbox(std::filesystem::path root, DigestMap initial_snapshot, WorkspaceRetention retention);
    ~Sandbox();
    Sandbox(Sandbox&& other) noexcept;
    Sandbox& operator=(Sandbox&& other) noexcept;
    Sandbox(const Sandbox&) = delete;
    Sandbox& operator=(const Sandbox&) = delete;

    [[nodiscard]] const std::filesystem::path& root() const { return root_; }
    [[nodiscard]] const DigestMap& initial_snapshot() const { return initial_snapshot_; }

    // The skill instruction text the agent runs under; set by provision().
    [[nodiscard]] const std::string& instruction_body() const { return instruction_body_; }
    void set_instruction_body(std::string body) { instruction_body_ = std::move(body); }

private:
    std::filesystem::path root_;
    DigestMap initial_snapshot_;
    WorkspaceRetention retention_ = WorkspaceRetention::keep;
    bool owned_ = true;
    std::string instruction_body_;
};

// Creates a fresh workspace copy of the skill. label namespaces the directory
// (deterministic paths under the orchestrator); empty → a process-unique
// name. Throws Error{workspace_unavailable}.
[[nodiscard]] Sandbox provision(const skill::Skill& s, const SandboxConfig& config,
                                const std::string& label = "");

// Injectable transport for the http_request tool, so tests can prove that no
// socket is opened under deny/record_only. Returns (status, body).
using HttpSender =
    std::function<std::pair<int, std::string>(const std::string& method, const std::string& url,
                                              const std::string& body)>;

struct AgentHooks {
    HttpSender http_sender; // empty → real HTTP client
};

// Runs the built-in tool-loop agent: the skill instruction is embedded in the
// system message, the prompt is the user message, and tool calls travel as
// prompt-structured JSON. Provider failure mid-loop yields a partial record
// with limits_hit.provider_failure set; this function does not throw for it.
[[nodiscard]] ExecutionRecord run_agent(Sandbox& sandbox, const std::string& prompt,
                                        provider::Provider& agent, const SandboxConfig& config,
                                        const std::string& scope = "agent",
                                        const AgentHooks& hooks = {});

struct AdapterSpec {
    std::filesystem::path executable;
    std::filesystem::path event_log; // where the adapter writes its JSONL trajectory
    std::vector<std::string> args;
};

// Launches an external agent process in the workspace (prompt on stdin, event
// log path as the first argument) and parses its JSONL event log. Unparseable
// lines are preserved verbatim under an "opaque" action. Throws
// Error{adapter_launch_failure} / Error{event_log_missing}.
[[nodiscard]] ExecutionRecord execute_external(Sandbox& sandbox, const std::string& prompt,
                                               const AdapterSpec& adapter,
                                               const SandboxConfig& config);

[[nodiscard]] nlohmann::ordered_json to_json(const ArtifactDiff& diff);
[[nodiscard]] nlohmann::ordered_json to_json(const ExecutionRecord& record);
[[nodiscard]] ExecutionRecord execution_record_from_json(const nlohmann::json& doc);

} // namespace skillprobe::sandbox
