#include "skillprobe/sandbox.hpp"

#include "skillprobe/errors.hpp"
#include "skillprobe/util.hpp"

#include "subprocess.hpp"

#include <atomic>
#include <chrono>
#include <fstream>

namespace fs = std::filesystem;

namespace skillprobe::sandbox {

const char* to_string(NetworkPolicy policy) {
    switch (policy) {
    case NetworkPolicy::deny: return "deny";
    case NetworkPolicy::allowlist: return "allowlist";
    case NetworkPolicy::record_only: return "record_only";
    }
    return "deny";
}

std::optional<NetworkPolicy> network_policy_from(const std::string& name) {
    if (name == "deny") return NetworkPolicy::deny;
    if (name == "allowlist") return NetworkPolicy::allowlist;
    if (name == "record_only") return NetworkPolicy::record_only;
    return std::nullopt;
}

const char* to_string(ObservationStatus status) {
    switch (status) {
    case ObservationStatus::ok: return "ok";
    case ObservationStatus::error: return "error";
    case ObservationStatus::policy_denied: return "policy_denied";
    case ObservationStatus::limit_truncated: return "limit_truncated";
    }
    return "ok";
}

DigestMap snapshot_tree(const fs::path& root) {
    DigestMap snapshot;
    std::error_code ec;
    if (!fs::is_directory(root, ec)) return snapshot;
    for (fs::recursive_directory_iterator it(root, fs::directory_options::none, ec), end;
         it != end; it.increment(ec)) {
        if (ec) break;
        const fs::directory_entry& entry = *it;
        if (entry.is_symlink()) {
            if (entry.is_directory()) it.disable_recursion_pending();
            continue;
        }
        if (!entry.is_regular_file()) continue;
        std::string rel = entry.path().lexically_relative(root).generic_string();
        std::ifstream in(entry.path(), std::ios::binary);
        if (!in) continue;
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        snapshot[rel] = util::sha256_hex(content);
    }
    return snapshot;
}

ArtifactDiff snapshot_diff(const DigestMap& before, const DigestMap& after) {
    ArtifactDiff diff;
    for (const auto& [path, digest] : before) {
        auto it = after.find(path);
        if (it == after.end()) {
            diff.deleted.push_back({path, digest, std::nullopt});
        } else if (it->second != digest) {
            diff.modified.push_back({path, digest, it->second});
        }
    }
    for (const auto& [path, digest] : after) {
        if (before.find(path) == before.end()) {
            diff.created.push_back({path, std::nullopt, digest});
        }
    }
    // std::map iteration already yields path order; keep that explicit.
    return diff;
}

// --- Sandbox ------------------------------------------------------------------

Sandbox::Sandbox(fs::path root, DigestMap initial_snapshot, WorkspaceRetention retention)
    : root_(std::move(root)), initial_snapshot_(std::move(initial_snapshot)),
      retention_(retention) {}

Sandbox::~Sandbox() {
    if (owned_ && retention_ == WorkspaceRetention::remove && !root_.empty()) {
        std::error_code ec;
        fs::remove_all(root_, ec);
    }
}

Sandbox::Sandbox(Sandbox&& other) noexcept
    : root_(std::move(other.root_)), initial_snapshot_(std::move(other.initial_snapshot_)),
      retention_(other.retention_), owned_(other.owned_), instruction_body_(std::move(other.instruction_body_)) {
    other.owned_ = false;
}

Sandbox& Sandbox::operator=(Sandbox&& other) noexcept {
    if (this != &other) {
        root_ = std::move(other.root_);
        initial_snapshot_ = std::move(other.initial_snapshot_);
        retention_ = other.retention_;
        owned_ = other.owned_;
        instruction_body_ = std::move(other.instruction_body_);
        other.owned_ = false;
    }
    return *this;
}

Sandbox provision(const skill::Skill& s, const SandboxConfig& config, const std::string& label) {
    fs::path base = config.workspace_base;
    std::error_code ec;
    if (base.empty()) {
        base = fs::temp_directory_path(ec) / "skillprobe-workspaces";
        if (ec) raise(Errc::workspace_unavailable, "no temp directory: " + ec.message());
    }

    fs::path root;
    if (!label.empty()) {
        root = base / fs::path(label);
        // Deterministic label → a stale directory from an interrupted run may
        // exist; a fresh workspace replaces it.
        fs::remove_all(root, ec);
    } else {
        static std::atomic<std::uint64_t> counter{0};
        for (;;) {
            std::uint64_t n = counter.fetch_add(1);
            fs::path candidate =
                base / ("ws-" + std::to_string(::getpid()) + "-" + std::to_string(n));
            if (!fs::exists(candidate, ec)) {
                root = candidate;
                break;
            }
        }
    }

    ec.clear();
    fs::create_directories(root, ec);
    if (ec) {
        raise(Errc::workspace_unavailable,
              "cannot create workspace " + root.string() + ": " + ec.message());
    }

    for (const auto& artifact : s.artifacts) {
        fs::path target = root / fs::path(artifact.relative_path);
        if (target.has_parent_path()) {
            fs::create_directories(target.parent_path(), ec);
            if (ec) {
                raise(Errc::workspace_unavailable,
                      "cannot create " + target.parent_path().string() + ": " + ec.message());
            }
        }
        std::ofstream out(target, std::ios::binary | std::ios::trunc);
        if (!out) {
            raise(Errc::workspace_unavailable, "cannot write " + target.string());
        }
        out.write(artifact.content.data(), static_cast<std::streamsize>(artifact.content.size()));
    }

    Sandbox sandbox(root, snapshot_tree(root), config.retention);
    sandbox.set_instruction_body(s.instruction.body);
    return sandbox;
}

// --- external adapter -----------------------------------------------------------

namespace {

ObservationStatus observation_status_from(const std::string& name) {
    if (name == "error") return ObservationStatus::error;
    if (name == "policy_denied") return ObservationStatus::policy_denied;
    if (name == "limit_truncated") return ObservationStatus::limit_truncated;
    return ObservationStatus::ok;
}

} // namespace

ExecutionRecord execute_external(Sandbox& sandbox, const std::string& prompt,
                                 const AdapterSpec& adapter, const SandboxConfig& config) {
    auto started = std::chrono::steady_clock::now();

    std::error_code ec;
    if (!fs::exists(adapter.executable, ec)) {
        raise(Errc::adapter_launch_failure, "adapter executable not found: " + adapter.executable.string());
    }

    fs::path log_path = adapter.event_log;
    if (log_path.is_relative()) log_path = sandbox.root() / log_path;

    std::vector<std::string> argv = {adapter.executable.string(), log_path.string()};
    argv.insert(argv.end(), adapter.args.begin(), adapter.args.end());

    SubprocessResult run = run_subprocess(argv, sandbox.root(), config.wall_clock_limit_s,
                                          config.tool_output_cap, config.env_scrub, prompt);
    if (run.launch_failed) {
        raise(Errc::adapter_launch_failure, "cannot launch " + adapter.executable.string() + ": " +
                                                run.launch_error);
    }

    ExecutionRecord record;
    record.limits_hit.wall_clock = run.timed_out;

    if (!fs::exists(log_path, ec)) {
        raise(Errc::event_log_missing, "adapter exited without event log: " + log_path.string());
    }

    std::ifstream in(log_path);
    std::string line;
    std::vector<std::pair<AgentAction, Observation>> trajectory;
    std::string final_response;
    bool saw_final = false;
    while (std::getline(in, line)) {
        if (util::trim(line).empty()) continue;
        nlohmann::json doc;
        bool parsed = true;
        try {
            doc = nlohmann::json::parse(line);
            if (!doc.is_object()) parsed = false;
        } catch (const nlohmann::json::exception&) {
            parsed = false;
        }
        if (!parsed) {
            // Preserve the raw line; nothing is guessed about its meaning.
            AgentAction opaque;
            opaque.step = static_cast<int>(trajectory.size()) + 1;
            opaque.tool = "opaque";
            opaque.raw_text = line;
            trajectory.emplace_back(std::move(opaque),
                                    Observation{static_cast<int>(trajectory.size()) + 1, "",
                                                ObservationStatus::ok, false});
            continue;
        }
        std::string type = doc.value("type", "");
        if (type == "action") {
            AgentAction action;
            action.step = doc.value("step", static_cast<int>(trajectory.size()) + 1);
            action.tool = doc.value("tool", "");
            action.raw_text = line;
            if (doc.contains("arguments") && doc["arguments"].is_object()) {
                for (const auto& [key, value] : doc["arguments"].items()) {
                    action.arguments[key] =
                        value.is_string() ? value.get<std::string>() : value.dump();
                }
            }
            trajectory.emplace_back(std::move(action),
                                    Observation{doc.value("step", 0), "", ObservationStatus::ok, false});
        } else if (type == "observation") {
            if (!trajectory.empty()) {
                Observation& obs = trajectory.back().second;
                obs.step = doc.value("step", trajectory.back().first.step);
                obs.output = doc.value("output", "");
                obs.status = observation_status_from(doc.value("status", "ok"));
            }
        } else if (type == "final") {
            final_response = doc.value("output", "");
            saw_final = true;
        }
    }

    if (static_cast<int>(trajectory.size()) > config.step_limit) {
        trajectory.resize(static_cast<std::size_t>(config.step_limit));
        record.limits_hit.step_limit = true;
    }
    record.trajectory = std::move(trajectory);
    record.final_response = saw_final ? final_response : util::trim(run.stdout_data);

    record.artifact_diff = snapshot_diff(sandbox.initial_snapshot(), snapshot_tree(sandbox.root()));
    record.duration_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return record;
}

// --- serialization ---------------------------------------------------------------

namespace {

nlohmann::ordered_json diff_entry_json(const DiffEntry& entry) {
    nlohmann::ordered_json doc;
    doc["path"] = entry.path;
    if (entry.digest_before) doc["digest_before"] = *entry.digest_before;
    if (entry.digest_after) doc["digest_after"] = *entry.digest_after;
    return doc;
}

DiffEntry diff_entry_from(const nlohmann::json& doc) {
    DiffEntry entry;
    entry.path = doc.value("path", "");
    if (doc.contains("digest_before")) entry.digest_before = doc["digest_before"].get<std::string>();
    if (doc.contains("digest_after")) entry.digest_after = doc["digest_after"].get<std::string>();
    return entry;
}

} // namespace

nlohmann::ordered_json to_json(const ArtifactDiff& diff) {
    nlohmann::ordered_json doc;
    for (const char* key : {"created", "modified", "deleted"}) {
        doc[key] = nlohmann::ordered_json::array();
    }
    for (const auto& e : diff.created) doc["created"].push_back(diff_entry_json(e));
    for (const auto& e : diff.modified) doc["modified"].push_back(diff_entry_json(e));
    for (const auto& e : diff.deleted) doc["deleted"].push_back(diff_entry_json(e));
    doc["network_attempts"] = nlohmann::ordered_json::array();
    for (const auto& attempt : diff.network_attempts) {
        doc["network_attempts"].push_back(
            {{"host", attempt.host}, {"method", attempt.method}, {"outcome", attempt.outcome}});
    }
    return doc;
}

nlohmann::ordered_json to_json(const ExecutionRecord& record) {
    nlohmann::ordered_json doc;
    doc["trajectory"] = nlohmann::ordered_json::array();
    for (const auto& [action, observation] : record.trajectory) {
        nlohmann::ordered_json step;
        step["step"] = action.step;
        step["tool"] = action.tool;
        step["arguments"] = action.arguments;
        step["raw_text"] = action.raw_text;
        step["output"] = observation.output;
        step["status"] = to_string(observation.status);
        step["truncated"] = observation.truncated;
        doc["trajectory"].push_back(std::move(step));
    }
    doc["artifact_diff"] = to_json(record.artifact_diff);
    doc["final_response"] = record.final_response;
    doc["limits_hit"] = {{"step_limit", record.limits_hit.step_limit},
                         {"wall_clock", record.limits_hit.wall_clock},
                         {"provider_failure", record.limits_hit.provider_failure}};
    doc["duration_s"] = record.duration_s;
    doc["transcript_ref"] = record.transcript_ref;
    return doc;
}

ExecutionRecord execution_record_from_json(const nlohmann::json& doc) {
    ExecutionRecord record;
    for (const auto& step : doc.value("trajectory", nlohmann::json::array())) {
        AgentAction action;
        action.step = step.value("step", 0);
        action.tool = step.value("tool", "");
        action.raw_text = step.value("raw_text", "");
        if (step.contains("arguments") && step["arguments"].is_object()) {
            for (const auto& [key, value] : step["arguments"].items()) {
                action.arguments[key] = value.is_string() ? value.get<std::string>() : value.dump();
            }
        }
        Observation observation;
        observation.step = action.step;
        observation.output = step.value("output", "");
        observation.status = observation_status_from(step.value("status", "ok"));
        observation.truncated = step.value("truncated", false);
        record.trajectory.emplace_back(std::move(action), std::move(observation));
    }
    if (doc.contains("artifact_diff")) {
        const auto& jd = doc["artifact_diff"];
        for (const auto& e : jd.value("created", nlohmann::json::array()))
            record.artifact_diff.created.push_back(diff_entry_from(e));
        for (const auto& e : jd.value("modified", nlohmann::json::array()))
            record.artifact_diff.modified.push_back(diff_entry_from(e));
        for (const auto& e : jd.value("deleted", nlohmann::json::array()))
            record.artifact_diff.deleted.push_back(diff_entry_from(e));
        for (const auto& a : jd.value("network_attempts", nlohmann::json::array())) {
            record.artifact_diff.network_attempts.push_back(
                {a.value("host", ""), a.value("method", ""), a.value("outcome", "")});
        }
    }
    record.final_response = doc.value("final_response", "");
    if (doc.contains("limits_hit")) {
        record.limits_hit.step_limit = doc["limits_hit"].value("step_limit", false);
        record.limits_hit.wall_clock = doc["limits_hit"].value("wall_clock", false);
        record.limits_hit.provider_failure = doc["limits_hit"].value("provider_failure", false);
    }
    record.duration_s = doc.value("duration_s", 0.0);
    record.transcript_ref = doc.value("transcript_ref", "");
    return record;
}

} // namespace skillprobe::sandbox
