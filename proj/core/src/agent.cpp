#include "skillprobe/sandbox.hpp"

#include "skillprobe/errors.hpp"
#include "skillprobe/prompts.hpp"
#include "skillprobe/schema.hpp"
#include "skillprobe/util.hpp"

#include "subprocess.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>

namespace fs = std::filesystem;

namespace skillprobe::sandbox {

namespace {

// Containment check: the resolved path must stay under the workspace root.
std::optional<fs::path> resolve_in_workspace(const fs::path& root, const std::string& raw) {
    if (raw.empty()) return std::nullopt;
    fs::path candidate = fs::path(raw).is_absolute() ? fs::path(raw) : root / raw;
    std::error_code ec;
    fs::path resolved = fs::weakly_canonical(candidate, ec);
    if (ec) return std::nullopt;
    fs::path base = fs::weakly_canonical(root, ec);
    if (ec) return std::nullopt;
    auto mismatch = std::mismatch(base.begin(), base.end(), resolved.begin(), resolved.end());
    if (mismatch.first != base.end()) return std::nullopt;
    return resolved;
}

std::string cap_output(std::string text, std::size_t cap, bool& truncated) {
    if (text.size() > cap) {
        text.resize(cap);
        truncated = true;
    }
    return text;
}

std::string get_arg(const std::map<std::string, std::string>& args, const std::string& key,
                    const std::string& fallback = "") {
    auto it = args.find(key);
    return it == args.end() ? fallback : it->second;
}

Observation tool_read_file(const Sandbox& sandbox, const AgentAction& action,
                           const SandboxConfig& config) {
    Observation obs{action.step, "", ObservationStatus::ok, false};
    auto path = resolve_in_workspace(sandbox.root(), get_arg(action.arguments, "path"));
    if (!path) {
        obs.status = ObservationStatus::error;
        obs.output = "path is missing or escapes the workspace";
        return obs;
    }
    std::error_code ec;
    if (!fs::is_regular_file(*path, ec)) {
        obs.status = ObservationStatus::error;
        obs.output = "no such file: " + get_arg(action.arguments, "path");
        return obs;
    }
    try {
        obs.output = cap_output(util::read_text_file(*path), config.tool_output_cap, obs.truncated);
        if (obs.truncated) obs.status = ObservationStatus::limit_truncated;
    } catch (const std::exception& e) {
        obs.status = ObservationStatus::error;
        obs.output = e.what();
    }
    return obs;
}

Observation tool_write_file(const Sandbox& sandbox, const AgentAction& action) {
    Observation obs{action.step, "", ObservationStatus::ok, false};
    auto path = resolve_in_workspace(sandbox.root(), get_arg(action.arguments, "path"));
    if (!path) {
        obs.status = ObservationStatus::error;
        obs.output = "path is missing or escapes the workspace";
        return obs;
    }
    std::string content = get_arg(action.arguments, "content");
    try {
        util::write_text_file(*path, content);
        obs.output = "wrote " + std::to_string(content.size()) + " bytes to " +
                     get_arg(action.arguments, "path");
    } catch (const std::exception& e) {
        obs.status = ObservationStatus::error;
        obs.output = e.what();
    }
    return obs;
}

Observation tool_list_dir(const Sandbox& sandbox, const AgentAction& action,
                          const SandboxConfig& config) {
    Observation obs{action.step, "", ObservationStatus::ok, false};
    auto path = resolve_in_workspace(sandbox.root(), get_arg(action.arguments, "path", "."));
    if (!path) {
        obs.status = ObservationStatus::error;
        obs.output = "path is missing or escapes the workspace";
        return obs;
    }
    std::error_code ec;
    if (!fs::is_directory(*path, ec)) {
        obs.status = ObservationStatus::error;
        obs.output = "not a directory: " + get_arg(action.arguments, "path", ".");
        return obs;
    }
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(*path, ec)) {
        std::string name = entry.path().filename().string();
        if (entry.is_directory(ec)) name += "/";
        names.push_back(std::move(name));
    }
    std::sort(names.begin(), names.end());
    obs.output = cap_output(util::join(names, "\n"), config.tool_output_cap, obs.truncated);
    if (obs.truncated) obs.status = ObservationStatus::limit_truncated;
    return obs;
}

Observation tool_run_script(const Sandbox& sandbox, const AgentAction& action,
                            const SandboxConfig& config, double remaining_s) {
    Observation obs{action.step, "", ObservationStatus::ok, false};
    std::string raw_path = get_arg(action.arguments, "path");
    auto path = resolve_in_workspace(sandbox.root(), raw_path);
    if (!path) {
        obs.status = ObservationStatus::error;
        obs.output = "path is missing or escapes the workspace";
        return obs;
    }
    std::error_code ec;
    if (!fs::is_regular_file(*path, ec)) {
        obs.status = ObservationStatus::error;
        obs.output = "no such file: " + raw_path;
        return obs;
    }

    std::string ext = util::to_lower(path->extension().string());
    std::string interpreter;
    if (ext == ".py") interpreter = "python3";
    else if (ext == ".sh") interpreter = "sh";
    else if (ext == ".js") interpreter = "node";
    if (interpreter.empty()) {
        obs.status = ObservationStatus::error;
        obs.output = "no interpreter registered for extension '" + ext + "'";
        return obs;
    }

    std::vector<std::string> argv = {interpreter, path->string()};
    std::string extra = get_arg(action.arguments, "args");
    for (const auto& piece : util::split_ws(extra)) argv.push_back(piece);

    double budget = std::max(1.0, std::min(remaining_s, static_cast<double>(config.wall_clock_limit_s)));
    SubprocessResult run = run_subprocess(argv, sandbox.root(), static_cast<int>(budget),
                                          config.tool_output_cap, config.env_scrub, "");
    if (run.launch_failed) {
        obs.status = ObservationStatus::error;
        obs.output = "cannot launch interpreter: " + run.launch_error;
        return obs;
    }

    std::string out = "[exit " + std::to_string(run.exit_code) + "]";
    if (run.timed_out) out += " [timed out]";
    if (!run.stdout_data.empty()) out += "\n" + run.stdout_data;
    if (!run.stderr_data.empty()) out += "\n[stderr]\n" + run.stderr_data;
    obs.output = cap_output(std::move(out), config.tool_output_cap, obs.truncated);
    if (run.exit_code != 0 || run.timed_out) obs.status = ObservationStatus::error;
    else if (obs.truncated || run.truncated) obs.status = ObservationStatus::limit_truncated;
    return obs;
}

std::pair<int, std::string> send_real_http(const std::string& method, const std::string& url,
                                           const std::string& body) {
    std::optional<util::ParsedUrl> maybe = util::parse_url(url);
    if (!maybe) return {0, "unparseable url"};
    const util::ParsedUrl& parsed = *maybe;
    std::string origin = parsed.scheme + "://" + parsed.host + ":" + std::to_string(parsed.port);
    httplib::Client client(origin);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(10, 0);
    httplib::Result result;
    if (util::to_lower(method) == "post") {
        result = client.Post(parsed.path, body, "application/octet-stream");
    } else {
        result = client.Get(parsed.path);
    }
    if (!result) return {0, "no response"};
    return {result->status, result->body};
}

Observation tool_http_request(const AgentAction& action, const SandboxConfig& config,
                              const AgentHooks& hooks, std::vector<NetworkAttempt>& attempts) {
    Observation obs{action.step, "", ObservationStatus::ok, false};
    std::string url = get_arg(action.arguments, "url");
    std::string method = get_arg(action.arguments, "method", "GET");
    if (url.empty()) {
        obs.status = ObservationStatus::error;
        obs.output = "url is required";
        return obs;
    }
    std::optional<util::ParsedUrl> parsed = util::parse_url(url);
    if (!parsed) {
        obs.status = ObservationStatus::error;
        obs.output = "unparseable url";
        return obs;
    }
    const std::string host = parsed->host;

    switch (config.network_policy) {
    case NetworkPolicy::deny:
        attempts.push_back({host, method, "denied"});
        obs.status = ObservationStatus::policy_denied;
        obs.output = "network policy denies outbound requests";
        return obs;
    case NetworkPolicy::record_only:
        attempts.push_back({host, method, "recorded"});
        obs.status = ObservationStatus::policy_denied;
        obs.output = "request recorded; network policy does not send it";
        return obs;
    case NetworkPolicy::allowlist:
        break;
    }

    bool allowed = std::find(config.allowlist.begin(), config.allowlist.end(), host) !=
                   config.allowlist.end();
    if (!allowed) {
        attempts.push_back({host, method, "denied"});
        obs.status = ObservationStatus::policy_denied;
        obs.output = "host '" + host + "' is not on the allowlist";
        return obs;
    }

    attempts.push_back({host, method, "sent"});
    std::pair<int, std::string> reply;
    try {
        reply = hooks.http_sender ? hooks.http_sender(method, url, get_arg(action.arguments, "body"))
                                  : send_real_http(method, url, get_arg(action.arguments, "body"));
    } catch (const std::exception& e) {
        obs.status = ObservationStatus::error;
        obs.output = std::string("request failed: ") + e.what();
        return obs;
    }
    obs.output = cap_output("HTTP " + std::to_string(reply.first) + "\n" + reply.second,
                            config.tool_output_cap, obs.truncated);
    if (reply.first == 0) obs.status = ObservationStatus::error;
    else if (obs.truncated) obs.status = ObservationStatus::limit_truncated;
    return obs;
}

struct ParsedReply {
    bool is_tool = false;
    std::string tool;
    std::map<std::string, std::string> arguments;
    std::string final_text;
};

ParsedReply parse_agent_reply(const std::string& text) {
    ParsedReply reply;
    nlohmann::json doc;
    try {
        doc = provider::extract_json_object(text);
    } catch (const std::exception&) {
        reply.final_text = text;
        return reply;
    }
    if (doc.is_object() && doc.contains("tool") && doc["tool"].is_string()) {
        reply.is_tool = true;
        reply.tool = doc["tool"].get<std::string>();
        if (doc.contains("arguments") && doc["arguments"].is_object()) {
            for (const auto& [key, value] : doc["arguments"].items()) {
                reply.arguments[key] = value.is_string() ? value.get<std::string>() : value.dump();
            }
        }
        return reply;
    }
    if (doc.is_object() && doc.contains("final") && doc["final"].is_string()) {
        reply.final_text = doc["final"].get<std::string>();
        return reply;
    }
    reply.final_text = text;
    return reply;
}

} // namespace

ExecutionRecord run_agent(Sandbox& sandbox, const std::string& prompt, provider::Provider& agent,
                          const SandboxConfig& config, const std::string& scope,
                          const AgentHooks& hooks) {
    auto started = std::chrono::steady_clock::now();
    auto elapsed_s = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    };

    const prompts::TemplateSet& templates = prompts::defaults();
    std::vector<provider::ChatMessage> messages;
    messages.push_back({provider::Role::system,
                        prompts::render(templates.agent_system,
                                        {{"instruction_body", sandbox.instruction_body()}})});
    messages.push_back({provider::Role::user, prompt});

    ExecutionRecord record;
    record.transcript_ref = scope;
    std::vector<NetworkAttempt> attempts;

    for (;;) {
        double remaining = static_cast<double>(config.wall_clock_limit_s) - elapsed_s();
        if (remaining <= 0) {
            record.limits_hit.wall_clock = true;
            break;
        }

        std::string raw;
        try {
            raw = agent.complete(messages, scope);
        } catch (const Error&) {
            record.limits_hit.provider_failure = true;
            break;
        }

        ParsedReply reply = parse_agent_reply(raw);
        if (!reply.is_tool) {
            record.final_response = reply.final_text;
            break;
        }

        if (static_cast<int>(record.trajectory.size()) >= config.step_limit) {
            record.limits_hit.step_limit = true;
            break;
        }

        AgentAction action;
        action.step = static_cast<int>(record.trajectory.size()) + 1;
        action.tool = reply.tool;
        action.arguments = std::move(reply.arguments);
        action.raw_text = raw;

        Observation obs{action.step, "", ObservationStatus::ok, false};
        remaining = static_cast<double>(config.wall_clock_limit_s) - elapsed_s();
        if (action.tool == "read_file") obs = tool_read_file(sandbox, action, config);
        else if (action.tool == "write_file") obs = tool_write_file(sandbox, action);
        else if (action.tool == "list_dir") obs = tool_list_dir(sandbox, action, config);
        else if (action.tool == "run_script") obs = tool_run_script(sandbox, action, config, remaining);
        else if (action.tool == "http_request") obs = tool_http_request(action, config, hooks, attempts);
        else {
            obs.status = ObservationStatus::error;
            obs.output = "unknown tool: " + action.tool;
        }

        messages.push_back({provider::Role::assistant, raw});
        messages.push_back({provider::Role::user,
                            "Observation (step " + std::to_string(action.step) + ", status: " +
                                to_string(obs.status) + "):\n" + obs.output});
        record.trajectory.emplace_back(std::move(action), std::move(obs));
    }

    record.artifact_diff = snapshot_diff(sandbox.initial_snapshot(), snapshot_tree(sandbox.root()));
    record.artifact_diff.network_attempts = std::move(attempts);
    record.duration_s = elapsed_s();
    return record;
}

} // namespace skillprobe::sandbox
