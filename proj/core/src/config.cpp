#include "skillprobe/config.hpp"

#include "skillprobe/errors.hpp"
#include "skillprobe/util.hpp"

namespace skillprobe::config {

provider::ProviderSpec provider_spec_from_json(const nlohmann::json& doc) {
    provider::ProviderSpec spec;
    if (!doc.is_object()) raise(Errc::config_invalid, "provider spec must be an object");
    std::string kind = doc.value("kind", "scripted_replay");
    auto parsed = provider::provider_kind_from(kind);
    if (!parsed) raise(Errc::config_invalid, "unknown provider kind: " + kind);
    spec.kind = *parsed;
    spec.endpoint = doc.value("endpoint", "");
    spec.model_name = doc.value("model", doc.value("model_name", ""));
    spec.credential_ref = doc.value("credential_env", doc.value("credential_ref", ""));
    spec.timeout_s = doc.value("timeout_s", 60.0);
    spec.retry = doc.value("retry", 3);
    spec.temperature = doc.value("temperature", 0.0);
    spec.max_concurrent = doc.value("max_concurrent", 4);
    spec.transcript_path = doc.value("transcript", doc.value("transcript_path", std::string()));
    spec.exact_fingerprint = doc.value("exact_fingerprint", false);

    if (spec.kind == provider::ProviderKind::http_openai_compatible && spec.endpoint.empty()) {
        raise(Errc::config_invalid, "http provider requires an endpoint");
    }
    if (spec.kind != provider::ProviderKind::http_openai_compatible &&
        spec.transcript_path.empty()) {
        raise(Errc::config_invalid, "scripted provider requires a transcript path");
    }
    return spec;
}

nlohmann::ordered_json provider_spec_to_json(const provider::ProviderSpec& spec) {
    nlohmann::ordered_json doc;
    doc["kind"] = provider::to_string(spec.kind);
    doc["endpoint"] = spec.endpoint;
    doc["model"] = spec.model_name;
    doc["credential_env"] = spec.credential_ref; // the variable name, never its value
    doc["timeout_s"] = spec.timeout_s;
    doc["retry"] = spec.retry;
    doc["temperature"] = spec.temperature;
    doc["max_concurrent"] = spec.max_concurrent;
    doc["transcript"] = spec.transcript_path.string();
    doc["exact_fingerprint"] = spec.exact_fingerprint;
    return doc;
}

void validate(const CampaignConfig& config) {
    if (config.budget_b < 1) raise(Errc::config_invalid, "budget_b must be ≥ 1");
    if (config.max_surfaces < 1) raise(Errc::config_invalid, "max_surfaces must be ≥ 1");
    if (config.lane_parallelism < 1) raise(Errc::config_invalid, "lane_parallelism must be ≥ 1");
    if (config.skill_parallelism < 1) raise(Errc::config_invalid, "skill_parallelism must be ≥ 1");
    if (config.sandbox.wall_clock_limit_s < 1 || config.sandbox.step_limit < 1) {
        raise(Errc::config_invalid, "sandbox limits must be positive");
    }
    if (config.sandbox.network_policy == sandbox::NetworkPolicy::allowlist &&
        config.sandbox.allowlist.empty()) {
        raise(Errc::config_invalid, "network_policy allowlist requires a non-empty host list");
    }
}

CampaignConfig config_from_json(const nlohmann::json& doc) {
    CampaignConfig config;
    if (!doc.is_object()) raise(Errc::config_invalid, "config root must be an object");

    if (doc.contains("campaign")) {
        const auto& c = doc["campaign"];
        config.budget_b = c.value("budget_b", c.value("budget", 5));
        config.max_surfaces = c.value("max_surfaces", 5);
        config.stop_on_first_success = c.value("stop_on_first_success", true);
        config.lane_parallelism = c.value("lane_parallelism", 4);
        config.skill_parallelism = c.value("skill_parallelism", 2);
        config.store_path = c.value("store_path", std::string());
        config.prompts_dir = c.value("prompts_dir", std::string());
    }

    if (doc.contains("sandbox")) {
        const auto& s = doc["sandbox"];
        config.sandbox.wall_clock_limit_s = s.value("wall_clock_limit_s", 120.0);
        config.sandbox.step_limit = s.value("step_limit", 25);
        std::string policy = s.value("network_policy", "deny");
        auto parsed = sandbox::network_policy_from(policy);
        if (!parsed) raise(Errc::config_invalid, "unknown network_policy: " + policy);
        config.sandbox.network_policy = *parsed;
        if (s.contains("allowlist")) {
            config.sandbox.allowlist = s["allowlist"].get<std::vector<std::string>>();
        }
        config.sandbox.env_scrub = s.value("env_scrub", true);
        std::string retention = s.value("retention", "remove");
        if (retention == "keep") {
            config.sandbox.retention = sandbox::WorkspaceRetention::keep;
        } else if (retention == "remove") {
            config.sandbox.retention = sandbox::WorkspaceRetention::remove;
        } else {
            raise(Errc::config_invalid, "unknown retention: " + retention);
        }
        config.sandbox.workspace_base = s.value("workspace_base", std::string());
        config.sandbox.tool_output_cap = s.value("tool_output_cap", std::size_t{16 * 1024});
        config.agent_adapter = s.value("agent_adapter", std::string());
    }

    if (doc.contains("providers")) {
        if (!doc["providers"].is_object()) {
            raise(Errc::config_invalid, "providers must be an object keyed by role");
        }
        for (const auto& [role, spec] : doc["providers"].items()) {
            config.providers[role] = provider_spec_from_json(spec);
        }
    }

    if (doc.contains("splits")) {
        if (!doc["splits"].is_object()) raise(Errc::config_invalid, "splits must be an object");
        for (const auto& [name, members] : doc["splits"].items()) {
            if (!members.is_array()) {
                raise(Errc::config_invalid, "split '" + name + "' must list skill names");
            }
            config.splits[name] = members.get<std::vector<std::string>>();
        }
    }

    validate(config);
    return config;
}

nlohmann::ordered_json config_to_json(const CampaignConfig& config) {
    nlohmann::ordered_json doc;
    doc["campaign"] = {{"budget_b", config.budget_b},
                       {"max_surfaces", config.max_surfaces},
                       {"stop_on_first_success", config.stop_on_first_success},
                       {"lane_parallelism", config.lane_parallelism},
                       {"skill_parallelism", config.skill_parallelism},
                       {"store_path", config.store_path.string()},
                       {"prompts_dir", config.prompts_dir.string()}};
    doc["sandbox"] = {{"wall_clock_limit_s", config.sandbox.wall_clock_limit_s},
                      {"step_limit", config.sandbox.step_limit},
                      {"network_policy", sandbox::to_string(config.sandbox.network_policy)},
                      {"allowlist", config.sandbox.allowlist},
                      {"env_scrub", config.sandbox.env_scrub},
                      {"retention", config.sandbox.retention == sandbox::WorkspaceRetention::keep
                                        ? "keep"
                                        : "remove"},
                      {"workspace_base", config.sandbox.workspace_base.string()},
                      {"tool_output_cap", config.sandbox.tool_output_cap},
                      {"agent_adapter", config.agent_adapter.string()}};
    doc["providers"] = nlohmann::ordered_json::object();
    for (const auto& [role, spec] : config.providers) {
        doc["providers"][role] = provider_spec_to_json(spec);
    }
    doc["splits"] = nlohmann::ordered_json::object();
    for (const auto& [name, members] : config.splits) {
        doc["splits"][name] = members;
    }
    return doc;
}

CampaignConfig load_config(const std::filesystem::path& file) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(file, ec)) {
        raise(Errc::config_invalid, "config file not found: " + file.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(util::read_text_file(file));
    } catch (const std::exception& e) {
        raise(Errc::config_invalid, "config parse error: " + std::string(e.what()));
    }
    CampaignConfig config = config_from_json(doc);

    // Relative paths resolve against the config file's directory.
    std::filesystem::path base = file.has_parent_path() ? file.parent_path()
                                                        : std::filesystem::current_path();
    auto resolve = [&](std::filesystem::path& p) {
        if (!p.empty() && p.is_relative()) p = base / p;
    };
    resolve(config.store_path);
    resolve(config.prompts_dir);
    resolve(config.agent_adapter);
    resolve(config.sandbox.workspace_base);
    for (auto& [role, spec] : config.providers) {
        (void)role;
        resolve(spec.transcript_path);
    }
    return config;
}

} // namespace skillprobe::config
