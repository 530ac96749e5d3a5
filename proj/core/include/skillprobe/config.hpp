#pragma once

#include "skillprobe/provider.hpp"
#include "skillprobe/sandbox.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace skillprobe::config {

// Campaign-wide knobs. Provider specs live under role names (auditor,
// attacker, agent, judge); splits map a tag to skill ids or names.
struct CampaignConfig {
    int budget_b = 5;
    int max_surfaces = 5;
    bool stop_on_first_success = true;
    int lane_parallelism = 4;
    int skill_parallelism = 2;
    std::map<std::string, provider::ProviderSpec> providers;
    sandbox::SandboxConfig sandbox;
    std::filesystem::path store_path;
    std::filesystem::path prompts_dir;    // optional template overrides
    std::filesystem::path agent_adapter;  // optional external agent executable
    std::map<std::string, std::vector<std::string>> splits;
};

// Throws Error{config_invalid} on structural or constraint violations
// (budget ≥ 1, parallelism ≥ 1, allowlist non-empty when selected, …).
void validate(const CampaignConfig& config);

[[nodiscard]] CampaignConfig config_from_json(const nlohmann::json& doc);
[[nodiscard]] nlohmann::ordered_json config_to_json(const CampaignConfig& config);

// Reads and validates a JSON config file with sections
// {providers, sandbox, campaign, splits}. Throws Error{config_invalid}.
[[nodiscard]] CampaignConfig load_config(const std::filesystem::path& file);

[[nodiscard]] provider::ProviderSpec provider_spec_from_json(const nlohmann::json& doc);
[[nodiscard]] nlohmann::ordered_json provider_spec_to_json(const provider::ProviderSpec& spec);

} // namespace skillprobe::config
