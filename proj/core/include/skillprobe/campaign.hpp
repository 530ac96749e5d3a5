#pragma once

#include "skillprobe/analyzer.hpp"
#include "skillprobe/attack.hpp"
#include "skillprobe/config.hpp"
#include "skillprobe/judge.hpp"
#include "skillprobe/provider.hpp"
#include "skillprobe/sandbox.hpp"
#include "skillprobe/skill.hpp"
#include "skillprobe/store.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace skillprobe::campaign {

enum class SkillOutcome { exploited, survived, analysis_empty, error };

[[nodiscard]] const char* to_string(SkillOutcome outcome);
[[nodiscard]] std::optional<SkillOutcome> skill_outcome_from(const std::string& name);

struct LaneSummary {
    std::string lane_id;
    std::string surface_id;
    analyzer::HarmCategory category = analyzer::HarmCategory::manipulation;
    int rounds_used = 0;
    std::vector<std::string> verdicts; // one per round, serialized verdict names
    attack::LaneStatus status = attack::LaneStatus::pending;
};

struct SkillResult {
    std::string skill_id;
    std::string skill_name;
    SkillOutcome outcome = SkillOutcome::error;
    std::optional<attack::AdversarialPrompt> winning_prompt; // present iff exploited
    std::string winning_lane;
    std::optional<int> first_success_round;
    std::optional<analyzer::HarmCategory> confirmed_category;
    std::vector<LaneSummary> lanes;
    std::uint64_t model_calls = 0;
    int executions = 0;
    std::string detail; // error text when outcome == error
};

[[nodiscard]] nlohmann::ordered_json to_json(const SkillResult& result);
[[nodiscard]] SkillResult skill_result_from_json(const nlohmann::json& doc);

struct CampaignTotals {
    int skills = 0;
    int lanes = 0;
    int executions = 0;
    std::uint64_t model_calls = 0;
};

struct CampaignReport {
    double asr = 0.0;
    std::map<std::string, double> split_asr;
    std::map<int, double> round_histogram;              // round → % of successes
    std::map<std::string, double> category_distribution; // category name → %
    CampaignTotals totals;
    bool operational_threat_profile = false; // exfiltration + malware/ransomware > 70%
};

[[nodiscard]] nlohmann::ordered_json to_json(const CampaignReport& report);

// --- metrics (pure functions of result lists) ---------------------------------

// Exploited over all results; analysis_empty and error stay in the denominator.
[[nodiscard]] double compute_asr(const std::vector<SkillResult>& results);

// Percentage of exploited results per first_success_round. Empty when no
// successes.
[[nodiscard]] std::map<int, double> round_histogram(const std::vector<SkillResult>& results);

// Percentage of exploited results per confirmed category.
[[nodiscard]] std::map<std::string, double>
category_distribution(const std::vector<SkillResult>& results);

// --- campaign driver ------------------------------------------------------------

struct RoleProviders {
    std::shared_ptr<provider::Provider> auditor;
    std::shared_ptr<provider::Provider> attacker;
    std::shared_ptr<provider::Provider> agent;
    std::shared_ptr<provider::Provider> judge;
};

// Builds the four role providers from the config. Throws
// Error{config_invalid} when a role is missing.
[[nodiscard]] RoleProviders make_role_providers(const config::CampaignConfig& config);

// Deterministic campaign identity: a digest of the skill set and the
// semantic campaign parameters (never provider plumbing or local paths).
[[nodiscard]] std::string campaign_id_for(const std::vector<skill::Skill>& skills,
                                          const config::CampaignConfig& config);

using EventSink = std::function<void(store::Event)>;

struct RunOptions {
    const RoleProviders* providers = nullptr; // null → built from config
    sandbox::AgentHooks agent_hooks;          // http transport injection for tests
    std::function<void(const std::string&)> progress; // per-skill outcome lines
    // Replay metadata recorded in the campaign_start payload (excluded from
    // canonical store comparison): where the skills and transcripts live.
    std::vector<std::string> skill_dirs;
    std::vector<std::filesystem::path> transcript_files;
    std::string fingerprint_mode; // "structural" | "exact", informational
};

// Algorithm: analyze → one lane per surface → round-major loop with a barrier
// per round; failed lanes get diagnose/refine before the next round; first
// success by (round, lane order) wins. Never throws: unrecoverable failures
// become outcome == error with partial lanes persisted via the sink.
[[nodiscard]] SkillResult run_skill(const skill::Skill& s, const config::CampaignConfig& config,
                                    const RoleProviders& providers, const EventSink& sink,
                                    const std::string& campaign_id,
                                    const sandbox::AgentHooks& hooks = {});

struct CampaignOutcome {
    std::string campaign_id;
    std::vector<SkillResult> results; // prior (resumed) + new, in store order
    CampaignReport report;
};

// Multi-skill driver with resume: skills that already have a terminal
// skill_result in the store are skipped. Throws Error{store_corrupt} and
// Error{config_invalid}; per-skill failures are encoded in results.
[[nodiscard]] CampaignOutcome run_campaign(const std::vector<skill::Skill>& skills,
                                           const config::CampaignConfig& config,
                                           const RunOptions& options = {});

// Results recorded in a store, in event order (latest record per skill wins).
[[nodiscard]] std::vector<SkillResult> results_from_store(const std::vector<store::Event>& events);

struct ReportFilter {
    std::string split;    // keep only skills in this split
    std::string category; // keep only successes with this confirmed category
};

// Recomputes the report from store events alone (totals included); split
// definitions come from the campaign_start payload.
[[nodiscard]] CampaignReport report_from_events(const std::vector<store::Event>& events,
                                                const ReportFilter& filter = {});

[[nodiscard]] std::string render_report_text(const CampaignReport& report);

} // namespace skillprobe::campaign
