#pragma once

#include "skillprobe/analyzer.hpp"
#include "skillprobe/judge.hpp"
#include "skillprobe/prompts.hpp"
#include "skillprobe/provider.hpp"
#include "skillprobe/sandbox.hpp"
#include "skillprobe/skill.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace skillprobe::attack {

enum class StepKind { user_input, skill_interface, tool_action, sensitive_operation, unsafe_behavior };

[[nodiscard]] const char* to_string(StepKind kind);
[[nodiscard]] std::optional<StepKind> step_kind_from(const std::string& name);

// Pattern matcher for one path step. tool_pattern and argument_pattern are
// case-insensitive substrings over trajectory actions; artifact_pattern over
// diff paths. All empty → the step matches any action (skill_interface) or
// the final response (sensitive_operation with no code locus).
struct StepSignature {
    std::string tool_pattern;
    std::string argument_pattern;
    std::string artifact_pattern;
    [[nodiscard]] bool empty() const {
        return tool_pattern.empty() && argument_pattern.empty() && artifact_pattern.empty();
    }
};

struct PathStep {
    int index = 0;
    StepKind kind = StepKind::tool_action;
    std::string expectation;
    StepSignature signature;
};

struct TargetBehavior {
    analyzer::HarmCategory category = analyzer::HarmCategory::manipulation;
    std::string description;
};

// The planned causal chain from user prompt to unsafe behavior. Steps 0 and
// last are always user_input / unsafe_behavior; exactly one step has kind
// sensitive_operation and it carries the target operation's signature.
struct AttackPath {
    std::vector<PathStep> steps;
    analyzer::SensitiveOperation target_operation;
    TargetBehavior target_behavior;
};

struct AdversarialPrompt {
    std::string text;
    int round = 1;
    std::string rationale;
    std::string lane_id;
    bool plausibility_warning = false; // accepted without nominal-task overlap
};

enum class FailureCause {
    refused,
    input_sanitized,
    unrelated_branch,
    no_tool_engagement,
    hallucinated_execution,
    budget_or_limit_hit,
    other,
};

[[nodiscard]] const char* to_string(FailureCause cause);
[[nodiscard]] std::optional<FailureCause> failure_cause_from(const std::string& name);

struct Feedback {
    std::optional<int> deviation_index; // first unmatched gated step; absent = all matched
    FailureCause cause = FailureCause::other;
    std::string detail;
    std::string suggestion;
    // Engine annotations used by refinement and tests:
    std::vector<int> matched_positions;      // strictly increasing match positions
    std::optional<std::string> observed_tool; // nearest observed tool at the deviation
};

enum class LaneStatus { pending, running, succeeded, exhausted, aborted };

[[nodiscard]] const char* to_string(LaneStatus status);
[[nodiscard]] std::optional<LaneStatus> lane_status_from(const std::string& name);

struct LaneRound {
    AdversarialPrompt prompt;
    std::string record_ref; // store pointer to the ExecutionRecord
    judge::Judgment judgment;
    std::optional<Feedback> feedback; // absent on success and on the final round
};

struct AttackLane {
    std::string lane_id;
    analyzer::Vulnerability vulnerability;
    AttackPath path;
    AdversarialPrompt prompt; // current prompt for the next round
    int round = 0;            // rounds consumed
    std::vector<LaneRound> history;
    LaneStatus status = LaneStatus::pending;
};

// Minimal canonical chain: user_input → skill_interface → one tool_action per
// trigger condition → sensitive_operation (signature from v's primary
// operation) → unsafe_behavior. Deterministic function of v.
[[nodiscard]] AttackPath init_path(const analyzer::Vulnerability& v);

// Readable numbered rendering of the path, used in attacker prompts.
[[nodiscard]] std::string to_text(const AttackPath& path);

struct PromptContext {
    const skill::Skill* s = nullptr; // for plausibility overlap and templates
    const prompts::TemplateSet* templates = nullptr;
    std::string scope = "attacker";
    std::string lane_id;
};

// Asks the attacker model for the opening prompt. Empty text gets one repair
// request then Error{schema_violation}; missing nominal-task overlap gets one
// regeneration then acceptance with plausibility_warning.
[[nodiscard]] AdversarialPrompt init_prompt(const analyzer::Vulnerability& v,
                                            const AttackPath& path, provider::Provider& attacker,
                                            const PromptContext& ctx);

struct MatchResult {
    std::vector<int> positions;         // per matched gated step, strictly increasing
    std::optional<int> deviation_index; // first unmatched gated step
};

// Monotone signature matching: trajectory actions first (positions 0..T-1),
// then artifact diff paths (T..T+D-1), then a virtual response position.
// user_input and unsafe_behavior are never gated. Stops at the first miss.
[[nodiscard]] MatchResult match_path(const AttackPath& path,
                                     const sandbox::ExecutionRecord& record);

struct DiagnoseOptions {
    judge::RefusalScreen screen = judge::default_refusal_screen();
    std::vector<std::string> claim_lexicon; // empty → compiled-in default
};

// True when the response asserts work was carried out (claim lexicon).
[[nodiscard]] bool claims_completion(const std::string& response,
                                     const std::vector<std::string>& lexicon = {});

// Pure function of (path, record, judgment): deviation index from match_path
// plus a deterministic failure cause (first matching rule wins).
[[nodiscard]] Feedback diagnose(const AttackPath& path, const sandbox::ExecutionRecord& record,
                                const judge::Judgment& judgment,
                                const DiagnoseOptions& options = {});

// Deterministic structural edit keyed by the failure cause. Never touches
// step 0, the final step, target_operation, or target_behavior.
[[nodiscard]] AttackPath refine_path(const AttackPath& path, const Feedback& feedback);

// Asks the attacker model for the next prompt given the feedback and prior
// attempts. A verbatim duplicate of any prior prompt gets one regeneration
// then Error{schema_violation}.
[[nodiscard]] AdversarialPrompt refine_prompt(const analyzer::Vulnerability& v,
                                              const AttackPath& path, const Feedback& feedback,
                                              const std::vector<LaneRound>& history,
                                              provider::Provider& attacker,
                                              const PromptContext& ctx);

[[nodiscard]] nlohmann::ordered_json to_json(const AttackPath& path);
[[nodiscard]] AttackPath attack_path_from_json(const nlohmann::json& doc);
[[nodiscard]] nlohmann::ordered_json to_json(const AdversarialPrompt& prompt);
[[nodiscard]] AdversarialPrompt prompt_from_json(const nlohmann::json& doc);
[[nodiscard]] nlohmann::ordered_json to_json(const Feedback& feedback);
[[nodiscard]] Feedback feedback_from_json(const nlohmann::json& doc);

} // namespace skillprobe::attack
