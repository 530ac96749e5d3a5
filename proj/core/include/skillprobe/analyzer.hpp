#pragma once

#include "skillprobe/provider.hpp"
#include "skillprobe/skill.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace skillprobe::analyzer {

// Harm taxonomy, eight classes. Serialized names are stable snake_case and
// part of the store format.
enum class HarmCategory {
    data_exfiltration,
    data_destruction,
    backdoor_insertion,
    malware_ransomware,
    dos,
    phishing,
    manipulation,
    poisoning,
};

inline constexpr int kHarmCategoryCount = 8;

const char* to_string(HarmCategory category);
std::optional<HarmCategory> harm_category_from(const std::string& name);

enum class OperationKind {
    file_read,
    file_write,
    process_exec,
    network_egress,
    credential_use,
    prompt_interpretation,
};

const char* to_string(OperationKind kind);
std::optional<OperationKind> operation_kind_from(const std::string& name);

// 1-based inclusive line span inside one artifact.
struct Locus {
    std::string path;
    int line_start = 0;
    int line_end = 0;
};

struct SensitiveOperation {
    OperationKind kind = OperationKind::prompt_interpretation;
    Locus locus;
    std::string description;
    std::string excerpt; // ≤ 200 chars, literally present at the locus
};

enum class InputChannel { prompt_text, file_argument, parameter, environment };

const char* to_string(InputChannel channel);
std::optional<InputChannel> input_channel_from(const std::string& name);

struct ControllableInput {
    std::string name;
    InputChannel channel = InputChannel::prompt_text;
    std::string description;
};

enum class Confidence { low, medium, high };

const char* to_string(Confidence confidence);
std::optional<Confidence> confidence_from(const std::string& name);

// One attack surface: a harm class reachable through user-controllable inputs
// and concrete sensitive operations. operations may be empty only for
// manipulation (pure instruction-level behavior).
struct Vulnerability {
    std::string surface_id;
    HarmCategory category = HarmCategory::manipulation;
    std::vector<ControllableInput> inputs;
    std::vector<SensitiveOperation> operations;
    std::vector<std::string> trigger_conditions;
    std::string rationale;
    Confidence confidence = Confidence::low;
};

// Deterministic pattern scan over script/instruction artifacts. Detects
// outbound URL literals, process-execution idioms, credential-looking literal
// assignments, file-write idioms, and imperative directives in the
// instruction body. One candidate per (line, kind), ordered by (path, line,
// kind).
[[nodiscard]] std::vector<SensitiveOperation> extract_candidates(const skill::Skill& s);

struct AnalyzeOptions {
    int max_surfaces = 5;
};

// Sends the instruction body, artifact excerpts and the candidate pre-pass to
// the auditor model, then validates loci, dedupes by (category, primary
// locus), and truncates to max_surfaces ordered by confidence then category.
// Throws Error{auditor_unavailable} on provider failure and
// Error{schema_violation} when the reply defeats the schema twice.
[[nodiscard]] std::vector<Vulnerability> analyze(const skill::Skill& s,
                                                 provider::Provider& auditor,
                                                 const AnalyzeOptions& options = {},
                                                 const std::string& scope = "auditor");

// True when every operation's excerpt is literally present in the cited
// artifact inside the cited span.
[[nodiscard]] bool verify_loci(const skill::Skill& s, const Vulnerability& v);

[[nodiscard]] nlohmann::ordered_json to_json(const SensitiveOperation& op);
[[nodiscard]] nlohmann::ordered_json to_json(const Vulnerability& v);
[[nodiscard]] Vulnerability vulnerability_from_json(const nlohmann::json& doc);

// Structured-text report per skill: surfaces with loci, excerpts and trigger
// conditions, stable ordering.
void write_report(const skill::Skill& s, const std::vector<Vulnerability>& surfaces,
                  const std::filesystem::path& file);

} // namespace skillprobe::analyzer
