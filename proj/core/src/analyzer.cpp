#include "skillprobe/analyzer.hpp"

#include "skillprobe/errors.hpp"
#include "skillprobe/prompts.hpp"
#include "skillprobe/schema.hpp"
#include "skillprobe/util.hpp"

#include <algorithm>
#include <regex>

namespace skillprobe::analyzer {

namespace {

constexpr std::size_t kExcerptCap = 200;
constexpr std::size_t kArtifactRenderCap = 6000;

const std::regex& url_pattern() {
    static const std::regex re(R"(https?://)", std::regex::icase);
    return re;
}

const std::regex& exec_pattern() {
    static const std::regex re(
        R"(\b(exec\w*|spawn\w*|system|popen|eval)\s*\(|\bsubprocess\b|\bchild_process\b)",
        std::regex::icase);
    return re;
}

const std::regex& credential_pattern() {
    static const std::regex re(
        R"([A-Za-z0-9_]*(key|token|secret|password|auth)[A-Za-z0-9_]*\s*[:=]\s*["'][^"'])",
        std::regex::icase);
    return re;
}

const std::regex& file_write_pattern() {
    static const std::regex re(
        R"(\bwritefile\w*\s*\(|\bwrite_text\s*\(|\bwrite_bytes\s*\(|\bfwrite\s*\(|\bfputs\s*\(|\bfs\.write|\bopen\s*\([^)]*["'][wa]|>>|\btee\b)",
        std::regex::icase);
    return re;
}

const std::regex& directive_pattern() {
    static const std::regex re(
        R"(\b(run|execute|send|post|upload|delete|remove|fetch|curl|install)\b)",
        std::regex::icase);
    return re;
}

SensitiveOperation make_candidate(OperationKind kind, const std::string& path, int line,
                                  const std::string& line_text, const char* description) {
    SensitiveOperation op;
    op.kind = kind;
    op.locus = {path, line, line};
    op.description = description;
    op.excerpt = util::truncate(util::trim(line_text), kExcerptCap);
    return op;
}

int count_lines(const std::string& content) {
    return static_cast<int>(util::split_lines(content).size());
}

// Text of a 1-based inclusive span, newline-joined.
std::string span_text(const std::string& content, int line_start, int line_end) {
    auto lines = util::split_lines(content);
    std::string out;
    for (int i = line_start; i <= line_end && i <= static_cast<int>(lines.size()); ++i) {
        if (i > line_start) out += '\n';
        out += lines[static_cast<std::size_t>(i - 1)];
    }
    return out;
}

std::string render_artifacts(const skill::Skill& s) {
    std::string out;
    for (const auto& a : s.artifacts) {
        if (a.kind == skill::ArtifactKind::resource) continue;
        out += "--- " + a.relative_path + " (" + skill::to_string(a.kind) + ") ---\n";
        out += util::truncate(a.content, kArtifactRenderCap);
        if (out.back() != '\n') out += '\n';
    }
    if (out.empty()) out = "(no script or instruction artifacts)\n";
    return out;
}

std::string render_candidates(const std::vector<SensitiveOperation>& candidates) {
    if (candidates.empty()) return "(none)\n";
    std::string out;
    for (const auto& c : candidates) {
        out += c.locus.path + ":" + std::to_string(c.locus.line_start) + " " +
               to_string(c.kind) + " — " + c.excerpt + "\n";
    }
    return out;
}

std::string all_categories() {
    std::vector<std::string> names;
    for (int i = 0; i < kHarmCategoryCount; ++i) {
        names.emplace_back(to_string(static_cast<HarmCategory>(i)));
    }
    return util::join(names, ", ");
}

// Validates one auditor-reported surface against the skill. Invalid loci are
// dropped; the surface survives only with at least one valid operation or a
// manipulation category.
std::optional<Vulnerability> validate_surface(const skill::Skill& s, const nlohmann::json& doc) {
    if (!doc.is_object()) return std::nullopt;

    Vulnerability v;
    auto category = harm_category_from(doc.value("category", ""));
    if (!category) return std::nullopt;
    v.category = *category;

    for (const auto& ji : doc.value("inputs", nlohmann::json::array())) {
        if (!ji.is_object()) continue;
        ControllableInput input;
        input.name = ji.value("name", "");
        if (input.name.empty()) continue;
        input.channel = input_channel_from(ji.value("channel", "")).value_or(InputChannel::prompt_text);
        input.description = ji.value("description", "");
        v.inputs.push_back(std::move(input));
    }
    if (v.inputs.empty()) {
        v.inputs.push_back({"user_prompt", InputChannel::prompt_text, "the adversarial user prompt"});
    }

    for (const auto& jo : doc.value("operations", nlohmann::json::array())) {
        if (!jo.is_object()) continue;
        auto kind = operation_kind_from(jo.value("kind", ""));
        if (!kind) continue;
        SensitiveOperation op;
        op.kind = *kind;
        op.locus.path = jo.value("path", "");
        op.locus.line_start = jo.value("line_start", 0);
        op.locus.line_end = jo.value("line_end", 0);
        op.description = jo.value("description", "");
        op.excerpt = util::truncate(jo.value("excerpt", ""), kExcerptCap);

        const skill::SkillArtifact* artifact = s.find_artifact(op.locus.path);
        if (artifact == nullptr) continue;
        int total = count_lines(artifact->content);
        if (op.locus.line_start < 1 || op.locus.line_end < op.locus.line_start ||
            op.locus.line_end > total) {
            continue;
        }
        std::string span = span_text(artifact->content, op.locus.line_start, op.locus.line_end);
        if (op.excerpt.empty()) {
            op.excerpt = util::truncate(util::trim(span), kExcerptCap);
        } else if (span.find(op.excerpt) == std::string::npos) {
            continue; // hallucinated excerpt
        }
        v.operations.push_back(std::move(op));
    }
    if (v.operations.empty() && v.category != HarmCategory::manipulation) {
        return std::nullopt;
    }

    for (const auto& jt : doc.value("trigger_conditions", nlohmann::json::array())) {
        if (jt.is_string()) v.trigger_conditions.push_back(jt.get<std::string>());
    }
    v.rationale = doc.value("rationale", "");
    v.confidence = confidence_from(doc.value("confidence", "")).value_or(Confidence::low);
    return v;
}

std::string dedupe_key(const Vulnerability& v) {
    std::string key = to_string(v.category);
    key += '|';
    if (v.operations.empty()) {
        key += "instruction";
    } else {
        key += v.operations.front().locus.path + ":" +
               std::to_string(v.operations.front().locus.line_start);
    }
    return key;
}

} // namespace

const char* to_string(HarmCategory category) {
    switch (category) {
    case HarmCategory::data_exfiltration: return "data_exfiltration";
    case HarmCategory::data_destruction: return "data_destruction";
    case HarmCategory::backdoor_insertion: return "backdoor_insertion";
    case HarmCategory::malware_ransomware: return "malware_ransomware";
    case HarmCategory::dos: return "dos";
    case HarmCategory::phishing: return "phishing";
    case HarmCategory::manipulation: return "manipulation";
    case HarmCategory::poisoning: return "poisoning";
    }
    return "manipulation";
}

std::optional<HarmCategory> harm_category_from(const std::string& name) {
    for (int i = 0; i < kHarmCategoryCount; ++i) {
        auto c = static_cast<HarmCategory>(i);
        if (name == to_string(c)) return c;
    }
    return std::nullopt;
}

const char* to_string(OperationKind kind) {
    switch (kind) {
    case OperationKind::file_read: return "file_read";
    case OperationKind::file_write: return "file_write";
    case OperationKind::process_exec: return "process_exec";
    case OperationKind::network_egress: return "network_egress";
    case OperationKind::credential_use: return "credential_use";
    case OperationKind::prompt_interpretation: return "prompt_interpretation";
    }
    return "prompt_interpretation";
}

std::optional<OperationKind> operation_kind_from(const std::string& name) {
    for (int i = 0; i <= static_cast<int>(OperationKind::prompt_interpretation); ++i) {
        auto k = static_cast<OperationKind>(i);
        if (name == to_string(k)) return k;
    }
    return std::nullopt;
}

const char* to_string(InputChannel channel) {
    switch (channel) {
    case InputChannel::prompt_text: return "prompt_text";
    case InputChannel::file_argument: return "file_argument";
    case InputChannel::parameter: return "parameter";
    case InputChannel::environment: return "environment";
    }
    return "prompt_text";
}

std::optional<InputChannel> input_channel_from(const std::string& name) {
    for (int i = 0; i <= static_cast<int>(InputChannel::environment); ++i) {
        auto c = static_cast<InputChannel>(i);
        if (name == to_string(c)) return c;
    }
    return std::nullopt;
}

const char* to_string(Confidence confidence) {
    switch (confidence) {
    case Confidence::low: return "low";
    case Confidence::medium: return "medium";
    case Confidence::high: return "high";
    }
    return "low";
}

std::optional<Confidence> confidence_from(const std::string& name) {
    if (name == "low") return Confidence::low;
    if (name == "medium") return Confidence::medium;
    if (name == "high") return Confidence::high;
    return std::nullopt;
}

std::vector<SensitiveOperation> extract_candidates(const skill::Skill& s) {
    std::vector<SensitiveOperation> out;
    for (const auto& artifact : s.artifacts) {
        if (artifact.kind == skill::ArtifactKind::resource) continue;
        bool is_instruction = artifact.kind == skill::ArtifactKind::instruction;
        auto lines = util::split_lines(artifact.content);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            const std::string& line = lines[i];
            int line_no = static_cast<int>(i) + 1;
            if (std::regex_search(line, url_pattern())) {
                out.push_back(make_candidate(OperationKind::network_egress, artifact.relative_path,
                                             line_no, line, "outbound URL literal"));
            }
            if (std::regex_search(line, file_write_pattern())) {
                out.push_back(make_candidate(OperationKind::file_write, artifact.relative_path,
                                             line_no, line, "file write idiom"));
            }
            if (std::regex_search(line, exec_pattern())) {
                out.push_back(make_candidate(OperationKind::process_exec, artifact.relative_path,
                                             line_no, line, "process execution idiom"));
            }
            if (std::regex_search(line, credential_pattern())) {
                out.push_back(make_candidate(OperationKind::credential_use, artifact.relative_path,
                                             line_no, line, "credential-looking literal assignment"));
            }
            if (is_instruction && std::regex_search(line, directive_pattern())) {
                out.push_back(make_candidate(OperationKind::prompt_interpretation,
                                             artifact.relative_path, line_no, line,
                                             "imperative directive in instruction"));
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const SensitiveOperation& a, const SensitiveOperation& b) {
        if (a.locus.path != b.locus.path) return a.locus.path < b.locus.path;
        if (a.locus.line_start != b.locus.line_start) return a.locus.line_start < b.locus.line_start;
        return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    });
    return out;
}

std::vector<Vulnerability> analyze(const skill::Skill& s, provider::Provider& auditor,
                                   const AnalyzeOptions& options, const std::string& scope) {
    const auto& templates = prompts::defaults();
    auto candidates = extract_candidates(s);

    std::map<std::string, std::string> values = {
        {"skill_name", s.instruction.name},
        {"skill_description", s.instruction.description},
        {"instruction_body", s.instruction.body},
        {"artifacts", render_artifacts(s)},
        {"candidates", render_candidates(candidates)},
        {"categories", all_categories()},
        {"operation_kinds",
         "file_read, file_write, process_exec, network_egress, credential_use, prompt_interpretation"},
        {"input_channels", "prompt_text, file_argument, parameter, environment"},
        {"max_surfaces", std::to_string(options.max_surfaces)},
    };

    std::vector<provider::ChatMessage> messages = {
        {provider::Role::system, templates.auditor_system, std::nullopt},
        {provider::Role::user, prompts::render(templates.auditor_user, values), std::nullopt},
    };

    provider::SchemaDescriptor schema;
    schema.name = "attack surface report";
    schema.fields = {{"surfaces", "array", true, {}, "one entry per exploitable surface"}};

    nlohmann::json doc;
    try {
        doc = provider::complete_structured(auditor, std::move(messages), schema, scope);
    } catch (const Error& e) {
        if (e.code() == Errc::schema_violation) throw;
        raise(Errc::auditor_unavailable, e.what());
    }

    std::vector<Vulnerability> surfaces;
    for (const auto& js : doc["surfaces"]) {
        if (auto v = validate_surface(s, js)) {
            surfaces.push_back(std::move(*v));
        }
    }

    // Dedupe by (category, primary locus), first reported wins.
    std::vector<Vulnerability> unique;
    std::vector<std::string> seen;
    for (auto& v : surfaces) {
        std::string key = dedupe_key(v);
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
        unique.push_back(std::move(v));
    }

    std::stable_sort(unique.begin(), unique.end(), [](const Vulnerability& a, const Vulnerability& b) {
        if (a.confidence != b.confidence) {
            return static_cast<int>(a.confidence) > static_cast<int>(b.confidence);
        }
        return static_cast<int>(a.category) < static_cast<int>(b.category);
    });
    if (options.max_surfaces > 0 &&
        unique.size() > static_cast<std::size_t>(options.max_surfaces)) {
        unique.resize(static_cast<std::size_t>(options.max_surfaces));
    }
    for (std::size_t i = 0; i < unique.size(); ++i) {
        unique[i].surface_id = "surface-" + std::to_string(i + 1);
    }
    return unique;
}

bool verify_loci(const skill::Skill& s, const Vulnerability& v) {
    for (const auto& op : v.operations) {
        const skill::SkillArtifact* artifact = s.find_artifact(op.locus.path);
        if (artifact == nullptr) return false;
        int total = count_lines(artifact->content);
        if (op.locus.line_start < 1 || op.locus.line_end < op.locus.line_start ||
            op.locus.line_end > total) {
            return false;
        }
        std::string span = span_text(artifact->content, op.locus.line_start, op.locus.line_end);
        if (span.find(op.excerpt) == std::string::npos) return false;
    }
    return true;
}

nlohmann::ordered_json to_json(const SensitiveOperation& op) {
    return {{"kind", to_string(op.kind)},
            {"path", op.locus.path},
            {"line_start", op.locus.line_start},
            {"line_end", op.locus.line_end},
            {"description", op.description},
            {"excerpt", op.excerpt}};
}

nlohmann::ordered_json to_json(const Vulnerability& v) {
    nlohmann::ordered_json doc;
    doc["surface_id"] = v.surface_id;
    doc["category"] = to_string(v.category);
    doc["confidence"] = to_string(v.confidence);
    doc["rationale"] = v.rationale;
    doc["inputs"] = nlohmann::ordered_json::array();
    for (const auto& input : v.inputs) {
        doc["inputs"].push_back({{"name", input.name},
                                 {"channel", to_string(input.channel)},
                                 {"description", input.description}});
    }
    doc["operations"] = nlohmann::ordered_json::array();
    for (const auto& op : v.operations) {
        doc["operations"].push_back(to_json(op));
    }
    doc["trigger_conditions"] = v.trigger_conditions;
    return doc;
}

Vulnerability vulnerability_from_json(const nlohmann::json& doc) {
    Vulnerability v;
    v.surface_id = doc.value("surface_id", "");
    v.category = harm_category_from(doc.value("category", "")).value_or(HarmCategory::manipulation);
    v.confidence = confidence_from(doc.value("confidence", "")).value_or(Confidence::low);
    v.rationale = doc.value("rationale", "");
    for (const auto& ji : doc.value("inputs", nlohmann::json::array())) {
        ControllableInput input;
        input.name = ji.value("name", "");
        input.channel = input_channel_from(ji.value("channel", "")).value_or(InputChannel::prompt_text);
        input.description = ji.value("description", "");
        v.inputs.push_back(std::move(input));
    }
    for (const auto& jo : doc.value("operations", nlohmann::json::array())) {
        SensitiveOperation op;
        op.kind = operation_kind_from(jo.value("kind", "")).value_or(OperationKind::prompt_interpretation);
        op.locus.path = jo.value("path", "");
        op.locus.line_start = jo.value("line_start", 0);
        op.locus.line_end = jo.value("line_end", 0);
        op.description = jo.value("description", "");
        op.excerpt = jo.value("excerpt", "");
        v.operations.push_back(std::move(op));
    }
    for (const auto& jt : doc.value("trigger_conditions", nlohmann::json::array())) {
        if (jt.is_string()) v.trigger_conditions.push_back(jt.get<std::string>());
    }
    return v;
}

void write_report(const skill::Skill& s, const std::vector<Vulnerability>& surfaces,
                  const std::filesystem::path& file) {
    nlohmann::ordered_json doc;
    doc["skill"] = s.id;
    doc["root_digest"] = s.root_digest;
    doc["surfaces"] = nlohmann::ordered_json::array();
    for (const auto& v : surfaces) {
        doc["surfaces"].push_back(to_json(v));
    }
    util::write_text_file(file, doc.dump(2) + "\n");
}

} // namespace skillprobe::analyzer
