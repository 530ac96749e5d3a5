#include "skillprobe/schema.hpp"

#include "skillprobe/errors.hpp"
#include "skillprobe/util.hpp"

namespace skillprobe::provider {

namespace {

// Validates only what the descriptor declares: required fields, type hints,
// enum domains. Returns an error description or empty string.
std::string validate_against(const nlohmann::json& doc, const SchemaDescriptor& schema) {
    if (!doc.is_object()) return "top-level value is not a JSON object";
    for (const auto& field : schema.fields) {
        if (!doc.contains(field.name)) {
            if (field.required) return "missing required field \"" + field.name + "\"";
            continue;
        }
        const auto& value = doc[field.name];
        if (field.type == "string" && !value.is_string())
            return "field \"" + field.name + "\" must be a string";
        if (field.type == "number" && !value.is_number())
            return "field \"" + field.name + "\" must be a number";
        if (field.type == "boolean" && !value.is_boolean())
            return "field \"" + field.name + "\" must be a boolean";
        if (field.type == "array" && !value.is_array())
            return "field \"" + field.name + "\" must be an array";
        if (field.type == "object" && !value.is_object())
            return "field \"" + field.name + "\" must be an object";
        if (!field.enum_values.empty() && value.is_string()) {
            const std::string s = value.get<std::string>();
            bool ok = false;
            for (const auto& allowed : field.enum_values) {
                if (s == allowed) { ok = true; break; }
            }
            if (!ok) return "field \"" + field.name + "\" has value \"" + s +
                            "\" outside its allowed set";
        }
    }
    return "";
}

} // namespace

std::string schema_instructions(const SchemaDescriptor& schema) {
    std::string out = "Respond with a single JSON object";
    if (!schema.name.empty()) out += " (" + schema.name + ")";
    out += " containing these fields:\n";
    for (const auto& field : schema.fields) {
        out += "- \"" + field.name + "\" (" + field.type;
        out += field.required ? ", required" : ", optional";
        out += ")";
        if (!field.enum_values.empty()) {
            out += ", one of: " + util::join(field.enum_values, " | ");
        }
        if (!field.description.empty()) {
            out += " — " + field.description;
        }
        out += "\n";
    }
    out += "Return only the JSON object with no surrounding prose or code fences.";
    return out;
}

nlohmann::json extract_json_object(const std::string& text) {
    // Scan for the first brace-balanced object; tolerates prose and fences.
    std::size_t start = text.find('{');
    while (start != std::string::npos) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                --depth;
                if (depth == 0) {
                    std::string candidate = text.substr(start, i - start + 1);
                    try {
                        return nlohmann::json::parse(candidate);
                    } catch (const nlohmann::json::exception&) {
                        break; // try the next opening brace
                    }
                }
            }
        }
        start = text.find('{', start + 1);
    }
    raise(Errc::schema_violation, "no parseable JSON object in model response");
}

nlohmann::json complete_structured(Provider& provider, std::vector<ChatMessage> messages,
                                   const SchemaDescriptor& schema, const std::string& scope) {
    if (messages.empty() || messages.back().role != Role::user) {
        messages.push_back({Role::user, "", std::nullopt});
    }
    messages.back().content += "\n\n" + schema_instructions(schema);

    std::string first_raw = provider.complete(messages, scope);

    auto try_parse = [&](const std::string& raw) -> std::pair<nlohmann::json, std::string> {
        nlohmann::json doc;
        try {
            doc = extract_json_object(raw);
        } catch (const Error& e) {
            return {nlohmann::json(), e.what()};
        }
        std::string problem = validate_against(doc, schema);
        return {doc, problem};
    };

    auto [doc, problem] = try_parse(first_raw);
    if (problem.empty()) return doc;

    // Exactly one repair attempt, quoting the parse error.
    std::vector<ChatMessage> repair = messages;
    repair.push_back({Role::assistant, first_raw, std::nullopt});
    repair.push_back({Role::user,
                      "Your previous reply could not be used: " + problem +
                          ". Respond again with only the JSON object described above.",
                      std::nullopt});
    std::string second_raw = provider.complete(repair, scope);
    auto [doc2, problem2] = try_parse(second_raw);
    if (problem2.empty()) return doc2;

    raise(Errc::schema_violation,
          "structured output failed twice (" + problem + "; then " + problem2 +
              ").\n--- first response ---\n" + first_raw + "\n--- second response ---\n" +
              second_raw);
}

} // namespace skillprobe::provider
