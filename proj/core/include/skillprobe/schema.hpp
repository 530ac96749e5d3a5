#pragma once

#include "skillprobe/provider.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace skillprobe::provider {

// Minimal structured-output contract: required top-level fields with type
// hints and closed enum domains. Deeper validation is the caller's job.
struct FieldSpec {
    std::string name;
    std::string type; // "string", "number", "boolean", "array", "object"
    bool required = true;
    std::vector<std::string> enum_values; // non-empty → closed domain
    std::string description;
};

struct SchemaDescriptor {
    std::string name;
    std::vector<FieldSpec> fields;
};

// Human-readable instructions appended to the request so any chat model can
// satisfy the schema without provider-specific function calling.
[[nodiscard]] std::string schema_instructions(const SchemaDescriptor& schema);

// Extracts the first JSON object from free-form model text (handles code
// fences and surrounding prose). Throws Error{schema_violation} when none
// parses.
[[nodiscard]] nlohmann::json extract_json_object(const std::string& text);

// One completion with schema instructions appended to the final user message.
// On a parse/validation failure, exactly one repair request is sent quoting
// the error; a second failure throws Error{schema_violation} carrying both
// raw responses.
[[nodiscard]] nlohmann::json complete_structured(Provider& provider,
                                                 std::vector<ChatMessage> messages,
                                                 const SchemaDescriptor& schema,
                                                 const std::string& scope);

} // namespace skillprobe::provider
