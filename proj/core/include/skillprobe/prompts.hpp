#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace skillprobe::prompts {

// Prompt templates for the four model roles. Compiled-in defaults can be
// overridden per-template by text files in a prompts directory
// (auditor_system.txt, auditor_user.txt, ...). Placeholders use {{name}}.
struct TemplateSet {
    std::string auditor_system;
    std::string auditor_user;
    std::string attacker_system;
    std::string attacker_init_user;
    std::string attacker_refine_user;
    std::string judge_system;
    std::string judge_user;
    std::string agent_system;
};

[[nodiscard]] const TemplateSet& defaults();

// Loads overrides from dir; templates without an override file keep their
// default text. An empty dir path returns the defaults unchanged.
[[nodiscard]] TemplateSet load(const std::filesystem::path& dir);

[[nodiscard]] std::string render(std::string text,
                                 const std::map<std::string, std::string>& values);

} // namespace skillprobe::prompts
