#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace skillprobe::skill {

enum class ArtifactKind { instruction, script, resource };

const char* to_string(ArtifactKind kind);

// One file of a skill package, addressed by its root-relative path.
struct SkillArtifact {
    std::string relative_path; // forward slashes, no leading "./"
    ArtifactKind kind = ArtifactKind::resource;
    std::string content; // raw bytes
    std::string digest;  // sha-256 hex of content
};

// Parsed SKILL.md: optional `---` frontmatter followed by the instruction body.
struct InstructionDoc {
    std::string name;
    std::string description;
    std::string body;
    std::map<std::string, std::string> metadata;
    // Set when a frontmatter block was opened but could not be parsed; the
    // whole file is then treated as body.
    bool malformed_frontmatter = false;
};

// An immutable, content-addressed skill package. Attack targets are never
// modified; everything downstream works on copies.
struct Skill {
    std::string id; // "<dirname>-<root_digest prefix>"
    InstructionDoc instruction;
    std::vector<SkillArtifact> artifacts; // sorted by relative_path
    std::string root_digest;
    std::vector<std::string> warnings; // skipped files, malformed frontmatter

    [[nodiscard]] const SkillArtifact* find_artifact(const std::string& relative_path) const;
};

struct LoadOptions {
    std::size_t max_file_bytes = 2 * 1024 * 1024;
};

// Parses frontmatter + body. Malformed frontmatter degrades to a
// metadata-empty parse with malformed_frontmatter set.
[[nodiscard]] InstructionDoc parse_instruction(const std::string& text);

// Loads a skill directory. The instruction file SKILL.md (case-sensitive)
// must sit at the top level. Files with a script extension (.js .py .sh .ts
// .rb) are classified as scripts, everything else as resources. Symlinks and
// files above max_file_bytes are skipped with a recorded warning.
//
// Throws Error with code empty_skill (no readable files), missing_instruction
// (no top-level SKILL.md, or it is empty) or traversal_violation (an entry
// escapes the root).
[[nodiscard]] Skill load_skill(const std::filesystem::path& root, const LoadOptions& options = {});

// Root digest over the path-ordered artifact digest table; independent of
// disk enumeration order and equal to Skill::root_digest.
[[nodiscard]] std::string fingerprint(const Skill& s);

// --- manifest -------------------------------------------------------------

struct ManifestEntry {
    std::string path;
    std::string kind;
    std::string digest;
};

struct Manifest {
    std::string id;
    std::string root_digest;
    std::vector<ManifestEntry> artifacts;
};

// One structured-text (JSON) manifest per skill, stable field order.
void write_manifest(const Skill& s, const std::filesystem::path& file);
[[nodiscard]] Manifest read_manifest(const std::filesystem::path& file);

// Recomputes the root digest from a manifest's digest table.
[[nodiscard]] std::string manifest_root_digest(const Manifest& m);

} // namespace skillprobe::skill
