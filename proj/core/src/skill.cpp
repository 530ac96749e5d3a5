#include "skillprobe/skill.hpp"

#include "skillprobe/errors.hpp"
#include "skillprobe/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace skillprobe::skill {

namespace {

constexpr const char* kInstructionFile = "SKILL.md";

const std::array<const char*, 5> kScriptExtensions = {".js", ".py", ".sh", ".ts", ".rb"};

bool is_script_extension(const fs::path& p) {
    std::string ext = util::to_lower(p.extension().string());
    return std::any_of(kScriptExtensions.begin(), kScriptExtensions.end(),
                       [&](const char* e) { return ext == e; });
}

std::string normalized_relative(const fs::path& root, const fs::path& entry) {
    fs::path rel = entry.lexically_relative(root).lexically_normal();
    for (const auto& part : rel) {
        if (part == "..") {
            raise(Errc::traversal_violation,
                  "entry escapes the skill root: " + entry.string());
        }
    }
    return rel.generic_string();
}

std::string digest_table(const std::vector<std::pair<std::string, std::string>>& entries) {
    // entries must already be path-sorted; the digest binds path and content.
    std::string buf;
    for (const auto& [path, digest] : entries) {
        buf += path;
        buf += '\0';
        buf += digest;
        buf += '\n';
    }
    return util::sha256_hex(buf);
}

} // namespace

const char* to_string(ArtifactKind kind) {
    switch (kind) {
    case ArtifactKind::instruction: return "instruction";
    case ArtifactKind::script: return "script";
    case ArtifactKind::resource: return "resource";
    }
    return "resource";
}

const SkillArtifact* Skill::find_artifact(const std::string& relative_path) const {
    for (const auto& a : artifacts) {
        if (a.relative_path == relative_path) return &a;
    }
    return nullptr;
}

InstructionDoc parse_instruction(const std::string& text) {
    InstructionDoc doc;
    doc.body = text;

    auto lines = util::split_lines(text);
    if (lines.empty() || util::trim(lines[0]) != "---") {
        return doc; // no frontmatter block
    }

    std::size_t closing = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (util::trim(lines[i]) == "---") {
            closing = i;
            break;
        }
    }
    if (closing == 0) {
        // Opened but never closed: degrade gracefully, keep the whole text.
        doc.malformed_frontmatter = true;
        return doc;
    }

    for (std::size_t i = 1; i < closing; ++i) {
        const std::string& line = lines[i];
        if (util::trim(line).empty()) continue;
        std::size_t colon = line.find(':');
        if (colon == std::string::npos) {
            doc.malformed_frontmatter = true;
            continue;
        }
        std::string key = util::trim(line.substr(0, colon));
        std::string value = util::trim(line.substr(colon + 1));
        if (key.empty()) {
            doc.malformed_frontmatter = true;
            continue;
        }
        doc.metadata[key] = value;
    }

    std::string body;
    for (std::size_t i = closing + 1; i < lines.size(); ++i) {
        if (i > closing + 1) body += '\n';
        body += lines[i];
    }
    doc.body = body;

    auto it = doc.metadata.find("name");
    if (it != doc.metadata.end()) doc.name = it->second;
    it = doc.metadata.find("description");
    if (it != doc.metadata.end()) doc.description = it->second;
    return doc;
}

Skill load_skill(const fs::path& root, const LoadOptions& options) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        raise(Errc::invalid_argument, "skill root is not a directory: " + root.string());
    }

    Skill s;
    for (fs::recursive_directory_iterator it(root, fs::directory_options::none, ec), end;
         it != end; it.increment(ec)) {
        if (ec) {
            raise(Errc::invalid_argument, "cannot enumerate " + root.string() + ": " + ec.message());
        }
        const fs::directory_entry& entry = *it;
        if (entry.is_symlink()) {
            s.warnings.push_back("skipped symlink: " + normalized_relative(root, entry.path()));
            if (entry.is_directory()) it.disable_recursion_pending();
            continue;
        }
        if (!entry.is_regular_file()) continue;

        std::string rel = normalized_relative(root, entry.path());
        std::uintmax_t size = entry.file_size(ec);
        if (!ec && size > options.max_file_bytes) {
            s.warnings.push_back("skipped oversized file (" + std::to_string(size) +
                                 " bytes): " + rel);
            continue;
        }

        std::ifstream in(entry.path(), std::ios::binary);
        if (!in) {
            s.warnings.push_back("skipped unreadable file: " + rel);
            continue;
        }
        std::ostringstream buf;
        buf << in.rdbuf();

        SkillArtifact artifact;
        artifact.relative_path = rel;
        artifact.content = buf.str();
        artifact.digest = util::sha256_hex(artifact.content);
        if (rel == kInstructionFile) {
            artifact.kind = ArtifactKind::instruction;
        } else if (is_script_extension(entry.path())) {
            artifact.kind = ArtifactKind::script;
        } else {
            artifact.kind = ArtifactKind::resource;
        }
        s.artifacts.push_back(std::move(artifact));
    }

    if (s.artifacts.empty()) {
        raise(Errc::empty_skill, "no readable files under " + root.string());
    }

    std::sort(s.artifacts.begin(), s.artifacts.end(),
              [](const SkillArtifact& a, const SkillArtifact& b) {
                  return a.relative_path < b.relative_path;
              });

    const SkillArtifact* inst = s.find_artifact(kInstructionFile);
    if (inst == nullptr) {
        raise(Errc::missing_instruction, "no top-level SKILL.md under " + root.string());
    }
    if (inst->content.empty()) {
        raise(Errc::missing_instruction, "skill instruction file is empty: " + root.string());
    }

    s.instruction = parse_instruction(inst->content);
    if (s.instruction.malformed_frontmatter) {
        s.warnings.push_back("malformed frontmatter in " + std::string(kInstructionFile));
    }
    if (s.instruction.name.empty()) {
        s.instruction.name = root.filename().string();
    }

    s.root_digest = fingerprint(s);
    s.id = root.filename().string() + "-" + s.root_digest.substr(0, 12);
    return s;
}

std::string fingerprint(const Skill& s) {
    std::vector<std::pair<std::string, std::string>> entries;
    entries.reserve(s.artifacts.size());
    for (const auto& a : s.artifacts) {
        entries.emplace_back(a.relative_path, a.digest);
    }
    std::sort(entries.begin(), entries.end());
    return digest_table(entries);
}

void write_manifest(const Skill& s, const fs::path& file) {
    nlohmann::ordered_json doc;
    doc["id"] = s.id;
    doc["root_digest"] = s.root_digest;
    doc["artifacts"] = nlohmann::ordered_json::array();
    for (const auto& a : s.artifacts) {
        doc["artifacts"].push_back({{"path", a.relative_path},
                                    {"kind", to_string(a.kind)},
                                    {"digest", a.digest}});
    }
    util::write_text_file(file, doc.dump(2) + "\n");
}

Manifest read_manifest(const fs::path& file) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(util::read_text_file(file));
    } catch (const nlohmann::json::exception& e) {
        raise(Errc::invalid_argument, "manifest is not valid JSON: " + std::string(e.what()));
    }
    Manifest m;
    m.id = doc.value("id", "");
    m.root_digest = doc.value("root_digest", "");
    for (const auto& a : doc.value("artifacts", nlohmann::json::array())) {
        m.artifacts.push_back({a.value("path", ""), a.value("kind", ""), a.value("digest", "")});
    }
    return m;
}

std::string manifest_root_digest(const Manifest& m) {
    std::vector<std::pair<std::string, std::string>> entries;
    entries.reserve(m.artifacts.size());
    for (const auto& a : m.artifacts) {
        entries.emplace_back(a.path, a.digest);
    }
    std::sort(entries.begin(), entries.end());
    return digest_table(entries);
}

} // namespace skillprobe::skill
