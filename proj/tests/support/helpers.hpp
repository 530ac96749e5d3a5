#pragma once

// Shared test scaffolding: temp dirs, throwaway skill packages, scripted
// providers, and quick builders for records and vulnerabilities.

#include "skillprobe/analyzer.hpp"
#include "skillprobe/errors.hpp"
#include "skillprobe/provider.hpp"
#include "skillprobe/sandbox.hpp"
#include "skillprobe/skill.hpp"

#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path fixture_dir() { return fs::path(SKILLPROBE_FIXTURE_DIR); }

// Unique directory under the system temp root, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "skillprobe-test-XXXXXX").string();
        if (::mkdtemp(tmpl.data()) == nullptr) {
            throw std::runtime_error("mkdtemp failed for " + tmpl);
        }
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const fs::path& path() const { return path_; }
    [[nodiscard]] fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& file, const std::string& content) {
    fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + file.string());
    out << content;
}

inline std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Writes SKILL.md (+ extra files) under dir and loads the package.
inline skillprobe::skill::Skill make_skill(
    const fs::path& dir, const std::string& name, const std::string& description,
    const std::string& body,
    const std::vector<std::pair<std::string, std::string>>& extra_files = {}) {
    std::string doc = "---\nname: " + name + "\ndescription: " + description + "\n---\n" + body;
    write_file(dir / "SKILL.md", doc);
    for (const auto& [rel, content] : extra_files) {
        write_file(dir / rel, content);
    }
    return skillprobe::skill::load_skill(dir);
}

// Provider answering from a FIFO queue; remembers the scopes it was asked for.
class QueueProvider : public skillprobe::provider::Provider {
public:
    QueueProvider() = default;
    explicit QueueProvider(std::vector<std::string> responses) {
        for (auto& r : responses) queue_.push_back(std::move(r));
    }

    void push(std::string response) {
        std::lock_guard lock(mutex_);
        queue_.push_back(std::move(response));
    }

    std::string complete(const std::vector<skillprobe::provider::ChatMessage>& messages,
                         const std::string& scope) override {
        std::lock_guard lock(mutex_);
        scopes.push_back(scope);
        last_messages = messages;
        if (queue_.empty()) {
            skillprobe::raise(skillprobe::Errc::transcript_exhausted,
                              "queue provider has no reply for scope '" + scope + "'");
        }
        std::string reply = std::move(queue_.front());
        queue_.pop_front();
        return reply;
    }

    [[nodiscard]] std::size_t remaining() const {
        std::lock_guard lock(mutex_);
        return queue_.size();
    }

    std::vector<std::string> scopes;
    std::vector<skillprobe::provider::ChatMessage> last_messages;

private:
    std::deque<std::string> queue_;
    mutable std::mutex mutex_;
};

// Provider whose every call fails with the given code.
class FailingProvider : public skillprobe::provider::Provider {
public:
    explicit FailingProvider(skillprobe::Errc code = skillprobe::Errc::provider_timeout,
                             std::string message = "synthetic provider failure")
        : code_(code), message_(std::move(message)) {}

    std::string complete(const std::vector<skillprobe::provider::ChatMessage>&,
                         const std::string&) override {
        skillprobe::raise(code_, message_);
    }

private:
    skillprobe::Errc code_;
    std::string message_;
};

// --- quick builders -----------------------------------------------------------

inline skillprobe::analyzer::SensitiveOperation
make_operation(skillprobe::analyzer::OperationKind kind, const std::string& path, int line,
               const std::string& excerpt) {
    skillprobe::analyzer::SensitiveOperation op;
    op.kind = kind;
    op.locus = {path, line, line};
    op.description = "test operation";
    op.excerpt = excerpt;
    return op;
}

inline skillprobe::analyzer::Vulnerability
make_vuln(skillprobe::analyzer::HarmCategory category,
          std::vector<skillprobe::analyzer::SensitiveOperation> operations = {},
          std::vector<std::string> triggers = {}) {
    skillprobe::analyzer::Vulnerability v;
    v.surface_id = "surface-1";
    v.category = category;
    v.inputs.push_back({"request", skillprobe::analyzer::InputChannel::prompt_text,
                        "free-form user request"});
    v.operations = std::move(operations);
    v.trigger_conditions = std::move(triggers);
    v.rationale = "test surface";
    v.confidence = skillprobe::analyzer::Confidence::medium;
    return v;
}

inline skillprobe::sandbox::AgentAction
make_action(int step, const std::string& tool,
            const std::map<std::string, std::string>& arguments, const std::string& raw = "") {
    skillprobe::sandbox::AgentAction action;
    action.step = step;
    action.tool = tool;
    action.arguments = arguments;
    action.raw_text = raw.empty() ? tool : raw;
    return action;
}

inline skillprobe::sandbox::ExecutionRecord
make_record(std::vector<std::pair<skillprobe::sandbox::AgentAction, std::string>> steps,
            const std::string& final_response) {
    skillprobe::sandbox::ExecutionRecord record;
    for (auto& [action, output] : steps) {
        skillprobe::sandbox::Observation obs;
        obs.step = action.step;
        obs.output = output;
        record.trajectory.emplace_back(std::move(action), std::move(obs));
    }
    record.final_response = final_response;
    return record;
}

} // namespace testsupport
