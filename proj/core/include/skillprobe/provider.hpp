#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace skillprobe::provider {

enum class Role { system, user, assistant, tool };

const char* to_string(Role role);

struct ChatMessage {
    Role role = Role::user;
    std::string content;
    // Optional serialized tool name/arguments or tool result attached to the
    // message; kept as opaque text because tool calls travel inside content.
    std::optional<std::string> tool_payload;
};

enum class ProviderKind { http_openai_compatible, scripted_replay, scripted_record };

const char* to_string(ProviderKind kind);
std::optional<ProviderKind> provider_kind_from(const std::string& name);

struct ProviderSpec {
    ProviderKind kind = ProviderKind::scripted_replay;
    std::string endpoint;       // e.g. "http://127.0.0.1:8080/v1"
    std::string model_name;
    std::string credential_ref; // environment variable NAME, never the secret
    double timeout_s = 60.0;
    int retry = 3;
    double temperature = 0.0;
    int max_concurrent = 4;
    std::filesystem::path transcript_path; // scripted kinds
    bool exact_fingerprint = false;        // fingerprint full content, not shape
};

// Request fingerprints: structural covers the role sequence plus per-message
// content lengths; exact covers the full bytes.
[[nodiscard]] std::string structural_fingerprint(const std::vector<ChatMessage>& messages);
[[nodiscard]] std::string exact_fingerprint(const std::vector<ChatMessage>& messages);

struct TranscriptEntry {
    std::string role_tag;    // scope, e.g. "agent/<skill>/lane-1/r2"
    std::string fingerprint; // empty = wildcard (hand-authored fixtures)
    std::string response;
};

// Ordered (fingerprint, response) pairs grouped by role_tag. Replay keeps one
// FIFO cursor per tag so concurrent lanes never race each other's entries.
class Transcript {
public:
    Transcript() = default;
    Transcript(Transcript&& other);
    Transcript& operator=(Transcript&& other);

    void add(TranscriptEntry entry);

    [[nodiscard]] static Transcript load(const std::filesystem::path& file);

    // Pops the next entry for the tag, verifying the fingerprint. Throws
    // Error{transcript_exhausted} / Error{transcript_mismatch}.
    TranscriptEntry take(const std::string& role_tag, const std::string& fingerprint_now);

    [[nodiscard]] std::size_t remaining() const;
    [[nodiscard]] std::size_t remaining(const std::string& role_tag) const;

private:
    std::map<std::string, std::deque<TranscriptEntry>> by_tag_;
    mutable std::mutex mutex_;
};

// Append-only JSONL sink for recorded exchanges; one {role_tag, fingerprint,
// response} record per line. Thread-safe.
class TranscriptWriter {
public:
    explicit TranscriptWriter(std::filesystem::path file);
    void append(const std::string& role_tag, const std::string& fingerprint,
                const std::string& response);
    [[nodiscard]] const std::filesystem::path& file() const { return file_; }

private:
    std::filesystem::path file_;
    std::mutex mutex_;
};

// The single chat-completion abstraction every model role goes through.
class Provider {
public:
    virtual ~Provider() = default;
    // scope tags the call for transcript record/replay; live providers ignore it.
    virtual std::string complete(const std::vector<ChatMessage>& messages,
                                 const std::string& scope) = 0;
};

class HttpProvider : public Provider {
public:
    explicit HttpProvider(ProviderSpec spec);
    std::string complete(const std::vector<ChatMessage>& messages,
                         const std::string& scope) override;

private:
    ProviderSpec spec_;
    std::unique_ptr<class Gate> gate_; // per-provider concurrent-request cap
};

class ReplayProvider : public Provider {
public:
    explicit ReplayProvider(std::shared_ptr<Transcript> transcript, bool exact = false);
    std::string complete(const std::vector<ChatMessage>& messages,
                         const std::string& scope) override;
    [[nodiscard]] Transcript& transcript() { return *transcript_; }

private:
    std::shared_ptr<Transcript> transcript_;
    bool exact_;
};

class RecordingProvider : public Provider {
public:
    RecordingProvider(std::shared_ptr<Provider> inner, std::shared_ptr<TranscriptWriter> sink,
                      bool exact = false);
    std::string complete(const std::vector<ChatMessage>& messages,
                         const std::string& scope) override;

private:
    std::shared_ptr<Provider> inner_;
    std::shared_ptr<TranscriptWriter> sink_;
    bool exact_;
};

// Counts calls going through to an inner provider; used for campaign totals.
class CountingProvider : public Provider {
public:
    CountingProvider(std::shared_ptr<Provider> inner, std::atomic<std::uint64_t>* counter);
    std::string complete(const std::vector<ChatMessage>& messages,
                         const std::string& scope) override;

private:
    std::shared_ptr<Provider> inner_;
    std::atomic<std::uint64_t>* counter_;
};

// Builds a provider from its spec: http → live client; scripted_replay →
// transcript-backed replay; scripted_record → live client tee'd into the
// spec's transcript file.
[[nodiscard]] std::shared_ptr<Provider> make_provider(const ProviderSpec& spec);

} // namespace skillprobe::provider
