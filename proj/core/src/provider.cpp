#include "skillprobe/provider.hpp"

#include "skillprobe/errors.hpp"
#include "skillprobe/util.hpp"

#include <nlohmann/json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <thread>

namespace skillprobe::provider {

namespace {

// Serialized request body for an OpenAI-compatible chat completion.
nlohmann::json build_request_body(const ProviderSpec& spec,
                                  const std::vector<ChatMessage>& messages) {
    nlohmann::json body;
    body["model"] = spec.model_name;
    body["temperature"] = spec.temperature;
    body["messages"] = nlohmann::json::array();
    for (const auto& m : messages) {
        nlohmann::json jm;
        jm["role"] = to_string(m.role);
        jm["content"] = m.content;
        body["messages"].push_back(std::move(jm));
    }
    return body;
}

std::string extract_completion(const std::string& response_body) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(response_body);
    } catch (const nlohmann::json::exception& e) {
        raise(Errc::provider_http_error,
              "completion response is not valid JSON: " + std::string(e.what()));
    }
    if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
        const auto& choice = doc["choices"][0];
        if (choice.contains("message") && choice["message"].contains("content") &&
            choice["message"]["content"].is_string()) {
            return choice["message"]["content"].get<std::string>();
        }
        if (choice.contains("text") && choice["text"].is_string()) {
            return choice["text"].get<std::string>();
        }
    }
    raise(Errc::provider_http_error, "completion response has no choices[0].message.content");
}

} // namespace

const char* to_string(Role role) {
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::tool: return "tool";
    }
    return "user";
}

const char* to_string(ProviderKind kind) {
    switch (kind) {
    case ProviderKind::http_openai_compatible: return "http_openai_compatible";
    case ProviderKind::scripted_replay: return "scripted_replay";
    case ProviderKind::scripted_record: return "scripted_record";
    }
    return "scripted_replay";
}

std::optional<ProviderKind> provider_kind_from(const std::string& name) {
    if (name == "http_openai_compatible") return ProviderKind::http_openai_compatible;
    if (name == "scripted_replay") return ProviderKind::scripted_replay;
    if (name == "scripted_record") return ProviderKind::scripted_record;
    return std::nullopt;
}

std::string structural_fingerprint(const std::vector<ChatMessage>& messages) {
    std::string buf;
    for (const auto& m : messages) {
        buf += to_string(m.role);
        buf += ':';
        buf += std::to_string(m.content.size());
        buf += ';';
    }
    return util::sha256_hex(buf);
}

std::string exact_fingerprint(const std::vector<ChatMessage>& messages) {
    std::string buf;
    for (const auto& m : messages) {
        buf += to_string(m.role);
        buf += '\0';
        buf += m.content;
        buf += '\0';
    }
    return util::sha256_hex(buf);
}

// --- Transcript -------------------------------------------------------------

Transcript::Transcript(Transcript&& other) {
    std::lock_guard lock(other.mutex_);
    by_tag_ = std::move(other.by_tag_);
}

Transcript& Transcript::operator=(Transcript&& other) {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        by_tag_ = std::move(other.by_tag_);
    }
    return *this;
}

void Transcript::add(TranscriptEntry entry) {
    std::lock_guard lock(mutex_);
    by_tag_[entry.role_tag].push_back(std::move(entry));
}

Transcript Transcript::load(const std::filesystem::path& file) {
    Transcript t;
    std::ifstream in(file);
    if (!in) {
        raise(Errc::invalid_argument, "cannot open transcript: " + file.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            raise(Errc::invalid_argument, "transcript line " + std::to_string(line_no) +
                                              " is not valid JSON: " + e.what());
        }
        TranscriptEntry entry;
        entry.role_tag = doc.value("role_tag", "");
        entry.fingerprint = doc.value("fingerprint", "");
        entry.response = doc.value("response", "");
        t.add(std::move(entry));
    }
    return t;
}

TranscriptEntry Transcript::take(const std::string& role_tag, const std::string& fingerprint_now) {
    std::lock_guard lock(mutex_);
    auto it = by_tag_.find(role_tag);
    if (it == by_tag_.end() || it->second.empty()) {
        raise(Errc::transcript_exhausted, "no remaining transcript entry for tag '" + role_tag + "'");
    }
    TranscriptEntry entry = it->second.front();
    if (!entry.fingerprint.empty() && entry.fingerprint != fingerprint_now) {
        raise(Errc::transcript_mismatch,
              "request fingerprint " + fingerprint_now + " does not match recorded " +
                  entry.fingerprint + " for tag '" + role_tag + "'");
    }
    it->second.pop_front();
    return entry;
}

std::size_t Transcript::remaining() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [tag, queue] : by_tag_) n += queue.size();
    return n;
}

std::size_t Transcript::remaining(const std::string& role_tag) const {
    std::lock_guard lock(mutex_);
    auto it = by_tag_.find(role_tag);
    return it == by_tag_.end() ? 0 : it->second.size();
}

// --- TranscriptWriter -------------------------------------------------------

TranscriptWriter::TranscriptWriter(std::filesystem::path file) : file_(std::move(file)) {
    if (file_.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(file_.parent_path(), ec);
    }
}

void TranscriptWriter::append(const std::string& role_tag, const std::string& fingerprint,
                              const std::string& response) {
    nlohmann::ordered_json doc;
    doc["role_tag"] = role_tag;
    doc["fingerprint"] = fingerprint;
    doc["response"] = response;
    std::lock_guard lock(mutex_);
    std::ofstream out(file_, std::ios::app | std::ios::binary);
    if (!out) {
        raise(Errc::invalid_argument, "cannot append transcript: " + file_.string());
    }
    out << doc.dump() << "\n";
}

// --- Gate: bounded concurrency per provider ---------------------------------

class Gate {
public:
    explicit Gate(int slots) : slots_(slots < 1 ? 1 : slots) {}

    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return in_use_ < slots_; });
        ++in_use_;
    }

    void release() {
        {
            std::lock_guard lock(mutex_);
            --in_use_;
        }
        cv_.notify_one();
    }

private:
    int slots_;
    int in_use_ = 0;
    std::mutex mutex_;
    std::condition_variable cv_;
};

// --- HttpProvider -----------------------------------------------------------

HttpProvider::HttpProvider(ProviderSpec spec)
    : spec_(std::move(spec)), gate_(std::make_unique<Gate>(spec_.max_concurrent)) {}

std::string HttpProvider::complete(const std::vector<ChatMessage>& messages,
                                   const std::string& /*scope*/) {
    auto url = util::parse_url(spec_.endpoint);
    if (!url) {
        raise(Errc::config_invalid, "provider endpoint is not a URL: " + spec_.endpoint);
    }

    std::string origin = url->scheme + "://" + url->host + ":" + std::to_string(url->port);
    std::string prefix = url->path == "/" ? "" : url->path;
    std::string path = prefix + "/chat/completions";

    httplib::Headers headers;
    if (!spec_.credential_ref.empty()) {
        // Credential indirection: the spec names an environment variable; the
        // secret itself never enters any config, store or log.
        if (auto secret = util::getenv_str(spec_.credential_ref.c_str())) {
            headers.emplace("Authorization", "Bearer " + *secret);
        }
    }

    std::string body = build_request_body(spec_, messages).dump();

    gate_->acquire();
    struct Release {
        Gate* g;
        ~Release() { g->release(); }
    } release{gate_.get()};

    int attempts = spec_.retry < 1 ? 1 : spec_.retry;
    std::string last_error = "no attempt made";
    int last_status = 0;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            auto backoff = std::chrono::milliseconds(100 * (1 << (attempt - 1)));
            if (backoff > std::chrono::milliseconds(2000)) backoff = std::chrono::milliseconds(2000);
            std::this_thread::sleep_for(backoff);
        }
        httplib::Client client(origin);
        client.set_connection_timeout(std::chrono::duration<double>(spec_.timeout_s));
        client.set_read_timeout(std::chrono::duration<double>(spec_.timeout_s));
        client.set_write_timeout(std::chrono::duration<double>(spec_.timeout_s));

        auto result = client.Post(path, headers, body, "application/json");
        if (!result) {
            last_error = httplib::to_string(result.error());
            last_status = 0;
            continue;
        }
        if (result->status == 200) {
            return extract_completion(result->body);
        }
        last_status = result->status;
        last_error = "HTTP " + std::to_string(result->status);
    }

    if (last_status == 0) {
        raise(Errc::provider_timeout, "no response from " + spec_.endpoint + " after " +
                                          std::to_string(attempts) + " attempts: " + last_error);
    }
    Error err(Errc::provider_http_error, "request to " + spec_.endpoint + " failed after " +
                                             std::to_string(attempts) +
                                             " attempts: " + last_error);
    err.set_http_status(last_status);
    throw err;
}

// --- ReplayProvider ----------------------------------------------------------

ReplayProvider::ReplayProvider(std::shared_ptr<Transcript> transcript, bool exact)
    : transcript_(std::move(transcript)), exact_(exact) {}

std::string ReplayProvider::complete(const std::vector<ChatMessage>& messages,
                                     const std::string& scope) {
    std::string fp = exact_ ? exact_fingerprint(messages) : structural_fingerprint(messages);
    return transcript_->take(scope, fp).response;
}

// --- RecordingProvider --------------------------------------------------------

RecordingProvider::RecordingProvider(std::shared_ptr<Provider> inner,
                                     std::shared_ptr<TranscriptWriter> sink, bool exact)
    : inner_(std::move(inner)), sink_(std::move(sink)), exact_(exact) {}

std::string RecordingProvider::complete(const std::vector<ChatMessage>& messages,
                                        const std::string& scope) {
    std::string fp = exact_ ? exact_fingerprint(messages) : structural_fingerprint(messages);
    std::string response = inner_->complete(messages, scope);
    sink_->append(scope, fp, response);
    return response;
}

// --- CountingProvider ----------------------------------------------------------

CountingProvider::CountingProvider(std::shared_ptr<Provider> inner,
                                   std::atomic<std::uint64_t>* counter)
    : inner_(std::move(inner)), counter_(counter) {}

std::string CountingProvider::complete(const std::vector<ChatMessage>& messages,
                                       const std::string& scope) {
    counter_->fetch_add(1, std::memory_order_relaxed);
    return inner_->complete(messages, scope);
}

// --- factory -------------------------------------------------------------------

std::shared_ptr<Provider> make_provider(const ProviderSpec& spec) {
    switch (spec.kind) {
    case ProviderKind::http_openai_compatible:
        return std::make_shared<HttpProvider>(spec);
    case ProviderKind::scripted_replay: {
        auto transcript = std::make_shared<Transcript>(Transcript::load(spec.transcript_path));
        return std::make_shared<ReplayProvider>(std::move(transcript), spec.exact_fingerprint);
    }
    case ProviderKind::scripted_record: {
        if (spec.transcript_path.empty()) {
            raise(Errc::config_invalid, "scripted_record provider needs a transcript path");
        }
        auto live = std::make_shared<HttpProvider>(spec);
        // Roles recording into the same file share one writer so whole lines
        // are serialized under a single mutex.
        static std::mutex registry_mutex;
        static std::map<std::string, std::weak_ptr<TranscriptWriter>> registry;
        std::error_code ec;
        auto canonical = std::filesystem::weakly_canonical(spec.transcript_path, ec);
        const std::string key = ec ? spec.transcript_path.string() : canonical.string();
        std::shared_ptr<TranscriptWriter> sink;
        {
            std::lock_guard lock(registry_mutex);
            sink = registry[key].lock();
            if (!sink) {
                sink = std::make_shared<TranscriptWriter>(spec.transcript_path);
                registry[key] = sink;
            }
        }
        return std::make_shared<RecordingProvider>(std::move(live), std::move(sink),
                                                   spec.exact_fingerprint);
    }
    }
    raise(Errc::config_invalid, "unknown provider kind");
}

} // namespace skillprobe::provider
