#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace skillprobe::store {

enum class EventType {
    campaign_start,
    skill_start,
    analysis,
    lane_init,
    execute,
    judgment,
    feedback,
    refine,
    skill_result,
    report,
};

[[nodiscard]] const char* to_string(EventType type);
[[nodiscard]] std::optional<EventType> event_type_from(const std::string& name);

// One store record. seq is a monotone sequence number assigned at append; ts
// is wall-clock and excluded from canonical comparisons.
struct Event {
    std::uint64_t seq = 0;
    std::string ts;
    EventType type = EventType::campaign_start;
    std::string campaign;
    std::string skill;
    std::string lane;
    int round = 0;
    nlohmann::ordered_json payload;
};

[[nodiscard]] nlohmann::ordered_json to_json(const Event& event);
[[nodiscard]] Event event_from_json(const nlohmann::json& doc);

// Append-only JSONL event log with a single serialized writer. Opening an
// existing file continues its sequence.
class EventStore {
public:
    explicit EventStore(std::filesystem::path file);

    // Assigns seq and ts, then writes and flushes one line.
    void append(Event event);

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::uint64_t next_seq() const { return next_seq_; }

    // Whole-file read; throws Error{store_corrupt} on any unparseable line.
    [[nodiscard]] static std::vector<Event> read_all(const std::filesystem::path& file);

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::uint64_t next_seq_ = 1;
    std::mutex mutex_;
};

// Canonical form for byte-comparing two stores: volatile fields (timestamps,
// durations, machine-local paths, provider plumbing) are dropped recursively.
[[nodiscard]] nlohmann::ordered_json canonical_events(const std::vector<Event>& events);

// Canonical dump of a store file, one canonical record per line.
[[nodiscard]] std::string canonical_dump(const std::filesystem::path& file);

} // namespace skillprobe::store
