#include "skillprobe/store.hpp"

#include "skillprobe/errors.hpp"
#include "skillprobe/util.hpp"

#include <array>
#include <set>

namespace fs = std::filesystem;

namespace skillprobe::store {

const char* to_string(EventType type) {
    switch (type) {
    case EventType::campaign_start: return "campaign_start";
    case EventType::skill_start: return "skill_start";
    case EventType::analysis: return "analysis";
    case EventType::lane_init: return "lane_init";
    case EventType::execute: return "execute";
    case EventType::judgment: return "judgment";
    case EventType::feedback: return "feedback";
    case EventType::refine: return "refine";
    case EventType::skill_result: return "skill_result";
    case EventType::report: return "report";
    }
    return "campaign_start";
}

std::optional<EventType> event_type_from(const std::string& name) {
    static const std::array<EventType, 10> all = {
        EventType::campaign_start, EventType::skill_start, EventType::analysis,
        EventType::lane_init,      EventType::execute,     EventType::judgment,
        EventType::feedback,       EventType::refine,      EventType::skill_result,
        EventType::report,
    };
    for (EventType type : all) {
        if (name == to_string(type)) return type;
    }
    return std::nullopt;
}

nlohmann::ordered_json to_json(const Event& event) {
    nlohmann::ordered_json doc;
    doc["seq"] = event.seq;
    doc["ts"] = event.ts;
    doc["type"] = to_string(event.type);
    doc["campaign"] = event.campaign;
    doc["skill"] = event.skill;
    doc["lane"] = event.lane;
    doc["round"] = event.round;
    doc["payload"] = event.payload;
    return doc;
}

Event event_from_json(const nlohmann::json& doc) {
    Event event;
    event.seq = doc.value("seq", std::uint64_t{0});
    event.ts = doc.value("ts", "");
    auto type = event_type_from(doc.value("type", ""));
    if (!type) raise(Errc::store_corrupt, "unknown event type: " + doc.value("type", ""));
    event.type = *type;
    event.campaign = doc.value("campaign", "");
    event.skill = doc.value("skill", "");
    event.lane = doc.value("lane", "");
    event.round = doc.value("round", 0);
    if (doc.contains("payload")) event.payload = doc["payload"];
    return event;
}

EventStore::EventStore(fs::path file) : path_(std::move(file)) {
    std::error_code ec;
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path(), ec);
    if (fs::exists(path_, ec)) {
        for (const Event& event : read_all(path_)) {
            next_seq_ = std::max(next_seq_, event.seq + 1);
        }
    }
    out_.open(path_, std::ios::app);
    if (!out_) raise(Errc::store_corrupt, "cannot open store for append: " + path_.string());
}

void EventStore::append(Event event) {
    std::lock_guard<std::mutex> lock(mutex_);
    event.seq = next_seq_++;
    event.ts = util::now_iso8601();
    out_ << to_json(event).dump() << '\n';
    out_.flush();
    if (!out_) raise(Errc::store_corrupt, "write failed on store: " + path_.string());
}

std::vector<Event> EventStore::read_all(const fs::path& file) {
    std::ifstream in(file);
    if (!in) raise(Errc::store_corrupt, "cannot open store: " + file.string());
    std::vector<Event> events;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        try {
            events.push_back(event_from_json(nlohmann::json::parse(line)));
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            raise(Errc::store_corrupt,
                  file.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return events;
}

namespace {

const std::set<std::string>& volatile_keys() {
    static const std::set<std::string> keys = {
        "ts",          "duration_s",     "providers",   "store_path",
        "skill_dirs",  "workspace_base", "prompts_dir", "transcript_path",
        "transcript_file", "transcript_files", "agent_adapter",
    };
    return keys;
}

nlohmann::ordered_json scrub(const nlohmann::ordered_json& value) {
    if (value.is_object()) {
        nlohmann::ordered_json out = nlohmann::ordered_json::object();
        for (const auto& [key, child] : value.items()) {
            if (volatile_keys().count(key) > 0) continue;
            out[key] = scrub(child);
        }
        return out;
    }
    if (value.is_array()) {
        nlohmann::ordered_json out = nlohmann::ordered_json::array();
        for (const auto& child : value) out.push_back(scrub(child));
        return out;
    }
    return value;
}

} // namespace

nlohmann::ordered_json canonical_events(const std::vector<Event>& events) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const Event& event : events) {
        out.push_back(scrub(to_json(event)));
    }
    return out;
}

std::string canonical_dump(const fs::path& file) {
    std::string dump;
    for (const auto& record : canonical_events(EventStore::read_all(file))) {
        dump += record.dump();
        dump += '\n';
    }
    return dump;
}

} // namespace skillprobe::store
