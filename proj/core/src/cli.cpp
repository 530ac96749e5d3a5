#include "skillprobe/cli.hpp"

#include "skillprobe/analyzer.hpp"
#include "skillprobe/campaign.hpp"
#include "skillprobe/config.hpp"
#include "skillprobe/errors.hpp"
#include "skillprobe/skill.hpp"
#include "skillprobe/store.hpp"
#include "skillprobe/util.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <set>

namespace fs = std::filesystem;

namespace skillprobe::cli {

namespace {

// Usage-class failures (bad config, bad paths, bad arguments) exit 2;
// everything else the library raises is a runtime failure and exits 3.
int exit_code_for(const Error& e) {
    switch (e.code()) {
    case Errc::config_invalid:
    case Errc::invalid_argument:
    case Errc::missing_instruction:
    case Errc::empty_skill:
    case Errc::traversal_violation:
        return 2;
    default:
        return 3;
    }
}

struct Options {
    std::string config_path;
    std::vector<std::string> skill_dirs;
    std::string store_path;
    int budget = -1;
    int max_surfaces = -1;
    std::string stop_on_first_success; // "true" | "false" | ""
    int lane_parallelism = -1;
    int skill_parallelism = -1;
    std::string workspace_base;
    std::string prompts_dir;
    std::string out_dir;
    std::string format = "text";
    std::vector<std::string> filters;
    std::vector<std::string> transcripts;
};

void apply_overrides(config::CampaignConfig& config, const Options& opt) {
    if (!opt.store_path.empty()) config.store_path = fs::absolute(opt.store_path);
    if (opt.budget >= 0) config.budget_b = opt.budget;
    if (opt.max_surfaces >= 0) config.max_surfaces = opt.max_surfaces;
    if (opt.stop_on_first_success == "true") config.stop_on_first_success = true;
    if (opt.stop_on_first_success == "false") config.stop_on_first_success = false;
    if (opt.lane_parallelism >= 0) config.lane_parallelism = opt.lane_parallelism;
    if (opt.skill_parallelism >= 0) config.skill_parallelism = opt.skill_parallelism;
    if (!opt.workspace_base.empty()) {
        config.sandbox.workspace_base = fs::absolute(opt.workspace_base);
    }
    if (!opt.prompts_dir.empty()) config.prompts_dir = fs::absolute(opt.prompts_dir);
}

std::vector<skill::Skill> load_skills(const std::vector<std::string>& dirs) {
    std::vector<skill::Skill> skills;
    skills.reserve(dirs.size());
    for (const std::string& dir : dirs) {
        if (!fs::is_directory(dir)) {
            raise(Errc::invalid_argument, "not a skill directory: " + dir);
        }
        skills.push_back(skill::load_skill(dir));
    }
    return skills;
}

// --- analyze ---------------------------------------------------------------------

int cmd_analyze(const Options& opt, std::ostream& out, std::ostream& err) {
    config::CampaignConfig config = config::load_config(opt.config_path);
    apply_overrides(config, opt);
    config::validate(config);

    auto it = config.providers.find("auditor");
    if (it == config.providers.end()) {
        raise(Errc::config_invalid, "analyze needs an auditor provider in the config");
    }
    std::shared_ptr<provider::Provider> auditor = provider::make_provider(it->second);

    std::vector<skill::Skill> skills = load_skills(opt.skill_dirs);

    bool any_surface = false;
    nlohmann::ordered_json machine;
    machine["skills"] = nlohmann::ordered_json::array();
    for (const skill::Skill& s : skills) {
        analyzer::AnalyzeOptions options;
        options.max_surfaces = config.max_surfaces;
        std::vector<analyzer::Vulnerability> surfaces =
            analyzer::analyze(s, *auditor, options, "auditor/" + s.id);
        any_surface = any_surface || !surfaces.empty();

        if (!opt.out_dir.empty()) {
            fs::create_directories(opt.out_dir);
            analyzer::write_report(s, surfaces, fs::path(opt.out_dir) / (s.id + ".report.txt"));
        }
        if (opt.format == "json") {
            nlohmann::ordered_json entry;
            entry["skill_id"] = s.id;
            entry["surfaces"] = nlohmann::ordered_json::array();
            for (const auto& v : surfaces) entry["surfaces"].push_back(analyzer::to_json(v));
            machine["skills"].push_back(std::move(entry));
        } else {
            out << s.id << ": " << surfaces.size() << " surface(s)\n";
            for (const auto& v : surfaces) {
                out << "  - " << analyzer::to_string(v.category) << " ["
                    << analyzer::to_string(v.confidence) << "] " << v.rationale << "\n";
            }
        }
    }
    if (opt.format == "json") out << machine.dump(2) << "\n";
    (void)err;
    return any_surface ? 1 : 0;
}

// --- run --------------------------------------------------------------------------

int cmd_run(const Options& opt, std::ostream& out, std::ostream& err) {
    config::CampaignConfig config = config::load_config(opt.config_path);
    apply_overrides(config, opt);
    config::validate(config);
    if (config.store_path.empty()) {
        raise(Errc::config_invalid, "run needs a store path (config campaign.store_path or --store)");
    }

    std::vector<skill::Skill> skills = load_skills(opt.skill_dirs);

    campaign::RunOptions options;
    options.progress = [&out](const std::string& line) { out << line << "\n"; };
    for (const std::string& dir : opt.skill_dirs) {
        options.skill_dirs.push_back(fs::absolute(dir).string());
    }
    bool exact = false;
    for (const char* role : {"auditor", "attacker", "agent", "judge"}) {
        auto it = config.providers.find(role);
        if (it == config.providers.end()) continue;
        exact = exact || it->second.exact_fingerprint;
        if (it->second.kind != provider::ProviderKind::http_openai_compatible &&
            !it->second.transcript_path.empty()) {
            fs::path file = fs::absolute(it->second.transcript_path);
            if (std::find(options.transcript_files.begin(), options.transcript_files.end(),
                          file) == options.transcript_files.end()) {
                options.transcript_files.push_back(file);
            }
        }
    }
    options.fingerprint_mode = exact ? "exact" : "structural";

    campaign::CampaignOutcome outcome = campaign::run_campaign(skills, config, options);

    if (opt.format == "json") {
        nlohmann::ordered_json doc;
        doc["campaign_id"] = outcome.campaign_id;
        doc["results"] = nlohmann::ordered_json::array();
        for (const auto& r : outcome.results) doc["results"].push_back(campaign::to_json(r));
        doc["report"] = campaign::to_json(outcome.report);
        out << doc.dump(2) << "\n";
    } else {
        out << "\n" << campaign::render_report_text(outcome.report);
    }

    bool any_exploit = false;
    bool all_error = !outcome.results.empty();
    for (const auto& r : outcome.results) {
        any_exploit = any_exploit || r.outcome == campaign::SkillOutcome::exploited;
        all_error = all_error && r.outcome == campaign::SkillOutcome::error;
    }
    if (any_exploit) return 1;
    if (all_error) {
        err << "error: every skill failed (" << outcome.results.front().detail << ")\n";
        return 3;
    }
    return 0;
}

// --- report -----------------------------------------------------------------------

int cmd_report(const Options& opt, std::ostream& out, std::ostream& err) {
    fs::path store_path = opt.store_path;
    if (store_path.empty() && !opt.config_path.empty()) {
        store_path = config::load_config(opt.config_path).store_path;
    }
    if (store_path.empty()) {
        raise(Errc::invalid_argument, "report needs --store or a config with a store path");
    }
    if (!fs::exists(store_path)) {
        raise(Errc::invalid_argument, "no such store: " + store_path.string());
    }

    campaign::ReportFilter filter;
    for (const std::string& spec : opt.filters) {
        auto eq = spec.find('=');
        if (eq == std::string::npos) {
            raise(Errc::invalid_argument, "filter must be key=value: " + spec);
        }
        std::string key = spec.substr(0, eq);
        std::string value = spec.substr(eq + 1);
        // Model tags are campaign split tags by convention, so both filter
        // keys select a split.
        if (key == "split" || key == "model") {
            filter.split = value;
        } else if (key == "category") {
            filter.category = value;
        } else {
            raise(Errc::invalid_argument, "unknown filter key: " + key);
        }
    }

    std::vector<store::Event> events = store::EventStore::read_all(store_path);
    campaign::CampaignReport report = campaign::report_from_events(events, filter);

    if (opt.format == "json") {
        out << campaign::to_json(report).dump(2) << "\n";
    } else {
        out << campaign::render_report_text(report);
    }
    (void)err;
    return report.asr > 0.0 ? 1 : 0;
}

// --- replay -----------------------------------------------------------------------

// Records whether a replay failure was a transcript divergence, which exits 3
// rather than reporting a store diff.
class GuardedProvider : public provider::Provider {
public:
    GuardedProvider(std::shared_ptr<provider::Provider> inner,
                    std::shared_ptr<std::atomic<bool>> tripped)
        : inner_(std::move(inner)), tripped_(std::move(tripped)) {}

    std::string complete(const std::vector<provider::ChatMessage>& messages,
                         const std::string& scope) override {
        try {
            return inner_->complete(messages, scope);
        } catch (const Error& e) {
            if (e.code() == Errc::transcript_mismatch || e.code() == Errc::transcript_exhausted) {
                tripped_->store(true);
            }
            throw;
        }
    }

private:
    std::shared_ptr<provider::Provider> inner_;
    std::shared_ptr<std::atomic<bool>> tripped_;
};

int cmd_replay(const Options& opt, std::ostream& out, std::ostream& err) {
    fs::path store_path = opt.store_path;
    if (!fs::exists(store_path)) {
        raise(Errc::invalid_argument, "no such store: " + store_path.string());
    }
    std::vector<store::Event> original = store::EventStore::read_all(store_path);

    const store::Event* start = nullptr;
    for (const store::Event& event : original) {
        if (event.type == store::EventType::campaign_start) {
            start = &event;
            break;
        }
    }
    if (start == nullptr) {
        raise(Errc::invalid_argument, "store has no campaign_start event");
    }
    const nlohmann::ordered_json& payload = start->payload;

    auto resolve = [&](const std::string& recorded) -> fs::path {
        fs::path p = recorded;
        if (fs::exists(p)) return p;
        fs::path sibling = store_path.parent_path() / p.filename();
        if (fs::exists(sibling)) return sibling;
        return p;
    };

    std::vector<std::string> skill_dirs;
    if (payload.contains("skill_dirs")) {
        skill_dirs = payload["skill_dirs"].get<std::vector<std::string>>();
    }
    if (skill_dirs.empty()) {
        raise(Errc::invalid_argument,
              "store records no skill directories; it was not produced by the run command");
    }
    std::vector<std::string> resolved_dirs;
    for (const std::string& dir : skill_dirs) {
        fs::path p = resolve(dir);
        if (!fs::is_directory(p)) {
            raise(Errc::invalid_argument, "recorded skill directory is missing: " + dir);
        }
        resolved_dirs.push_back(p.string());
    }
    std::vector<skill::Skill> skills = load_skills(resolved_dirs);

    std::vector<fs::path> transcript_files;
    for (const std::string& file : opt.transcripts) transcript_files.emplace_back(file);
    if (transcript_files.empty() && payload.contains("transcript_files")) {
        for (const auto& file : payload["transcript_files"]) {
            transcript_files.push_back(resolve(file.get<std::string>()));
        }
    }
    if (transcript_files.empty()) {
        fs::path sibling = store_path.parent_path() / "transcripts.jsonl";
        if (fs::exists(sibling)) transcript_files.push_back(sibling);
    }
    if (transcript_files.empty()) {
        raise(Errc::invalid_argument,
              "no transcripts recorded in the store; pass --transcript");
    }

    auto transcript = std::make_shared<provider::Transcript>();
    for (const fs::path& file : transcript_files) {
        std::ifstream in(file, std::ios::binary);
        if (!in) {
            raise(Errc::invalid_argument, "cannot read transcript: " + file.string());
        }
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                err << "transcript " << file.string() << ":" << line_no << ": " << e.what()
                    << "\n";
                return 3;
            }
            provider::TranscriptEntry entry;
            entry.role_tag = doc.value("role_tag", "");
            entry.fingerprint = doc.value("fingerprint", "");
            entry.response = doc.value("response", "");
            transcript->add(std::move(entry));
        }
    }

    const bool exact = payload.value("fingerprint_mode", "structural") == "exact";

    config::CampaignConfig config;
    config.budget_b = payload.value("budget_b", 5);
    config.max_surfaces = payload.value("max_surfaces", 5);
    config.stop_on_first_success = payload.value("stop_on_first_success", true);
    config.lane_parallelism = 1;
    config.skill_parallelism = 1;
    if (payload.contains("sandbox")) {
        const auto& box = payload["sandbox"];
        if (box.contains("network_policy")) {
            auto policy = sandbox::network_policy_from(box["network_policy"].get<std::string>());
            if (policy) config.sandbox.network_policy = *policy;
        }
        config.sandbox.step_limit = box.value("step_limit", config.sandbox.step_limit);
        config.sandbox.env_scrub = box.value("env_scrub", config.sandbox.env_scrub);
        if (box.contains("allowlist")) {
            config.sandbox.allowlist = box["allowlist"].get<std::vector<std::string>>();
        }
    }
    config.sandbox.retention = sandbox::WorkspaceRetention::remove;
    if (!opt.workspace_base.empty()) {
        config.sandbox.workspace_base = fs::absolute(opt.workspace_base);
    }
    if (payload.contains("prompts_dir")) {
        fs::path prompts = resolve(payload["prompts_dir"].get<std::string>());
        if (!fs::is_directory(prompts)) {
            raise(Errc::invalid_argument,
                  "recorded prompt template directory is missing: " + prompts.string());
        }
        config.prompts_dir = prompts;
    }
    if (payload.contains("agent_adapter")) {
        fs::path adapter = resolve(payload["agent_adapter"].get<std::string>());
        if (!fs::exists(adapter)) {
            raise(Errc::invalid_argument,
                  "recorded agent adapter is missing: " + adapter.string());
        }
        config.agent_adapter = adapter;
    }
    config.store_path = fs::temp_directory_path() /
                        ("skillprobe-replay-" + start->campaign + "-" +
                         std::to_string(static_cast<long>(::getpid())) + ".jsonl");
    std::error_code ec;
    fs::remove(config.store_path, ec);

    auto tripped = std::make_shared<std::atomic<bool>>(false);
    auto guarded = [&] {
        return std::make_shared<GuardedProvider>(
            std::make_shared<provider::ReplayProvider>(transcript, exact), tripped);
    };
    campaign::RoleProviders providers;
    providers.auditor = guarded();
    providers.attacker = guarded();
    providers.agent = guarded();
    providers.judge = guarded();

    campaign::RunOptions options;
    options.providers = &providers;
    options.skill_dirs = skill_dirs;
    options.transcript_files = transcript_files;
    options.fingerprint_mode = payload.value("fingerprint_mode", "structural");

    (void)campaign::run_campaign(skills, config, options);

    std::vector<store::Event> replayed = store::EventStore::read_all(config.store_path);
    fs::remove(config.store_path, ec);

    if (tripped->load()) {
        err << "replay diverged: transcript mismatch or exhaustion\n";
        return 3;
    }

    nlohmann::ordered_json before = store::canonical_events(original);
    nlohmann::ordered_json after = store::canonical_events(replayed);
    if (before == after) {
        out << "replay verified: " << before.size() << " events identical\n";
        return 0;
    }
    std::size_t limit = std::min(before.size(), after.size());
    std::size_t at = limit;
    for (std::size_t i = 0; i < limit; ++i) {
        if (before[i] != after[i]) {
            at = i;
            break;
        }
    }
    out << "replay diverged at event " << (at + 1) << " of " << before.size() << " (replay has "
        << after.size() << ")\n";
    auto clip = [](const std::string& text) {
        return text.size() > 200 ? text.substr(0, 200) + "…" : text;
    };
    if (at < before.size()) out << "  original: " << clip(before[at].dump()) << "\n";
    if (at < after.size()) out << "  replayed: " << clip(after[at].dump()) << "\n";
    return 1;
}

// --- validate ----------------------------------------------------------------------

int cmd_validate(const Options& opt, std::ostream& out, std::ostream& err) {
    if (opt.config_path.empty() && opt.skill_dirs.empty()) {
        raise(Errc::invalid_argument, "validate needs --config and/or skill directories");
    }
    std::vector<std::string> findings;
    auto finding = [&](const std::string& text) { findings.push_back(text); };

    if (!opt.config_path.empty()) {
        if (!fs::exists(opt.config_path)) {
            raise(Errc::invalid_argument, "no such config file: " + opt.config_path);
        }
        try {
            config::CampaignConfig config = config::load_config(opt.config_path);
            config::validate(config);
            for (const auto& [role, spec] : config.providers) {
                if (spec.kind != provider::ProviderKind::http_openai_compatible) {
                    if (spec.transcript_path.empty()) {
                        finding(role + ": scripted provider without a transcript path");
                    } else if (spec.kind == provider::ProviderKind::scripted_replay &&
                               !fs::exists(spec.transcript_path)) {
                        finding(role + ": transcript file missing: " +
                                spec.transcript_path.string());
                    }
                } else if (!spec.credential_ref.empty() &&
                           std::getenv(spec.credential_ref.c_str()) == nullptr) {
                    // Name only; the value must never appear in any output.
                    finding(role + ": credential variable not set: " + spec.credential_ref);
                }
            }
            if (!config.prompts_dir.empty() && !fs::is_directory(config.prompts_dir)) {
                finding("prompt template directory missing: " + config.prompts_dir.string());
            }
            if (!config.agent_adapter.empty() && !fs::exists(config.agent_adapter)) {
                finding("agent adapter missing: " + config.agent_adapter.string());
            }
        } catch (const Error& e) {
            finding(std::string("config: ") + e.what());
        }
    }

    for (const std::string& dir : opt.skill_dirs) {
        if (!fs::is_directory(dir)) {
            finding("not a skill directory: " + dir);
            continue;
        }
        try {
            skill::Skill s = skill::load_skill(dir);
            for (const std::string& warning : s.warnings) {
                finding(s.id + ": " + warning);
            }
        } catch (const Error& e) {
            finding(dir + ": " + e.what());
        }
    }

    for (const std::string& text : findings) out << "finding: " << text << "\n";
    out << findings.size() << " finding(s)\n";
    (void)err;
    return findings.empty() ? 0 : 1;
}

} // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"red-team search for exploitable agent skill packages", "skillprobe"};
    app.require_subcommand(1);

    Options opt;

    auto add_campaign_flags = [&](CLI::App* cmd) {
        cmd->add_option("--store", opt.store_path, "campaign store path override");
        cmd->add_option("--budget", opt.budget, "refinement rounds per lane");
        cmd->add_option("--max-surfaces", opt.max_surfaces, "attack surfaces per skill");
        cmd->add_option("--stop-on-first-success", opt.stop_on_first_success,
                        "stop a skill at its first exploit (true|false)")
            ->check(CLI::IsMember({"true", "false"}));
        cmd->add_option("--lane-parallelism", opt.lane_parallelism, "concurrent lanes per skill");
        cmd->add_option("--skill-parallelism", opt.skill_parallelism, "concurrent skills");
        cmd->add_option("--workspace-base", opt.workspace_base, "sandbox workspace root");
        cmd->add_option("--prompts-dir", opt.prompts_dir, "prompt template overrides");
    };

    CLI::App* analyze = app.add_subcommand("analyze", "find attack surfaces in skill packages");
    analyze->add_option("skills", opt.skill_dirs, "skill directories")->required();
    analyze->add_option("--config", opt.config_path, "campaign config file")->required();
    analyze->add_option("--out", opt.out_dir, "directory for per-skill reports");
    analyze->add_option("--max-surfaces", opt.max_surfaces, "attack surfaces per skill");
    analyze->add_option("--format", opt.format, "output format")
        ->check(CLI::IsMember({"text", "json"}));

    CLI::App* run = app.add_subcommand("run", "run the attack campaign");
    run->add_option("skills", opt.skill_dirs, "skill directories")->required();
    run->add_option("--config", opt.config_path, "campaign config file")->required();
    add_campaign_flags(run);
    run->add_option("--format", opt.format, "output format")
        ->check(CLI::IsMember({"text", "json"}));

    CLI::App* report = app.add_subcommand("report", "recompute metrics from a campaign store");
    report->add_option("--store", opt.store_path, "campaign store path");
    report->add_option("--config", opt.config_path, "campaign config file");
    report->add_option("--filter", opt.filters, "split=NAME, model=NAME or category=NAME");
    report->add_option("--format", opt.format, "output format")
        ->check(CLI::IsMember({"text", "json"}));

    CLI::App* replay = app.add_subcommand("replay", "re-execute a recorded campaign and diff");
    replay->add_option("store", opt.store_path, "campaign store to verify")->required();
    replay->add_option("--transcript", opt.transcripts, "transcript file override");
    replay->add_option("--workspace-base", opt.workspace_base, "sandbox workspace root");

    CLI::App* validate = app.add_subcommand("validate", "preflight configs and skill fixtures");
    validate->add_option("skills", opt.skill_dirs, "skill directories");
    validate->add_option("--config", opt.config_path, "campaign config file");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(analyze)) return cmd_analyze(opt, out, err);
        if (app.got_subcommand(run)) return cmd_run(opt, out, err);
        if (app.got_subcommand(report)) return cmd_report(opt, out, err);
        if (app.got_subcommand(replay)) return cmd_replay(opt, out, err);
        if (app.got_subcommand(validate)) return cmd_validate(opt, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
    err << "error: no command\n";
    return 2;
}

} // namespace skillprobe::cli
