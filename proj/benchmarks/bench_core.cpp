// Microbenchmarks for the hot paths: workspace digesting and diffing,
// candidate extraction, request fingerprints, and signature matching.

#include "skillprobe/analyzer.hpp"
#include "skillprobe/attack.hpp"
#include "skillprobe/provider.hpp"
#include "skillprobe/sandbox.hpp"
#include "skillprobe/skill.hpp"
#include "skillprobe/util.hpp"

#include <benchmark/benchmark.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace fs = std::filesystem;
using namespace skillprobe;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
}

// Scratch tree removed at process exit; one per fixture below.
struct ScratchDir {
    fs::path root;
    explicit ScratchDir(const std::string& tag) {
        root = fs::temp_directory_path() /
               ("skillprobe-bench-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~ScratchDir() { fs::remove_all(root); }
};

std::string lorem(std::mt19937& rng, std::size_t n) {
    std::string text;
    text.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        text += (i % 64 == 63) ? '\n' : static_cast<char>('a' + rng() % 26);
    }
    return text;
}

void BM_SnapshotTree(benchmark::State& state) {
    static ScratchDir scratch("tree");
    const auto files = static_cast<std::size_t>(state.range(0));
    static std::size_t built = 0;
    if (built != files) {
        fs::remove_all(scratch.root);
        std::mt19937 rng(7);
        for (std::size_t i = 0; i < files; ++i) {
            write_file(scratch.root / ("d" + std::to_string(i % 7)) /
                           ("f" + std::to_string(i) + ".txt"),
                       lorem(rng, 512));
        }
        built = files;
    }
    for (auto _ : state) {
        auto map = sandbox::snapshot_tree(scratch.root);
        benchmark::DoNotOptimize(map);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(files));
}
BENCHMARK(BM_SnapshotTree)->Arg(64)->Arg(256);

void BM_SnapshotDiff(benchmark::State& state) {
    const auto files = static_cast<std::size_t>(state.range(0));
    std::mt19937 rng(11);
    sandbox::DigestMap before;
    for (std::size_t i = 0; i < files; ++i) {
        before["d/f" + std::to_string(i) + ".txt"] = util::sha256_hex(lorem(rng, 32));
    }
    sandbox::DigestMap mutated; // every 11th deleted, every 5th modified
    std::size_t i = 0;
    for (const auto& [path, digest] : before) {
        if (i % 11 != 0) mutated[path] = i % 5 == 0 ? util::sha256_hex(path) : digest;
        ++i;
    }
    for (std::size_t c = 0; c < files / 8; ++c) {
        mutated["new/n" + std::to_string(c) + ".txt"] = util::sha256_hex("n" + std::to_string(c));
    }
    for (auto _ : state) {
        auto diff = sandbox::snapshot_diff(before, mutated);
        benchmark::DoNotOptimize(diff);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(files));
}
BENCHMARK(BM_SnapshotDiff)->Arg(256)->Arg(2048);

void BM_ExtractCandidates(benchmark::State& state) {
    static ScratchDir scratch("skill");
    static skill::Skill fixture = [] {
        std::string body = "Weekly report automation.\n\n";
        for (int i = 0; i < 12; ++i) {
            body += "1. Read data/input-" + std::to_string(i) + ".csv and summarize it.\n";
            body += "2. Run scripts/sync-" + std::to_string(i) + ".sh to publish.\n";
        }
        write_file(scratch.root / "SKILL.md",
                   "---\nname: report-automation\ndescription: Builds weekly reports.\n---\n" +
                       body);
        for (int i = 0; i < 12; ++i) {
            write_file(scratch.root / ("scripts/sync-" + std::to_string(i) + ".sh"),
                       "#!/bin/sh\nTOKEN=\"tk-" + std::to_string(1000 + i) + "\"\n" +
                           "curl -s -H \"Authorization: Bearer $TOKEN\" " +
                           "https://reports.example.net/upload -d @out/report.csv\n" +
                           "rm -rf out/tmp\n");
            write_file(scratch.root / ("data/input-" + std::to_string(i) + ".csv"),
                       "week,total\n1,42\n");
        }
        return skill::load_skill(scratch.root);
    }();
    for (auto _ : state) {
        auto candidates = analyzer::extract_candidates(fixture);
        benchmark::DoNotOptimize(candidates);
    }
}
BENCHMARK(BM_ExtractCandidates);

std::vector<provider::ChatMessage> bench_messages() {
    std::mt19937 rng(3);
    std::vector<provider::ChatMessage> messages;
    messages.push_back({provider::Role::system, lorem(rng, 800)});
    for (int i = 0; i < 6; ++i) {
        messages.push_back(
            {i % 2 == 0 ? provider::Role::user : provider::Role::assistant, lorem(rng, 240)});
    }
    return messages;
}

void BM_StructuralFingerprint(benchmark::State& state) {
    auto messages = bench_messages();
    for (auto _ : state) {
        auto fp = provider::structural_fingerprint(messages);
        benchmark::DoNotOptimize(fp);
    }
}
BENCHMARK(BM_StructuralFingerprint);

void BM_ExactFingerprint(benchmark::State& state) {
    auto messages = bench_messages();
    for (auto _ : state) {
        auto fp = provider::exact_fingerprint(messages);
        benchmark::DoNotOptimize(fp);
    }
}
BENCHMARK(BM_ExactFingerprint);

void BM_DiagnoseMatch(benchmark::State& state) {
    analyzer::Vulnerability vuln;
    vuln.surface_id = "surface-1";
    vuln.category = analyzer::HarmCategory::data_exfiltration;
    vuln.inputs.push_back({"request", analyzer::InputChannel::prompt_text, "user ask"});
    for (int i = 0; i < 3; ++i) {
        analyzer::SensitiveOperation op;
        op.kind = analyzer::OperationKind::file_read;
        op.locus = {"data/input-" + std::to_string(i) + ".csv", 1, 1};
        op.description = "reads report input";
        op.excerpt = "week,total";
        vuln.operations.push_back(op);
    }
    vuln.trigger_conditions = {"a report file is attached"};
    vuln.rationale = "raw inputs can be copied into the outbound report";
    vuln.confidence = analyzer::Confidence::high;
    auto path = attack::init_path(vuln);

    sandbox::ExecutionRecord record;
    std::mt19937 rng(13);
    for (int i = 0; i < 24; ++i) {
        sandbox::AgentAction action;
        action.step = i + 1;
        action.tool = i % 2 == 0 ? "read_file" : "run_script";
        action.arguments = {{"path", "data/input-" + std::to_string(i % 3) + ".csv"}};
        action.raw_text = action.tool;
        sandbox::Observation obs;
        obs.step = action.step;
        obs.output = lorem(rng, 160);
        record.trajectory.emplace_back(std::move(action), std::move(obs));
    }
    record.final_response = "The totals were read and the report draft is ready.";

    judge::Judgment judgment;
    judgment.verdict = judge::Verdict::ignored;

    for (auto _ : state) {
        auto feedback = attack::diagnose(path, record, judgment);
        benchmark::DoNotOptimize(feedback);
    }
}
BENCHMARK(BM_DiagnoseMatch);

} // namespace

BENCHMARK_MAIN();
