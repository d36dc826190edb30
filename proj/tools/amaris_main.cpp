#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "amaris/analytics.hpp"
#include "amaris/harness.hpp"
#include "amaris/judge.hpp"
#include "amaris/memory.hpp"
#include "amaris/scheduler.hpp"

namespace fs = std::filesystem;
using namespace amaris;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("io_error", "cannot write '" + path.string() + "'");
    out << text;
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("io_error", "cannot open '" + path + "'");
    json j;
    in >> j;
    return j;
}

std::shared_ptr<JudgeGateway> make_gateway(const RunConfig& config) {
    if (config.backend == "http") return std::make_shared<HttpGateway>(HttpGatewayConfig::from_env());
    ScriptedScenario scenario = config.scenario_path.empty() ? ScriptedScenario::reference()
                                                             : load_scenario(config.scenario_path);
    return std::make_shared<ScriptedGateway>(std::move(scenario));
}

json sets_json(const std::map<ScopeKey, RubricSet>& sets) {
    json arr = json::array();
    for (const auto& [scope, set] : sets) arr.push_back(set.to_json());
    return json{{"sets", arr}};
}

std::vector<RubricSet> load_sets(const std::string& path) {
    json doc = load_json(path);
    std::vector<RubricSet> sets;
    for (const auto& sj : doc.at("sets")) sets.push_back(RubricSet::from_json(sj));
    return sets;
}

std::vector<OpLogRecord> load_oplog(const std::string& path) {
    std::vector<OpLogRecord> records;
    for (const auto& line : read_jsonl(path)) records.push_back(OpLogRecord::from_json(line));
    return records;
}

std::vector<UpdateRecord> records_from_memory(const MemoryStore& memory, const ScopeKey& scope) {
    std::vector<UpdateRecord> records;
    for (const auto& doc : memory.documents(scope, std::nullopt, DocKind::update_record))
        records.push_back(UpdateRecord::from_content(doc.scope, doc.content));
    std::sort(records.begin(), records.end(),
              [](const UpdateRecord& a, const UpdateRecord& b) { return a.resulting_version < b.resulting_version; });
    return records;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, const json& overrides) {
    RunConfig config;
    try {
        json doc = config_path.empty() ? json::object() : load_json(config_path);
        for (const auto& [k, v] : overrides.items()) doc[k] = v;
        config = RunConfig::from_json(doc);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }

    try {
        fs::create_directories(out_dir);
        auto gateway = make_gateway(config);
        auto embedder = std::make_shared<FeatureHashEmbedder>(256);
        fs::path memory_path = fs::path(out_dir) / "memory.jsonl";
        fs::remove(memory_path);
        MemoryStore memory(memory_path.string(), embedder);
        std::vector<SyntheticTask> tasks =
            config.tasks_path.empty() ? builtin_tasks() : load_tasks(config.tasks_path);

        RunResult result = run_training_loop(config, *gateway, memory, tasks);

        write_text(fs::path(out_dir) / "config.json", config.to_json().dump(2) + "\n");
        result.write_runlog((fs::path(out_dir) / "runlog.jsonl").string());
        result.write_oplog((fs::path(out_dir) / "oplog.jsonl").string());
        write_text(fs::path(out_dir) / "initial_rubrics.json", sets_json(result.initial_sets).dump(2) + "\n");
        write_text(fs::path(out_dir) / "final_rubrics.json", sets_json(result.final_sets).dump(2) + "\n");

        long committed = 0, failed = 0, skipped = 0;
        for (const auto& job : result.jobs) {
            if (job.state == JobState::committed) ++committed;
            if (job.state == JobState::failed) ++failed;
            if (job.state == JobState::skipped) ++skipped;
        }
        std::cout << "run complete: " << config.total_steps << " steps, " << result.records.size()
                  << " update records, " << memory.size() << " memory documents\n"
                  << "jobs: " << committed << " committed, " << skipped << " update-skipped, " << failed
                  << " failed\n"
                  << "artifacts in " << out_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "run aborted: " << e.what() << "\n";
        return 2;
    }
}

int cmd_report(const std::string& runlog_path, const std::string& memory_path, const std::string& table,
               const std::string& out_dir, const std::string& format, const std::string& scenario_path) {
    try {
        fs::create_directories(out_dir);
        auto embedder = std::make_shared<FeatureHashEmbedder>(256);

        auto emit = [&](const ReportTable& t, const std::string& name) {
            std::string body = format == "csv" ? render_csv(t) : format == "svg" ? render_svg(t) : render_markdown(t);
            std::string ext = format == "md" ? "md" : format;
            write_text(fs::path(out_dir) / (name + "." + ext), body);
            std::cout << "wrote " << (fs::path(out_dir) / (name + "." + ext)).string() << "\n";
        };

        const fs::path artifacts = fs::path(runlog_path).parent_path();
        const bool all = table.empty();

        std::unique_ptr<MemoryStore> memory;
        if (!memory_path.empty()) {
            memory = std::make_unique<MemoryStore>(embedder);
            memory->import_memory(memory_path);
        }

        std::vector<UpdateRecord> records;
        int max_step = 0;
        if (memory) {
            for (const auto& doc : memory->all_documents()) {
                max_step = std::max(max_step, doc.step);
                if (doc.kind == DocKind::update_record)
                    records.push_back(UpdateRecord::from_content(doc.scope, doc.content));
            }
        }

        if (all || table == "modes") {
            if (records.empty()) throw Error("invalid_argument", "modes table needs a memory file with records");
            emit(to_table(mode_distribution(records, PhasePartition::equal(max_step))), "modes");
        }
        if (all || table == "ops" || table == "reversals") {
            fs::path oplog = artifacts / "oplog.jsonl";
            if (!fs::exists(oplog)) throw Error("io_error", "no oplog.jsonl next to the run log");
            auto op_records = load_oplog(oplog.string());
            if (all || table == "ops") {
                long n_updates = static_cast<long>(records.size());
                ReportTable t = to_table(edit_op_distribution(op_records));
                if (n_updates > 0)
                    t.title += " (" + std::to_string(op_records.size()) + " ops over " +
                               std::to_string(n_updates) + " updates)";
                emit(t, "ops");
            }
            if (all || table == "reversals") emit(to_table(detect_reversals(op_records)), "reversals");
        }
        if (all || table == "composition") {
            fs::path initial = artifacts / "initial_rubrics.json";
            fs::path oplog = artifacts / "oplog.jsonl";
            if (!fs::exists(initial) || !fs::exists(oplog))
                throw Error("io_error", "composition needs initial_rubrics.json and oplog.jsonl");
            auto runlog = read_jsonl(runlog_path);
            auto op_records = load_oplog(oplog.string());
            std::vector<std::pair<int, RubricSet>> snapshots;
            for (const auto& set : load_sets(initial.string())) {
                if (set.scope.kind != ScopeKey::Kind::global) continue;
                // reconstruct the per-step active set from the scored versions
                int final_version = set.version;
                for (const auto& r : op_records)
                    if (r.payload.contains("resulting_version"))
                        final_version = std::max(final_version, r.payload.at("resulting_version").get<int>());
                auto chain = replay_chain(set, op_records, final_version);
                for (const auto& entry : runlog) {
                    if (entry.at("scope").get<std::string>() != set.scope.str()) continue;
                    int v = entry.at("scored_version").get<int>();
                    int step = entry.at("step").get<int>();
                    if (v == set.version) snapshots.push_back({step, set});
                    else if (v - set.version - 1 < static_cast<int>(chain.size()))
                        snapshots.push_back({step, chain[static_cast<size_t>(v - set.version - 1)]});
                }
            }
            if (snapshots.empty()) throw Error("invalid_argument", "no global-scope snapshots to report");
            int total = 0;
            for (const auto& [step, _] : snapshots) total = std::max(total, step);
            emit(to_table(composition_report(snapshots, PhasePartition::equal(total))), "composition");
        }
        if (all || table == "latency") {
            auto runlog = read_jsonl(runlog_path);
            try {
                emit(to_table(latency_report(runlog)), "latency");
            } catch (const Error& e) {
                if (!all) throw;
                std::cout << "latency table skipped: " << e.what() << "\n";
            }
        }
        if (table == "quality") {
            fs::path initial = artifacts / "initial_rubrics.json";
            fs::path final_sets = artifacts / "final_rubrics.json";
            if (!fs::exists(initial) || !fs::exists(final_sets))
                throw Error("io_error", "quality needs initial_rubrics.json and final_rubrics.json");
            std::vector<RubricSet> candidates;
            for (const auto& s : load_sets(initial.string()))
                if (s.scope.kind == ScopeKey::Kind::global) candidates.push_back(s);
            for (const auto& s : load_sets(final_sets.string()))
                if (s.scope.kind == ScopeKey::Kind::global) candidates.push_back(s);
            if (candidates.size() < 2) throw Error("invalid_argument", "need initial and final global sets");
            ScriptedScenario scenario =
                scenario_path.empty() ? ScriptedScenario::reference() : load_scenario(scenario_path);
            ScriptedGateway gateway(std::move(scenario));
            Rng rng(17);
            PreferenceTally tally = preference_tally("training-run rubric sets", candidates, gateway, rng, 100);
            emit(to_table(tally, {"initial", "final"}), "quality");
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "report failed: " << e.what() << "\n";
        return 2;
    }
}

int cmd_inspect_memory(const std::string& memory_path, const std::string& scope_filter, int step_filter,
                       const std::string& kind_filter, const std::string& query, int top_d, bool as_jsonl) {
    try {
        auto embedder = std::make_shared<FeatureHashEmbedder>(256);
        MemoryStore memory(embedder);
        memory.import_memory(memory_path);

        std::optional<ScopeKey> scope;
        if (scope_filter == "global") scope = ScopeKey::global();
        else if (!scope_filter.empty()) {
            ScopeKey k;
            k.kind = ScopeKey::Kind::per_instance;
            k.instance_key = scope_filter;
            scope = k;
        }
        std::optional<int> step;
        if (step_filter >= 0) step = step_filter;
        std::optional<DocKind> kind;
        if (!kind_filter.empty()) kind = doc_kind_from_string(kind_filter);

        if (!query.empty()) {
            ScopeKey q_scope = scope.value_or(ScopeKey::global());
            for (const auto& hit : memory.retrieve_semantic(q_scope, {query, "other"}, top_d)) {
                if (step && hit.doc.step != *step) continue;
                if (kind && hit.doc.kind != *kind) continue;
                if (as_jsonl) std::cout << hit.doc.to_json().dump() << "\n";
                else
                    std::cout << hit.doc.doc_id << "  sim=" << hit.similarity << "\n"
                              << hit.doc.text_rendering << "\n";
            }
            return 0;
        }
        size_t n = 0;
        for (const auto& doc : memory.documents(scope, step, kind)) {
            ++n;
            if (as_jsonl) std::cout << doc.to_json().dump() << "\n";
            else std::cout << doc.doc_id << "\n" << doc.text_rendering << "\n";
        }
        if (!as_jsonl) std::cout << n << " documents\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "inspect failed: " << e.what() << "\n";
        return 2;
    }
}

int cmd_export(const std::string& memory_path, const std::string& out_path, const std::string& scope_filter) {
    try {
        auto embedder = std::make_shared<FeatureHashEmbedder>(256);
        MemoryStore memory(embedder);
        memory.import_memory(memory_path);
        std::optional<ScopeKey> scope;
        if (scope_filter == "global") scope = ScopeKey::global();
        else if (!scope_filter.empty()) {
            ScopeKey k;
            k.kind = ScopeKey::Kind::per_instance;
            k.instance_key = scope_filter;
            scope = k;
        }
        size_t n = memory.export_memory(scope, out_path);
        std::cout << "exported " << n << " documents to " << out_path << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "export failed: " << e.what() << "\n";
        return 2;
    }
}

int cmd_replay(const std::string& artifacts_dir) {
    try {
        fs::path dir(artifacts_dir);
        auto initial_sets = load_sets((dir / "initial_rubrics.json").string());
        auto final_sets = load_sets((dir / "final_rubrics.json").string());
        auto op_records = load_oplog((dir / "oplog.jsonl").string());

        auto embedder = std::make_shared<FeatureHashEmbedder>(256);
        MemoryStore memory(embedder);
        fs::path memory_path = dir / "memory.jsonl";
        if (fs::exists(memory_path)) memory.import_memory(memory_path.string());

        bool all_match = true;
        for (const auto& initial : initial_sets) {
            const RubricSet* final_set = nullptr;
            for (const auto& f : final_sets)
                if (f.scope == initial.scope) final_set = &f;
            if (!final_set) throw Error("corrupt_log", "no final set for scope " + initial.scope.str());

            // per-instance op logs are not split by scope in the artifact
            // layout; global runs replay the whole log
            std::vector<UpdateRecord> records = records_from_memory(memory, initial.scope);
            std::vector<OpLogRecord> scope_ops;
            if (initial.scope.kind == ScopeKey::Kind::global && initial_sets.size() == 1) {
                scope_ops = op_records;
            } else {
                for (const auto& rec : records)
                    for (const auto& line : OpLogEntry{rec.step, rec.strategy, rec.resulting_version, rec.ops}
                                                .to_jsonl())
                        scope_ops.push_back(OpLogRecord::from_json(line));
            }

            ReplayReport report = replay_verify(initial, scope_ops, records, *final_set);
            std::cout << initial.scope.str() << ": " << report.message << "\n";
            if (!report.match) all_match = false;
        }
        return all_match ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "replay failed: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AMARIS: memory-augmented rubric improvement engine"};
    app.require_subcommand(1);

    // run
    std::string config_path, out_dir = "out";
    std::string backend, scenario, scope;
    int steps = -1;
    long long seed = -1;
    auto* run = app.add_subcommand("run", "execute a training run with the rubric-improvement loop");
    run->add_option("--config", config_path, "run configuration JSON");
    run->add_option("--out", out_dir, "artifact output directory");
    run->add_option("--seed", seed, "RNG seed override");
    run->add_option("--backend", backend, "scripted|http")->check(CLI::IsMember({"scripted", "http"}));
    run->add_option("--scenario", scenario, "scripted scenario file");
    run->add_option("--steps", steps, "total training steps override");
    run->add_option("--scope", scope, "global|per-instance")->check(CLI::IsMember({"global", "per-instance"}));

    // report
    std::string runlog_path, memory_path, table, report_out = "reports", format = "md", report_scenario;
    auto* report = app.add_subcommand("report", "emit analytics tables from run artifacts");
    report->add_option("--runlog", runlog_path, "run log JSONL")->required();
    report->add_option("--memory", memory_path, "memory JSONL");
    report->add_option("--table", table, "modes|ops|reversals|composition|latency|quality")
        ->check(CLI::IsMember({"modes", "ops", "reversals", "composition", "latency", "quality"}));
    report->add_option("--out", report_out, "report output directory");
    report->add_option("--format", format, "md|csv|svg")->check(CLI::IsMember({"md", "csv", "svg"}));
    report->add_option("--scenario", report_scenario, "scripted judge scenario for the quality table");

    // inspect-memory
    std::string im_memory, im_scope, im_kind, im_query;
    int im_step = -1, im_top = 3;
    bool im_jsonl = false;
    auto* inspect = app.add_subcommand("inspect-memory", "filter and search a memory file");
    inspect->add_option("--memory", im_memory, "memory JSONL")->required();
    inspect->add_option("--scope", im_scope, "global or an instance key");
    inspect->add_option("--step", im_step, "step filter");
    inspect->add_option("--kind", im_kind, "analysis|chunk_summary|step_summary|update_record");
    inspect->add_option("--query", im_query, "semantic query over the store");
    inspect->add_option("--top", im_top, "documents to return for a query");
    inspect->add_flag("--jsonl", im_jsonl, "emit raw JSONL instead of pretty text");

    // export
    std::string ex_memory, ex_out, ex_scope;
    auto* exp = app.add_subcommand("export", "export memory documents to a JSONL file");
    exp->add_option("--memory", ex_memory, "memory JSONL")->required();
    exp->add_option("--out", ex_out, "output file")->required();
    exp->add_option("--scope", ex_scope, "scope filter");

    // replay
    std::string replay_dir;
    auto* replay = app.add_subcommand("replay", "rebuild the rubric version chain and verify it");
    replay->add_option("--artifacts", replay_dir, "run artifact directory")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        json overrides = json::object();
        if (seed >= 0) overrides["seed"] = seed;
        if (!backend.empty()) overrides["backend"] = backend;
        if (!scenario.empty()) overrides["scenario"] = scenario;
        if (steps > 0) overrides["total_steps"] = steps;
        if (!scope.empty()) overrides["scope"] = scope == "per-instance" ? "per_instance" : scope;
        return cmd_run(config_path, out_dir, overrides);
    }
    if (report->parsed())
        return cmd_report(runlog_path, memory_path, table, report_out, format, report_scenario);
    if (inspect->parsed())
        return cmd_inspect_memory(im_memory, im_scope, im_step, im_kind, im_query, im_top, im_jsonl);
    if (exp->parsed()) return cmd_export(ex_memory, ex_out, ex_scope);
    if (replay->parsed()) return cmd_replay(replay_dir);
    return 1;
}
