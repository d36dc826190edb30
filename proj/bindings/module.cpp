#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>
#include <memory>

#include "amaris/analytics.hpp"
#include "amaris/harness.hpp"
#include "amaris/judge.hpp"
#include "amaris/memory.hpp"
#include "amaris/pipeline.hpp"
#include "amaris/scheduler.hpp"
#include "amaris/updater.hpp"

namespace py = pybind11;
using namespace amaris;

namespace {

py::object json_to_py(const json& j) {
    switch (j.type()) {
        case json::value_t::null: return py::none();
        case json::value_t::boolean: return py::bool_(j.get<bool>());
        case json::value_t::number_integer: return py::int_(j.get<long long>());
        case json::value_t::number_unsigned: return py::int_(j.get<unsigned long long>());
        case json::value_t::number_float: return py::float_(j.get<double>());
        case json::value_t::string: return py::str(j.get<std::string>());
        case json::value_t::array: {
            py::list out;
            for (const auto& e : j) out.append(json_to_py(e));
            return out;
        }
        case json::value_t::object: {
            py::dict out;
            for (const auto& [k, v] : j.items()) out[py::str(k)] = json_to_py(v);
            return out;
        }
        default: return py::none();
    }
}

json py_to_json(const py::handle& obj) {
    if (obj.is_none()) return nullptr;
    if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
    if (py::isinstance<py::int_>(obj)) return obj.cast<long long>();
    if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
    if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
    if (py::isinstance<py::dict>(obj)) {
        json out = json::object();
        for (auto item : obj.cast<py::dict>()) out[item.first.cast<std::string>()] = py_to_json(item.second);
        return out;
    }
    if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
        json out = json::array();
        for (auto item : obj.cast<py::sequence>()) out.push_back(py_to_json(item));
        return out;
    }
    throw py::type_error("value is not JSON-representable");
}

ScopeKey scope_from_py(const py::object& scope) {
    if (scope.is_none()) return ScopeKey::global();
    if (py::isinstance<py::str>(scope)) {
        std::string s = scope.cast<std::string>();
        if (s == "global") return ScopeKey::global();
        ScopeKey k;
        k.kind = ScopeKey::Kind::per_instance;
        k.instance_key = s;
        return k;
    }
    return ScopeKey::from_json(py_to_json(scope));
}

py::dict doc_to_py(const MemoryDocument& d) {
    return json_to_py(d.to_json()).cast<py::dict>();
}

}  // namespace

PYBIND11_MODULE(_amaris, m) {
    m.doc() = "Memory-augmented rubric improvement engine";

    py::register_exception<Error>(m, "AmarisError");

    // rubric core ---------------------------------------------------------
    m.def("validate_set", [](const py::dict& set) {
        py::list out;
        for (const auto& v : validate_set(RubricSet::from_json(py_to_json(set)))) {
            py::dict d;
            d["rubric_id"] = v.rubric_id;
            d["rule"] = v.rule;
            out.append(d);
        }
        return out;
    }, py::arg("rubric_set"), "Check all rubric-set invariants; returns the violations (empty means valid).");

    m.def("apply_operation", [](const py::dict& set, const py::dict& op) {
        return json_to_py(apply_operation(RubricSet::from_json(py_to_json(set)), EditOp::from_json(py_to_json(op)))
                              .to_json());
    }, py::arg("rubric_set"), py::arg("op"));

    m.def("apply_update", [](const py::dict& set, const py::list& ops, int step, const std::string& strategy) {
        std::vector<EditOp> edit_ops;
        for (auto op : ops) edit_ops.push_back(EditOp::from_json(py_to_json(op)));
        auto [next, entry] = apply_update(RubricSet::from_json(py_to_json(set)), edit_ops, step,
                                          strategy_from_string(strategy));
        py::list lines;
        for (const auto& line : entry.to_jsonl()) lines.append(json_to_py(line));
        return py::make_tuple(json_to_py(next.to_json()), lines);
    }, py::arg("rubric_set"), py::arg("ops"), py::arg("step") = 0, py::arg("strategy") = "maintenance");

    m.def("weighted_reward", [](const py::dict& scores, const py::dict& set) {
        std::map<std::string, double> s;
        for (auto item : scores) s[item.first.cast<std::string>()] = item.second.cast<double>();
        return json_to_py(weighted_reward(s, RubricSet::from_json(py_to_json(set))).to_json());
    }, py::arg("scores"), py::arg("rubric_set"));

    // judge gateway -------------------------------------------------------
    py::class_<JudgeGateway, std::shared_ptr<JudgeGateway>>(m, "JudgeGateway")
        .def("invoke", [](JudgeGateway& g, const std::string& role, const py::dict& payload) {
            return json_to_py(g.invoke(judge_role_from_string(role), py_to_json(payload)));
        }, py::arg("role"), py::arg("payload"))
        .def("calls", [](const JudgeGateway& g, const std::string& role) {
            return g.calls(judge_role_from_string(role));
        });

    py::class_<ScriptedGateway, JudgeGateway, std::shared_ptr<ScriptedGateway>>(m, "ScriptedGateway")
        .def(py::init([](const py::object& scenario) {
            if (scenario.is_none()) return std::make_shared<ScriptedGateway>(ScriptedScenario::reference());
            if (py::isinstance<py::str>(scenario))
                return std::make_shared<ScriptedGateway>(load_scenario(scenario.cast<std::string>()));
            return std::make_shared<ScriptedGateway>(parse_scenario(py_to_json(scenario)));
        }), py::arg("scenario") = py::none(),
        "Deterministic judge backend; pass None for the built-in reference scenario, a path, or a dict.");

    m.def("parse_stage_output", [](const std::string& role, const std::string& raw) {
        return json_to_py(parse_stage_output(judge_role_from_string(role), raw));
    }, py::arg("role"), py::arg("raw"));

    m.def("render_prompt", [](const std::string& role, const py::dict& bindings) {
        std::map<std::string, std::string> b;
        for (auto item : bindings) b[item.first.cast<std::string>()] = item.second.cast<std::string>();
        return render_prompt(default_template(judge_role_from_string(role)), b);
    }, py::arg("role"), py::arg("bindings"));

    // pipeline ------------------------------------------------------------
    m.def("score_rollout", [](const py::dict& rollout, const py::dict& set, JudgeGateway& gateway) {
        return json_to_py(
            score_rollout(Rollout::from_json(py_to_json(rollout)), RubricSet::from_json(py_to_json(set)), gateway)
                .to_json());
    }, py::arg("rollout"), py::arg("rubric_set"), py::arg("gateway"));

    m.def("analyze_rollout", [](const py::dict& rollout, const py::dict& set, JudgeGateway& gateway) {
        return json_to_py(
            analyze_rollout(Rollout::from_json(py_to_json(rollout)), RubricSet::from_json(py_to_json(set)), gateway)
                .to_content());
    }, py::arg("rollout"), py::arg("rubric_set"), py::arg("gateway"));

    m.def("summarize_step", [](const py::list& analyses, JudgeGateway& gateway, int chunk_size,
                               const py::object& scope, int step) {
        std::vector<RolloutAnalysis> parsed;
        for (auto a : analyses) {
            json content = py_to_json(a);
            std::string rollout_id = content.value("rollout_id", "");
            content.erase("rollout_id");
            parsed.push_back({rollout_id, std::move(content)});
        }
        auto [summary, chunks] = summarize_step(parsed, gateway, chunk_size, scope_from_py(scope), step);
        py::list chunk_list;
        for (const auto& c : chunks) chunk_list.append(json_to_py(c.to_content()));
        return py::make_tuple(json_to_py(summary.to_content()), chunk_list);
    }, py::arg("analyses"), py::arg("gateway"), py::arg("chunk_size"), py::arg("scope") = py::none(),
       py::arg("step") = 1);

    // memory --------------------------------------------------------------
    py::class_<MemoryStore>(m, "MemoryStore")
        .def(py::init([](const py::object& path, size_t dim) {
            auto embedder = std::make_shared<FeatureHashEmbedder>(dim);
            if (path.is_none()) return std::make_unique<MemoryStore>(embedder);
            return std::make_unique<MemoryStore>(path.cast<std::string>(), embedder);
        }), py::arg("path") = py::none(), py::arg("dimension") = 256)
        .def("commit_step", [](MemoryStore& store, const py::object& scope, int step, const py::list& analyses,
                               const py::list& chunks, const py::dict& summary, const py::object& record) {
            std::vector<json> a, c;
            for (auto x : analyses) a.push_back(py_to_json(x));
            for (auto x : chunks) c.push_back(py_to_json(x));
            std::optional<json> r;
            if (!record.is_none()) r = py_to_json(record);
            return store.commit_step(scope_from_py(scope), step, a, c, py_to_json(summary), r);
        }, py::arg("scope"), py::arg("step"), py::arg("analyses"), py::arg("chunk_summaries"),
           py::arg("step_summary"), py::arg("update_record") = py::none())
        .def("retrieve_static", [](const MemoryStore& store, const py::object& scope, int t, int window) {
            py::list out;
            for (const auto& d : store.retrieve_static(scope_from_py(scope), t, window)) out.append(doc_to_py(d));
            return out;
        }, py::arg("scope"), py::arg("t"), py::arg("window"))
        .def("retrieve_semantic", [](const MemoryStore& store, const py::object& scope, const std::string& query,
                                     int top_d) {
            py::list out;
            for (const auto& hit : store.retrieve_semantic(scope_from_py(scope), {query, "other"}, top_d)) {
                py::dict d = doc_to_py(hit.doc);
                d["similarity"] = hit.similarity;
                out.append(d);
            }
            return out;
        }, py::arg("scope"), py::arg("query"), py::arg("top_d") = 3)
        .def("embed", [](const MemoryStore& store, const std::string& text) { return store.embedder().embed(text); })
        .def("export_memory", [](const MemoryStore& store, const std::string& path) {
            return store.export_memory(std::nullopt, path);
        }, py::arg("path"))
        .def("import_memory", [](MemoryStore& store, const std::string& path) {
            auto r = store.import_memory(path);
            py::dict d;
            d["count"] = r.count;
            d["reembedded"] = r.reembedded;
            return d;
        }, py::arg("path"))
        .def("size", &MemoryStore::size);

    // updater -------------------------------------------------------------
    m.def("run_update_cycle", [](const py::object& scope, int step, const py::dict& set, const py::dict& summary,
                                 const MemoryStore& memory, JudgeGateway& gateway, int n, int k, int d) {
        ScopeKey sk = scope_from_py(scope);
        BatchSummary bs = BatchSummary::from_content(sk, py_to_json(summary));
        bs.step = step;
        auto result = run_update_cycle(sk, step, RubricSet::from_json(py_to_json(set)), bs, memory, gateway, n, k, d);
        py::dict out;
        out["rubric_set"] = json_to_py(result.set.to_json());
        out["update_record"] = json_to_py(result.record.to_content());
        py::list lines;
        for (const auto& line : result.oplog.to_jsonl()) lines.append(json_to_py(line));
        out["oplog"] = lines;
        return out;
    }, py::arg("scope"), py::arg("step"), py::arg("rubric_set"), py::arg("summary"), py::arg("memory"),
       py::arg("gateway"), py::arg("static_n") = 4, py::arg("dynamic_k") = 10, py::arg("docs_per_query_d") = 3);

    // harness / scheduler ---------------------------------------------------
    m.def("builtin_tasks", [] {
        py::list out;
        for (const auto& t : builtin_tasks()) out.append(json_to_py(t.to_json()));
        return out;
    });

    m.def("generate_batch", [](const py::dict& profile, int step, int batch_size, int samples_per_query,
                               const std::string& scope_kind) {
        auto tasks = builtin_tasks();
        auto batch = generate_batch(BehaviorProfile::from_json(py_to_json(profile)), tasks, step, batch_size,
                                    samples_per_query,
                                    scope_kind == "global" ? ScopeKey::Kind::global : ScopeKey::Kind::per_instance);
        py::list out;
        for (const auto& r : batch) out.append(json_to_py(r.to_json()));
        return out;
    }, py::arg("profile"), py::arg("step"), py::arg("batch_size"), py::arg("samples_per_query") = 4,
       py::arg("scope_kind") = "global");

    m.def("run", [](const py::dict& config, const py::object& out_dir) {
        RunConfig cfg = RunConfig::from_json(py_to_json(config));
        if (cfg.backend != "scripted")
            throw Error("invalid_config", "the python entry point drives the scripted backend");
        ScriptedScenario scenario =
            cfg.scenario_path.empty() ? ScriptedScenario::reference() : load_scenario(cfg.scenario_path);
        ScriptedGateway gateway(std::move(scenario));
        std::unique_ptr<MemoryStore> memory;
        auto embedder = std::make_shared<FeatureHashEmbedder>(256);
        std::string memory_path;
        if (!out_dir.is_none()) {
            std::filesystem::create_directories(out_dir.cast<std::string>());
            memory_path = (std::filesystem::path(out_dir.cast<std::string>()) / "memory.jsonl").string();
            std::filesystem::remove(memory_path);
            memory = std::make_unique<MemoryStore>(memory_path, embedder);
        } else {
            memory = std::make_unique<MemoryStore>(embedder);
        }
        auto tasks = cfg.tasks_path.empty() ? builtin_tasks() : load_tasks(cfg.tasks_path);
        RunResult result = run_training_loop(cfg, gateway, *memory, tasks);

        py::dict out;
        py::list log;
        for (const auto& e : result.log) log.append(json_to_py(e.to_json(result.profiling)));
        out["log"] = log;
        py::list finals;
        for (const auto& [scope, set] : result.final_sets) finals.append(json_to_py(set.to_json()));
        out["final_sets"] = finals;
        py::list records;
        for (const auto& r : result.records) records.append(json_to_py(r.to_content()));
        out["update_records"] = records;
        py::list oplog;
        for (const auto& line : result.oplog_lines) oplog.append(json_to_py(line));
        out["oplog"] = oplog;
        out["memory_documents"] = memory->size();
        if (!out_dir.is_none()) {
            auto dir = std::filesystem::path(out_dir.cast<std::string>());
            result.write_runlog((dir / "runlog.jsonl").string());
            result.write_oplog((dir / "oplog.jsonl").string());
            json initial{{"sets", json::array()}}, final_sets{{"sets", json::array()}};
            for (const auto& [scope, set] : result.initial_sets) initial["sets"].push_back(set.to_json());
            for (const auto& [scope, set] : result.final_sets) final_sets["sets"].push_back(set.to_json());
            std::ofstream(dir / "initial_rubrics.json") << initial.dump(2) << "\n";
            std::ofstream(dir / "final_rubrics.json") << final_sets.dump(2) << "\n";
            out["out_dir"] = out_dir;
        }
        return out;
    }, py::arg("config") = py::dict(), py::arg("out_dir") = py::none(),
       "Run the scripted training loop; optionally write run artifacts to out_dir.");

    // analytics -------------------------------------------------------------
    m.def("detect_reversals", [](const py::list& oplog, int window, double threshold) {
        std::vector<OpLogRecord> records;
        for (auto line : oplog) records.push_back(OpLogRecord::from_json(py_to_json(line)));
        py::list out;
        for (const auto& e : detect_reversals(records, window, threshold)) {
            py::dict d;
            d["rubric_id"] = e.rubric_id;
            d["first_step"] = e.first_step;
            d["first_kind"] = to_string(e.first_kind);
            d["first_delta"] = e.first_delta;
            d["reversing_step"] = e.reversing_step;
            d["reversing_kind"] = to_string(e.reversing_kind);
            d["gap"] = e.gap;
            out.append(d);
        }
        return out;
    }, py::arg("oplog"), py::arg("window") = 8, py::arg("threshold") = 0.5);

    m.def("edit_op_distribution", [](const py::list& oplog) {
        std::vector<OpLogRecord> records;
        for (auto line : oplog) records.push_back(OpLogRecord::from_json(py_to_json(line)));
        OpDistribution d = edit_op_distribution(records);
        py::dict out;
        for (size_t i = 0; i < kOpKindOrder.size(); ++i) {
            py::dict row;
            row["count"] = d.counts[i];
            row["percent"] = d.percent(i);
            out[py::str(to_string(kOpKindOrder[i]))] = row;
        }
        out["total"] = d.total;
        return out;
    }, py::arg("oplog"));

    m.attr("__version__") = "0.1.0";
}
