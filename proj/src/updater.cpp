#include "amaris/updater.hpp"

#include <algorithm>
#include <chrono>

namespace amaris {

std::string to_string(EvidenceAttribution a) {
    switch (a) {
        case EvidenceAttribution::static_dominant: return "static_dominant";
        case EvidenceAttribution::dynamic_dominant: return "dynamic_dominant";
        case EvidenceAttribution::mixed: return "mixed";
        case EvidenceAttribution::none: return "none";
    }
    return "none";
}

EvidenceAttribution evidence_attribution_from_string(const std::string& s) {
    if (s == "static_dominant") return EvidenceAttribution::static_dominant;
    if (s == "dynamic_dominant") return EvidenceAttribution::dynamic_dominant;
    if (s == "mixed") return EvidenceAttribution::mixed;
    if (s == "none") return EvidenceAttribution::none;
    throw Error("bad_enum", "unknown evidence attribution '" + s + "'");
}

UpdateProposal UpdateProposal::from_stage_output(const json& output) {
    UpdateProposal p;
    p.strategy = strategy_from_string(output.at("strategy").get<std::string>());
    for (const auto& opj : output.at("ops")) p.ops.push_back(EditOp::from_json(opj));
    p.reasoning = output.at("reasoning").get<std::string>();
    if (output.contains("consulted_doc_ids"))
        p.consulted_doc_ids = output.at("consulted_doc_ids").get<std::vector<std::string>>();
    p.degraded = output.value("degraded", false);
    return p;
}

json UpdateRecord::to_content() const {
    json ops_json = json::array();
    for (const auto& a : ops) {
        json op = a.op.to_json();
        if (a.old_weight) op["old_weight"] = *a.old_weight;
        if (a.new_weight) op["new_weight"] = *a.new_weight;
        ops_json.push_back(std::move(op));
    }
    return json{{"step", step},
                {"strategy", to_string(strategy)},
                {"consulted_doc_ids", consulted_doc_ids},
                {"ops", ops_json},
                {"resulting_version", resulting_version},
                {"lesson_summary", lesson_summary},
                {"evidence_attribution", to_string(evidence_attribution)},
                {"context_truncated", context_truncated},
                {"degraded", degraded}};
}

UpdateRecord UpdateRecord::from_content(const ScopeKey& scope, const json& content) {
    UpdateRecord r;
    r.scope = scope;
    r.step = content.at("step").get<int>();
    r.strategy = strategy_from_string(content.at("strategy").get<std::string>());
    r.consulted_doc_ids = content.value("consulted_doc_ids", std::vector<std::string>{});
    for (const auto& opj : content.at("ops")) {
        AppliedOp a;
        a.op = EditOp::from_json(opj);
        if (opj.contains("old_weight") && !opj.at("old_weight").is_null())
            a.old_weight = opj.at("old_weight").get<double>();
        if (opj.contains("new_weight") && !opj.at("new_weight").is_null())
            a.new_weight = opj.at("new_weight").get<double>();
        r.ops.push_back(std::move(a));
    }
    r.resulting_version = content.at("resulting_version").get<int>();
    r.lesson_summary = content.value("lesson_summary", "");
    r.evidence_attribution =
        evidence_attribution_from_string(content.value("evidence_attribution", std::string("none")));
    r.context_truncated = content.value("context_truncated", false);
    r.degraded = content.value("degraded", false);
    return r;
}

EvidenceAttribution attribute_evidence(const std::vector<std::string>& consulted_ids,
                                       const RetrievalContext& context) {
    if (consulted_ids.empty()) return EvidenceAttribution::none;
    auto static_ids = context.static_ids();
    auto dynamic_ids = context.dynamic_ids();
    size_t from_static = 0, from_dynamic = 0;
    for (const auto& id : consulted_ids) {
        if (static_ids.count(id)) ++from_static;
        else if (dynamic_ids.count(id)) ++from_dynamic;
    }
    if (from_static == 0 && from_dynamic == 0) return EvidenceAttribution::none;
    if (from_static > from_dynamic) return EvidenceAttribution::static_dominant;
    if (from_dynamic > from_static) return EvidenceAttribution::dynamic_dominant;
    return EvidenceAttribution::mixed;
}

std::vector<RetrievalQuery> generate_queries(const BatchSummary& summary, JudgeGateway& gateway, int max_queries) {
    if (max_queries < 0) throw Error("invalid_argument", "negative query budget");
    if (max_queries == 0) return {};
    json payload{{"step", summary.step}, {"summary", summary.body}, {"max_queries", max_queries}};
    json out = gateway.invoke(JudgeRole::query_generator, payload);
    std::vector<RetrievalQuery> queries;
    for (const auto& q : out.at("queries")) {
        if (static_cast<int>(queries.size()) >= max_queries) break;
        queries.push_back({q.at("query_text").get<std::string>(), q.at("kind").get<std::string>()});
    }
    return queries;
}

namespace {

json doc_payload(const MemoryDocument& d) {
    return json{{"doc_id", d.doc_id}, {"step", d.step}, {"kind", to_string(d.kind)},
                {"text_rendering", d.text_rendering}};
}

// Full document bodies up to the character budget; the oldest documents
// are dropped first when over budget.
std::pair<json, bool> context_payload(const RetrievalContext& context, int char_budget) {
    struct Entry {
        const MemoryDocument* doc;
        bool is_static;
    };
    std::vector<Entry> entries;
    for (const auto& d : context.static_docs) entries.push_back({&d, true});
    for (const auto& d : context.dynamic_docs) entries.push_back({&d, false});

    size_t total = 0;
    for (const auto& e : entries) total += e.doc->text_rendering.size();
    bool truncated = false;
    while (total > static_cast<size_t>(char_budget) && !entries.empty()) {
        auto oldest = std::min_element(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
            if (a.doc->step != b.doc->step) return a.doc->step < b.doc->step;
            return a.doc->doc_id < b.doc->doc_id;
        });
        total -= oldest->doc->text_rendering.size();
        entries.erase(oldest);
        truncated = true;
    }

    json ctx{{"static", json::array()}, {"dynamic", json::array()}};
    for (const auto& e : entries) ctx[e.is_static ? "static" : "dynamic"].push_back(doc_payload(*e.doc));
    if (truncated) ctx["truncated"] = true;
    return {std::move(ctx), truncated};
}

std::string dry_run_violation(const RubricSet& set, const std::vector<EditOp>& ops) {
    try {
        apply_update(set, ops);
        return "";
    } catch (const Error& e) {
        return e.what();
    }
}

}  // namespace

UpdateProposal propose_update(const RubricSet& set, const BatchSummary& summary, const RetrievalContext& context,
                              JudgeGateway& gateway, const UpdaterOptions& options) {
    auto violations = validate_set(set);
    if (!violations.empty()) throw Error("invalid_set", "propose_update requires a valid rubric set");

    auto [ctx_json, truncated] = context_payload(context, options.context_char_budget);
    json payload{{"step", summary.step},
                 {"rubrics", set.to_json().at("rubrics")},
                 {"summary", summary.body},
                 {"context", ctx_json}};

    UpdateProposal proposal = UpdateProposal::from_stage_output(gateway.invoke(JudgeRole::updater, payload));
    std::string violation = dry_run_violation(set, proposal.ops);
    if (violation.empty()) return proposal;

    // one corrective re-prompt with the violation appended, then degrade
    json retry_payload = payload;
    retry_payload["violation"] = violation;
    UpdateProposal retried = UpdateProposal::from_stage_output(gateway.invoke(JudgeRole::updater, retry_payload));
    if (dry_run_violation(set, retried.ops).empty()) return retried;

    UpdateProposal fallback;
    fallback.strategy = UpdateStrategy::maintenance;
    fallback.reasoning = "proposal rejected twice (" + violation + "); holding rubric set stable";
    fallback.degraded = true;
    return fallback;
}

UpdateCycleResult run_update_cycle(const ScopeKey& scope, int step, const RubricSet& set,
                                   const BatchSummary& summary, const MemoryStore& memory, JudgeGateway& gateway,
                                   int static_window, int max_queries, int docs_per_query,
                                   const UpdaterOptions& options, CycleProfile* profile) {
    if (!(summary.scope == scope) || summary.step != step)
        throw Error("invalid_argument", "summary does not belong to this scope and step");

    using SteadyClock = std::chrono::steady_clock;
    auto elapsed_ms = [](SteadyClock::time_point t0) {
        return std::chrono::duration<double, std::milli>(SteadyClock::now() - t0).count();
    };

    auto t0 = SteadyClock::now();
    std::vector<RetrievalQuery> queries = generate_queries(summary, gateway, max_queries);
    if (profile) profile->query_ms = elapsed_ms(t0);

    t0 = SteadyClock::now();
    RetrievalContext context =
        memory.retrieve_context(scope, step, static_window, queries, std::max(docs_per_query, 1));
    if (profile) profile->retrieval_ms = elapsed_ms(t0);

    t0 = SteadyClock::now();
    UpdateProposal proposal = propose_update(set, summary, context, gateway, options);
    auto [next_set, oplog] = apply_update(set, proposal.ops, step, proposal.strategy);
    if (profile) profile->update_ms = elapsed_ms(t0);

    UpdateCycleResult result;
    result.set = std::move(next_set);
    result.oplog = std::move(oplog);
    result.context = context;

    UpdateRecord& record = result.record;
    record.scope = scope;
    record.step = step;
    record.strategy = proposal.strategy;
    record.ops = result.oplog.ops;
    record.resulting_version = result.set.version;
    record.lesson_summary = proposal.reasoning;
    record.degraded = proposal.degraded;

    // consulted ids default to everything retrieved unless the proposal
    // names a subset; ids outside the context are dropped
    std::set<std::string> context_ids;
    for (const auto& d : context.union_view()) context_ids.insert(d.doc_id);
    if (proposal.consulted_doc_ids.empty()) {
        record.consulted_doc_ids.assign(context_ids.begin(), context_ids.end());
    } else {
        for (const auto& id : proposal.consulted_doc_ids)
            if (context_ids.count(id)) record.consulted_doc_ids.push_back(id);
    }
    record.evidence_attribution = attribute_evidence(record.consulted_doc_ids, context);

    auto [ctx_json, truncated] = context_payload(context, options.context_char_budget);
    (void)ctx_json;
    record.context_truncated = truncated;
    return result;
}

}  // namespace amaris
