#pragma once

#include <optional>
#include <string>
#include <vector>

#include "amaris/judge.hpp"
#include "amaris/memory.hpp"
#include "amaris/pipeline.hpp"
#include "amaris/rubric.hpp"

namespace amaris {

/// Parsed updater output: strategy, ordered edits, and reasoning that
/// summarizes what history was consulted and what lessons to retain.
struct UpdateProposal {
    UpdateStrategy strategy = UpdateStrategy::maintenance;
    std::vector<EditOp> ops;
    std::string reasoning;
    std::vector<std::string> consulted_doc_ids;  // optional subset of context ids
    bool degraded = false;                       // judge fallback or rejected proposal

    static UpdateProposal from_stage_output(const json& output);
};

enum class EvidenceAttribution { static_dominant, dynamic_dominant, mixed, none };

std::string to_string(EvidenceAttribution a);
EvidenceAttribution evidence_attribution_from_string(const std::string& s);

/// Persisted artifact of one update cycle.
struct UpdateRecord {
    ScopeKey scope;
    int step = 0;
    UpdateStrategy strategy = UpdateStrategy::maintenance;
    std::vector<std::string> consulted_doc_ids;
    std::vector<AppliedOp> ops;
    int resulting_version = 0;
    std::string lesson_summary;
    EvidenceAttribution evidence_attribution = EvidenceAttribution::none;
    bool context_truncated = false;
    bool degraded = false;

    json to_content() const;
    static UpdateRecord from_content(const ScopeKey& scope, const json& content);
};

/// Dominant retrieval channel among the consulted ids: majority wins,
/// ties are mixed, no consulted history is none.
EvidenceAttribution attribute_evidence(const std::vector<std::string>& consulted_ids,
                                       const RetrievalContext& context);

/// Generates at most K targeted retrieval queries from the step summary.
/// K = 0 returns empty without a judge call.
std::vector<RetrievalQuery> generate_queries(const BatchSummary& summary, JudgeGateway& gateway, int max_queries);

struct UpdaterOptions {
    int context_char_budget = 20000;  // full doc bodies up to this budget, oldest dropped first
};

/// Asks the updater judge for a strategy and ops, validating every op
/// against `set` (targets exist, anchors protected). A violating proposal
/// gets exactly one corrective re-prompt before degrading to maintenance.
UpdateProposal propose_update(const RubricSet& set, const BatchSummary& summary, const RetrievalContext& context,
                              JudgeGateway& gateway, const UpdaterOptions& options = {});

struct UpdateCycleResult {
    RubricSet set;
    UpdateRecord record;
    OpLogEntry oplog;
    RetrievalContext context;
};

/// Wall-clock split of one cycle, for latency profiling.
struct CycleProfile {
    double query_ms = 0.0;
    double retrieval_ms = 0.0;
    double update_ms = 0.0;
};

/// The full memory-augmented cycle: generate_queries -> retrieve_context ->
/// propose_update -> apply_update -> build the UpdateRecord. The caller
/// commits the step's artifacts (including the record) via commit_step.
UpdateCycleResult run_update_cycle(const ScopeKey& scope, int step, const RubricSet& set,
                                   const BatchSummary& summary, const MemoryStore& memory, JudgeGateway& gateway,
                                   int static_window, int max_queries, int docs_per_query,
                                   const UpdaterOptions& options = {}, CycleProfile* profile = nullptr);

}  // namespace amaris
