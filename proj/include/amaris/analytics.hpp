#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "amaris/judge.hpp"
#include "amaris/rubric.hpp"
#include "amaris/updater.hpp"

namespace amaris {

/// Contiguous, equal-sized (+-1) phases covering [1, total_steps].
struct PhasePartition {
    int total_steps = 0;
    int n_phases = 5;

    static PhasePartition equal(int total_steps, int n_phases = 5);
    int phase_of(int step) const;                 // 0-based; throws step_out_of_range
    std::pair<int, int> bounds(int phase) const;  // inclusive [start, end]
};

inline constexpr std::array<UpdateStrategy, 3> kStrategyOrder = {
    UpdateStrategy::defensive, UpdateStrategy::curriculum_advancement, UpdateStrategy::maintenance};

inline constexpr std::array<OpKind, 6> kOpKindOrder = {OpKind::create, OpKind::update,   OpKind::del,
                                                       OpKind::reweight, OpKind::merge, OpKind::split};

/// Per-phase strategy counts with row-normalized percentages and the
/// dominant mode (ties break toward the earlier strategy and are flagged).
struct ModeDistribution {
    PhasePartition partition;
    std::vector<std::array<long, 3>> counts;  // [phase][strategy]
    std::array<long, 3> totals = {0, 0, 0};
    std::vector<int> dominant;  // strategy index per phase, -1 for empty phase
    std::vector<bool> dominant_tie;
    long total_records = 0;

    double percent(int phase, int strategy) const;
    double total_percent(int strategy) const;
};

ModeDistribution mode_distribution(const std::vector<UpdateRecord>& records, const PhasePartition& partition);

/// Edit-operation counts plus the op-by-strategy cross table.
struct OpDistribution {
    std::array<long, 6> counts = {};                      // by kOpKindOrder
    std::array<std::array<long, 3>, 6> by_strategy = {};  // [op][strategy]
    long total = 0;

    double percent(size_t op_index) const;
    double strategy_share(size_t op_index, size_t strategy_index) const;
    int most_associated(size_t op_index) const;  // -1 when the op never occurs
    double ops_per_update(long n_updates) const;
};

OpDistribution edit_op_distribution(const std::vector<OpLogRecord>& op_log);

/// A rubric edit undone shortly after: deleted, merged away, or reweighted
/// by >= threshold in the opposite direction, within `window` steps
/// (inclusive). Each first op pairs with at most its earliest reverser.
struct ReversalEvent {
    std::string rubric_id;
    int first_step = 0;
    OpKind first_kind = OpKind::create;
    double first_delta = 0.0;
    int reversing_step = 0;
    OpKind reversing_kind = OpKind::del;
    int gap = 0;
};

std::vector<ReversalEvent> detect_reversals(const std::vector<OpLogRecord>& op_log, int window = 8,
                                            double threshold = 0.5);

/// Mean active adaptive (non-anchor) rubric counts per category per phase.
struct CompositionReport {
    PhasePartition partition;
    std::vector<std::map<RubricCategory, double>> phase_means;
    std::map<RubricCategory, double> overall_means;  // mean of phase means
    std::vector<double> phase_totals;
    double overall_total = 0.0;
};

CompositionReport composition_report(const std::vector<std::pair<int, RubricSet>>& snapshots,
                                     const PhasePartition& partition);

/// Per-component wall time, pipeline share and token consumption, averaged
/// over the profiled steps of a run log.
struct LatencyReport {
    struct Row {
        std::string component;
        double mean_seconds = 0.0;
        double share_percent = 0.0;
        double tokens_per_step = 0.0;
    };
    std::vector<Row> rows;
    double total_seconds = 0.0;
    double total_tokens = 0.0;
    long profiled_steps = 0;
};

LatencyReport latency_report(const std::vector<json>& runlog_entries);

// ---------------------------------------------------------------------------
// Rubric-quality preference protocol

struct DimensionScores {
    double coverage = 0, clarity = 0, discriminativeness = 0;
    double non_redundancy = 0, exploit_resistance = 0, task_alignment = 0;
    double total() const;
};

/// One identity-hidden comparison: candidates are shuffled before
/// prompting and the verdict is mapped back to true identities after
/// parsing. Equal best scores are reported as a tie rather than broken.
struct QualityVerdict {
    std::vector<DimensionScores> scores;  // by true candidate index
    int best_true_index = 0;
    int best_presented_index = 0;
    bool tie = false;
    std::string rationale;
    std::vector<int> presented_order;  // presented position -> true index
};

std::string render_candidate_text(const RubricSet& set);

QualityVerdict judge_rubric_quality(const std::string& task_context, const std::vector<RubricSet>& candidates,
                                    JudgeGateway& gateway, Rng& rng, int comparison_index = 0);

struct PreferenceTally {
    std::vector<long> wins;  // by true candidate index
    long ties = 0;
    long comparisons = 0;
    std::vector<DimensionScores> mean_scores;
    double fraction(size_t true_index) const;
};

PreferenceTally preference_tally(const std::string& task_context, const std::vector<RubricSet>& candidates,
                                 JudgeGateway& gateway, Rng& rng, int n_comparisons);

// ---------------------------------------------------------------------------
// Event-sourcing replay

/// Rebuilds the version chain from op-log records (grouped by resulting
/// version; version gaps are no-op updates). Returns sets for versions
/// initial+1 .. target_version.
std::vector<RubricSet> replay_chain(const RubricSet& initial, const std::vector<OpLogRecord>& op_log,
                                    int target_version);

struct ReplayReport {
    bool match = false;
    int final_version = 0;
    std::optional<int> first_divergent_version;
    std::string message;
};

/// Replays the op log and compares against the recorded final set; when
/// update records are supplied their chain is cross-checked version by
/// version so the first divergence can be named.
ReplayReport replay_verify(const RubricSet& initial, const std::vector<OpLogRecord>& op_log,
                           const std::vector<UpdateRecord>& records, const RubricSet& recorded_final);

// ---------------------------------------------------------------------------
// Table emission

struct ReportTable {
    std::string title;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

ReportTable to_table(const ModeDistribution& d);
ReportTable to_table(const OpDistribution& d);
ReportTable to_table(const std::vector<ReversalEvent>& events);
ReportTable to_table(const CompositionReport& r);
ReportTable to_table(const LatencyReport& r);
ReportTable to_table(const PreferenceTally& t, const std::vector<std::string>& candidate_names);

std::string render_markdown(const ReportTable& table);
std::string render_csv(const ReportTable& table);
/// Bar chart over the table's numeric columns.
std::string render_svg(const ReportTable& table);

}  // namespace amaris
