#include "amaris/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace amaris {

PhasePartition PhasePartition::equal(int total_steps, int n_phases) {
    if (total_steps < 1 || n_phases < 1 || n_phases > total_steps)
        throw Error("invalid_argument", "bad phase partition");
    return PhasePartition{total_steps, n_phases};
}

std::pair<int, int> PhasePartition::bounds(int phase) const {
    if (phase < 0 || phase >= n_phases) throw Error("invalid_argument", "phase out of range");
    // floor split: phase sizes differ by at most one and cover [1, total]
    const auto start = 1 + static_cast<int>(static_cast<long>(phase) * total_steps / n_phases);
    const auto end = static_cast<int>(static_cast<long>(phase + 1) * total_steps / n_phases);
    return {start, end};
}

int PhasePartition::phase_of(int step) const {
    if (step < 1 || step > total_steps)
        throw Error("step_out_of_range", "step " + std::to_string(step) + " outside [1, " +
                                             std::to_string(total_steps) + "]");
    for (int p = 0; p < n_phases; ++p) {
        auto [lo, hi] = bounds(p);
        if (step >= lo && step <= hi) return p;
    }
    throw Error("step_out_of_range", "unreachable");
}

namespace {

int strategy_index(UpdateStrategy s) {
    for (size_t i = 0; i < kStrategyOrder.size(); ++i)
        if (kStrategyOrder[i] == s) return static_cast<int>(i);
    return 2;
}

int op_index(OpKind k) {
    for (size_t i = 0; i < kOpKindOrder.size(); ++i)
        if (kOpKindOrder[i] == k) return static_cast<int>(i);
    return 0;
}

std::string fmt(double v, int decimals = 2) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(decimals) << v;
    return os.str();
}

}  // namespace

double ModeDistribution::percent(int phase, int strategy) const {
    long row = counts[static_cast<size_t>(phase)][0] + counts[static_cast<size_t>(phase)][1] +
               counts[static_cast<size_t>(phase)][2];
    if (row == 0) return 0.0;
    return 100.0 * static_cast<double>(counts[static_cast<size_t>(phase)][static_cast<size_t>(strategy)]) /
           static_cast<double>(row);
}

double ModeDistribution::total_percent(int strategy) const {
    if (total_records == 0) return 0.0;
    return 100.0 * static_cast<double>(totals[static_cast<size_t>(strategy)]) /
           static_cast<double>(total_records);
}

ModeDistribution mode_distribution(const std::vector<UpdateRecord>& records, const PhasePartition& partition) {
    ModeDistribution d;
    d.partition = partition;
    d.counts.assign(static_cast<size_t>(partition.n_phases), {0, 0, 0});
    for (const auto& r : records) {
        int phase = partition.phase_of(r.step);  // throws step_out_of_range
        ++d.counts[static_cast<size_t>(phase)][static_cast<size_t>(strategy_index(r.strategy))];
        ++d.totals[static_cast<size_t>(strategy_index(r.strategy))];
        ++d.total_records;
    }
    for (int p = 0; p < partition.n_phases; ++p) {
        const auto& row = d.counts[static_cast<size_t>(p)];
        long best = std::max({row[0], row[1], row[2]});
        if (best == 0) {
            d.dominant.push_back(-1);
            d.dominant_tie.push_back(false);
            continue;
        }
        int winner = -1;
        int holders = 0;
        for (int s = 0; s < 3; ++s) {
            if (row[static_cast<size_t>(s)] == best) {
                ++holders;
                if (winner < 0) winner = s;  // earlier strategy wins ties
            }
        }
        d.dominant.push_back(winner);
        d.dominant_tie.push_back(holders > 1);
    }
    return d;
}

double OpDistribution::percent(size_t op) const {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(counts[op]) / static_cast<double>(total);
}

double OpDistribution::strategy_share(size_t op, size_t strategy) const {
    if (counts[op] == 0) return 0.0;
    return 100.0 * static_cast<double>(by_strategy[op][strategy]) / static_cast<double>(counts[op]);
}

int OpDistribution::most_associated(size_t op) const {
    if (counts[op] == 0) return -1;
    int winner = 0;
    for (int s = 1; s < 3; ++s)
        if (by_strategy[op][static_cast<size_t>(s)] > by_strategy[op][static_cast<size_t>(winner)]) winner = s;
    return winner;
}

double OpDistribution::ops_per_update(long n_updates) const {
    return n_updates == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(n_updates);
}

OpDistribution edit_op_distribution(const std::vector<OpLogRecord>& op_log) {
    OpDistribution d;
    for (const auto& r : op_log) {
        size_t op = static_cast<size_t>(op_index(r.op_kind));
        ++d.counts[op];
        ++d.by_strategy[op][static_cast<size_t>(strategy_index(r.strategy()))];
        ++d.total;
    }
    return d;
}

std::vector<ReversalEvent> detect_reversals(const std::vector<OpLogRecord>& op_log, int window,
                                            double threshold) {
    struct FirstOp {
        size_t log_index;
        std::string rubric_id;
        int step;
        OpKind kind;
        double delta;
    };
    std::vector<FirstOp> firsts;
    for (size_t i = 0; i < op_log.size(); ++i) {
        const auto& r = op_log[i];
        if (r.op_kind == OpKind::reweight) {
            if (!r.old_weight || !r.new_weight)
                throw Error("missing_weight_history", "reweight at step " + std::to_string(r.step) +
                                                          " lacks old/new weights");
            double delta = *r.new_weight - *r.old_weight;
            if (delta != 0.0 && !r.target_ids.empty())
                firsts.push_back({i, r.target_ids.front(), r.step, OpKind::reweight, delta});
        } else if (r.op_kind == OpKind::create && r.new_weight) {
            std::string id = r.payload.contains("rubric") ? r.payload.at("rubric").value("id", "") : "";
            if (!id.empty()) firsts.push_back({i, id, r.step, OpKind::create, *r.new_weight});
        }
    }

    std::vector<ReversalEvent> events;
    for (const auto& first : firsts) {
        for (size_t j = first.log_index + 1; j < op_log.size(); ++j) {
            const auto& r = op_log[j];
            int gap = r.step - first.step;
            if (gap > window) break;  // steps are non-decreasing in a log
            bool targets = std::find(r.target_ids.begin(), r.target_ids.end(), first.rubric_id) !=
                           r.target_ids.end();
            if (!targets) continue;
            bool reverses = false;
            if (r.op_kind == OpKind::del || r.op_kind == OpKind::merge) {
                reverses = true;
            } else if (r.op_kind == OpKind::reweight && r.old_weight && r.new_weight) {
                double delta = *r.new_weight - *r.old_weight;
                reverses = std::abs(delta) >= threshold && delta * first.delta < 0.0;
            }
            if (reverses) {
                events.push_back({first.rubric_id, first.step, first.kind, first.delta, r.step, r.op_kind, gap});
                break;  // earliest reverser only
            }
        }
    }
    return events;
}

CompositionReport composition_report(const std::vector<std::pair<int, RubricSet>>& snapshots,
                                     const PhasePartition& partition) {
    CompositionReport report;
    report.partition = partition;
    std::vector<std::map<RubricCategory, double>> sums(static_cast<size_t>(partition.n_phases));
    std::vector<long> n(static_cast<size_t>(partition.n_phases), 0);
    for (const auto& [step, set] : snapshots) {
        size_t phase = static_cast<size_t>(partition.phase_of(step));
        ++n[phase];
        for (const auto& r : set.rubrics)
            if (!r.anchor) sums[phase][r.category] += 1.0;
    }
    report.phase_means.resize(static_cast<size_t>(partition.n_phases));
    report.phase_totals.assign(static_cast<size_t>(partition.n_phases), 0.0);
    for (size_t p = 0; p < sums.size(); ++p) {
        for (const auto& [cat, sum] : sums[p]) {
            double mean = n[p] == 0 ? 0.0 : sum / static_cast<double>(n[p]);
            report.phase_means[p][cat] = mean;
            report.phase_totals[p] += mean;
            report.overall_means[cat] += mean / partition.n_phases;
        }
        report.overall_total += report.phase_totals[p] / partition.n_phases;
    }
    return report;
}

LatencyReport latency_report(const std::vector<json>& runlog_entries) {
    static const char* components[] = {"individual_analysis", "batch_summarization", "query_generation",
                                       "memory_retrieval", "rubric_update"};
    LatencyReport report;
    std::map<std::string, double> ms_sum, token_sum;
    for (const auto& e : runlog_entries) {
        if (!e.contains("stage_ms") || !e.at("stage_ms").is_object() || e.at("stage_ms").empty()) continue;
        bool counted = false;
        for (const char* c : components) {
            if (e.at("stage_ms").contains(c)) {
                ms_sum[c] += e.at("stage_ms").at(c).get<double>();
                counted = true;
            }
            if (e.contains("stage_tokens") && e.at("stage_tokens").contains(c))
                token_sum[c] += e.at("stage_tokens").at(c).get<double>();
        }
        if (counted) ++report.profiled_steps;
    }
    if (report.profiled_steps == 0) throw Error("invalid_argument", "run log carries no profiling data");
    for (const char* c : components) {
        LatencyReport::Row row;
        row.component = c;
        row.mean_seconds = ms_sum[c] / 1000.0 / static_cast<double>(report.profiled_steps);
        row.tokens_per_step = token_sum[c] / static_cast<double>(report.profiled_steps);
        report.rows.push_back(row);
        report.total_seconds += row.mean_seconds;
        report.total_tokens += row.tokens_per_step;
    }
    for (auto& row : report.rows)
        row.share_percent = report.total_seconds == 0.0 ? 0.0 : 100.0 * row.mean_seconds / report.total_seconds;
    return report;
}

// ---------------------------------------------------------------------------
// Rubric-quality protocol

double DimensionScores::total() const {
    return coverage + clarity + discriminativeness + non_redundancy + exploit_resistance + task_alignment;
}

std::string render_candidate_text(const RubricSet& set) {
    std::ostringstream os;
    for (const auto& r : set.rubrics) {
        os << r.id << " (" << (r.weight >= 0 ? "+" : "") << fmt(r.weight) << (r.anchor ? ", anchor" : "")
           << "): " << r.text << "\n";
    }
    return os.str();
}

namespace {

DimensionScores parse_scores(const json& c) {
    DimensionScores s;
    s.coverage = c.at("coverage").get<double>();
    s.clarity = c.at("clarity").get<double>();
    s.discriminativeness = c.at("discriminativeness").get<double>();
    s.non_redundancy = c.at("non_redundancy").get<double>();
    s.exploit_resistance = c.at("exploit_resistance").get<double>();
    s.task_alignment = c.at("task_alignment").get<double>();
    return s;
}

}  // namespace

QualityVerdict judge_rubric_quality(const std::string& task_context, const std::vector<RubricSet>& candidates,
                                    JudgeGateway& gateway, Rng& rng, int comparison_index) {
    if (candidates.size() < 2) throw Error("invalid_argument", "need at least two candidate rubric sets");

    std::vector<int> order(candidates.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);  // uniform; method identities stay hidden

    json presented = json::array();
    for (size_t pos = 0; pos < order.size(); ++pos) {
        presented.push_back(json{{"label", "candidate_" + std::to_string(pos + 1)},
                                 {"text", render_candidate_text(candidates[static_cast<size_t>(order[pos])])}});
    }
    json payload{{"task_context", task_context},
                 {"candidates", presented},
                 {"comparison_index", comparison_index}};
    json out = gateway.invoke(JudgeRole::rubric_quality, payload);

    QualityVerdict verdict;
    verdict.presented_order = order;
    verdict.scores.resize(candidates.size());
    const json& scored = out.at("candidates");
    if (scored.size() != candidates.size())
        throw Error("schema_violation", "verdict scores a different number of candidates");
    for (size_t pos = 0; pos < order.size(); ++pos)
        verdict.scores[static_cast<size_t>(order[pos])] = parse_scores(scored.at(pos));
    verdict.best_presented_index = out.at("best_index").get<int>();
    verdict.best_true_index = order[static_cast<size_t>(verdict.best_presented_index)];
    verdict.rationale = out.at("rationale").get<std::string>();

    double best_total = verdict.scores[static_cast<size_t>(verdict.best_true_index)].total();
    int holders = 0;
    for (const auto& s : verdict.scores)
        if (s.total() == best_total) ++holders;
    verdict.tie = out.value("tie", false) || holders > 1;
    return verdict;
}

PreferenceTally preference_tally(const std::string& task_context, const std::vector<RubricSet>& candidates,
                                 JudgeGateway& gateway, Rng& rng, int n_comparisons) {
    PreferenceTally tally;
    tally.wins.assign(candidates.size(), 0);
    tally.mean_scores.assign(candidates.size(), DimensionScores{});
    for (int i = 0; i < n_comparisons; ++i) {
        QualityVerdict v = judge_rubric_quality(task_context, candidates, gateway, rng, i);
        ++tally.comparisons;
        if (v.tie) {
            ++tally.ties;
        } else {
            ++tally.wins[static_cast<size_t>(v.best_true_index)];
        }
        for (size_t c = 0; c < candidates.size(); ++c) {
            auto& m = tally.mean_scores[c];
            const auto& s = v.scores[c];
            m.coverage += s.coverage / n_comparisons;
            m.clarity += s.clarity / n_comparisons;
            m.discriminativeness += s.discriminativeness / n_comparisons;
            m.non_redundancy += s.non_redundancy / n_comparisons;
            m.exploit_resistance += s.exploit_resistance / n_comparisons;
            m.task_alignment += s.task_alignment / n_comparisons;
        }
    }
    return tally;
}

double PreferenceTally::fraction(size_t true_index) const {
    return comparisons == 0 ? 0.0 : static_cast<double>(wins[true_index]) / static_cast<double>(comparisons);
}

// ---------------------------------------------------------------------------
// Replay

std::vector<RubricSet> replay_chain(const RubricSet& initial, const std::vector<OpLogRecord>& op_log,
                                    int target_version) {
    std::map<int, std::vector<EditOp>> by_version;
    std::map<int, int> step_by_version;
    for (const auto& r : op_log) {
        if (!r.payload.contains("resulting_version"))
            throw Error("corrupt_log", "op log record lacks resulting_version");
        int v = r.payload.at("resulting_version").get<int>();
        json opj = r.payload;
        opj["kind"] = to_string(r.op_kind);
        by_version[v].push_back(EditOp::from_json(opj));
        step_by_version[v] = r.step;
    }
    int max_version = target_version;
    if (!by_version.empty()) max_version = std::max(max_version, by_version.rbegin()->first);

    std::vector<RubricSet> chain;
    RubricSet current = initial;
    for (int v = initial.version + 1; v <= max_version; ++v) {
        std::vector<EditOp> ops;  // a version absent from the log was a no-op update
        if (auto it = by_version.find(v); it != by_version.end()) ops = it->second;
        int step = step_by_version.count(v) ? step_by_version[v] : 0;
        auto [next, entry] = apply_update(current, ops, step);
        (void)entry;
        current = std::move(next);
        chain.push_back(current);
    }
    return chain;
}

ReplayReport replay_verify(const RubricSet& initial, const std::vector<OpLogRecord>& op_log,
                           const std::vector<UpdateRecord>& records, const RubricSet& recorded_final) {
    ReplayReport report;
    std::vector<RubricSet> chain;
    try {
        chain = replay_chain(initial, op_log, recorded_final.version);
    } catch (const Error& e) {
        report.message = std::string("replay failed: ") + e.what();
        return report;
    }
    const RubricSet& replayed_final = chain.empty() ? initial : chain.back();
    report.final_version = replayed_final.version;

    if (!records.empty()) {
        // cross-check the record chain version by version
        RubricSet current = initial;
        std::vector<UpdateRecord> ordered = records;
        std::sort(ordered.begin(), ordered.end(),
                  [](const UpdateRecord& a, const UpdateRecord& b) { return a.resulting_version < b.resulting_version; });
        for (const auto& rec : ordered) {
            std::vector<EditOp> ops;
            for (const auto& a : rec.ops) ops.push_back(a.op);
            auto [next, entry] = apply_update(current, ops, rec.step, rec.strategy);
            (void)entry;
            current = std::move(next);
            size_t idx = static_cast<size_t>(current.version - initial.version - 1);
            if (idx < chain.size() && chain[idx].to_json() != current.to_json()) {
                report.first_divergent_version = current.version;
                report.message = "op log and update records diverge at version " + std::to_string(current.version);
                return report;
            }
        }
    }

    if (replayed_final.to_json() == recorded_final.to_json()) {
        report.match = true;
        report.message = "match at version " + std::to_string(report.final_version);
    } else {
        // locate the first version whose replayed set disagrees with the
        // recorded chain; without intermediate snapshots, report the final
        report.first_divergent_version = recorded_final.version;
        report.message = "replayed final set differs from the recorded final set";
    }
    return report;
}

// ---------------------------------------------------------------------------
// Table emission

ReportTable to_table(const ModeDistribution& d) {
    ReportTable t;
    t.title = "Update-mode distribution by phase";
    t.columns = {"step_range", "defensive", "curriculum", "maintenance", "dominant"};
    for (int p = 0; p < d.partition.n_phases; ++p) {
        auto [lo, hi] = d.partition.bounds(p);
        std::vector<std::string> row;
        row.push_back(std::to_string(lo) + "-" + std::to_string(hi));
        for (int s = 0; s < 3; ++s)
            row.push_back(std::to_string(d.counts[static_cast<size_t>(p)][static_cast<size_t>(s)]) + " (" +
                          fmt(d.percent(p, s)) + "%)");
        int dom = d.dominant[static_cast<size_t>(p)];
        std::string name = dom < 0 ? "-" : to_string(kStrategyOrder[static_cast<size_t>(dom)]);
        if (dom >= 0 && d.dominant_tie[static_cast<size_t>(p)]) name += " (tie)";
        row.push_back(name);
        t.rows.push_back(std::move(row));
    }
    std::vector<std::string> total{"total"};
    for (int s = 0; s < 3; ++s)
        total.push_back(std::to_string(d.totals[static_cast<size_t>(s)]) + " (" + fmt(d.total_percent(s)) + "%)");
    total.push_back("-");
    t.rows.push_back(std::move(total));
    return t;
}

ReportTable to_table(const OpDistribution& d) {
    ReportTable t;
    t.title = "Edit-operation distribution";
    t.columns = {"operation", "count", "percent", "defensive", "curriculum", "maintenance", "most_associated"};
    for (size_t i = 0; i < kOpKindOrder.size(); ++i) {
        std::vector<std::string> row;
        row.push_back(to_string(kOpKindOrder[i]));
        row.push_back(std::to_string(d.counts[i]));
        row.push_back(fmt(d.percent(i)) + "%");
        for (size_t s = 0; s < 3; ++s)
            row.push_back(std::to_string(d.by_strategy[i][s]) + " (" + fmt(d.strategy_share(i, s)) + "%)");
        int assoc = d.most_associated(i);
        row.push_back(assoc < 0 ? "-" : to_string(kStrategyOrder[static_cast<size_t>(assoc)]));
        t.rows.push_back(std::move(row));
    }
    t.rows.push_back({"total", std::to_string(d.total), "100.00%", "", "", "", ""});
    return t;
}

ReportTable to_table(const std::vector<ReversalEvent>& events) {
    ReportTable t;
    t.title = "Short-term rubric reversals";
    t.columns = {"rubric_id", "first_step", "first_kind", "first_delta", "reversing_step", "reversing_kind", "gap"};
    for (const auto& e : events) {
        t.rows.push_back({e.rubric_id, std::to_string(e.first_step), to_string(e.first_kind), fmt(e.first_delta),
                          std::to_string(e.reversing_step), to_string(e.reversing_kind), std::to_string(e.gap)});
    }
    return t;
}

ReportTable to_table(const CompositionReport& r) {
    static const RubricCategory cats[] = {RubricCategory::correctness,          RubricCategory::instruction_following,
                                          RubricCategory::safety,               RubricCategory::communication_quality,
                                          RubricCategory::anti_reward_hacking,  RubricCategory::bonus,
                                          RubricCategory::uncategorized};
    ReportTable t;
    t.title = "Active adaptive rubrics per step by category";
    t.columns = {"category"};
    for (int p = 0; p < r.partition.n_phases; ++p) {
        auto [lo, hi] = r.partition.bounds(p);
        t.columns.push_back(std::to_string(lo) + "-" + std::to_string(hi));
    }
    t.columns.push_back("mean");
    for (RubricCategory cat : cats) {
        bool any = r.overall_means.count(cat) && r.overall_means.at(cat) > 0.0;
        if (cat == RubricCategory::uncategorized && !any) continue;
        std::vector<std::string> row{to_string(cat)};
        for (int p = 0; p < r.partition.n_phases; ++p) {
            auto it = r.phase_means[static_cast<size_t>(p)].find(cat);
            row.push_back(fmt(it == r.phase_means[static_cast<size_t>(p)].end() ? 0.0 : it->second));
        }
        row.push_back(fmt(r.overall_means.count(cat) ? r.overall_means.at(cat) : 0.0));
        t.rows.push_back(std::move(row));
    }
    std::vector<std::string> total{"total"};
    for (double v : r.phase_totals) total.push_back(fmt(v));
    total.push_back(fmt(r.overall_total));
    t.rows.push_back(std::move(total));
    return t;
}

ReportTable to_table(const LatencyReport& r) {
    ReportTable t;
    t.title = "Per-component time and token consumption";
    t.columns = {"component", "avg_time_s", "share_percent", "tokens_per_step"};
    for (const auto& row : r.rows)
        t.rows.push_back({row.component, fmt(row.mean_seconds, 1), fmt(row.share_percent, 1), fmt(row.tokens_per_step, 0)});
    t.rows.push_back({"total", fmt(r.total_seconds, 1), "100.0", fmt(r.total_tokens, 0)});
    return t;
}

ReportTable to_table(const PreferenceTally& t_in, const std::vector<std::string>& candidate_names) {
    ReportTable t;
    t.title = "Rubric-quality preference evaluation";
    t.columns = {"rubric_set", "coverage", "clarity", "discriminativeness", "non_redundancy",
                 "exploit_resistance", "task_alignment", "preference"};
    for (size_t i = 0; i < t_in.wins.size(); ++i) {
        const auto& m = t_in.mean_scores[i];
        t.rows.push_back({i < candidate_names.size() ? candidate_names[i] : "candidate_" + std::to_string(i + 1),
                          fmt(m.coverage, 1), fmt(m.clarity, 1), fmt(m.discriminativeness, 1),
                          fmt(m.non_redundancy, 1), fmt(m.exploit_resistance, 1), fmt(m.task_alignment, 1),
                          fmt(t_in.fraction(i))});
    }
    if (t_in.ties > 0)
        t.rows.push_back({"(ties)", "", "", "", "", "", "", std::to_string(t_in.ties) + " of " +
                                                                std::to_string(t_in.comparisons)});
    return t;
}

std::string render_markdown(const ReportTable& table) {
    std::ostringstream os;
    os << "## " << table.title << "\n\n|";
    for (const auto& c : table.columns) os << " " << c << " |";
    os << "\n|";
    for (size_t i = 0; i < table.columns.size(); ++i) os << " --- |";
    os << "\n";
    for (const auto& row : table.rows) {
        os << "|";
        for (const auto& cell : row) os << " " << cell << " |";
        os << "\n";
    }
    return os.str();
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::optional<double> leading_number(const std::string& cell) {
    try {
        size_t consumed = 0;
        double v = std::stod(cell, &consumed);
        (void)consumed;
        return v;
    } catch (...) {
        return std::nullopt;
    }
}

}  // namespace

std::string render_csv(const ReportTable& table) {
    std::ostringstream os;
    for (size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << csv_escape(table.columns[i]);
    os << "\n";
    for (const auto& row : table.rows) {
        for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_escape(row[i]);
        os << "\n";
    }
    return os.str();
}

std::string render_svg(const ReportTable& table) {
    // one bar group per row, over the numeric columns
    std::vector<size_t> numeric_cols;
    if (!table.rows.empty()) {
        for (size_t c = 1; c < table.columns.size(); ++c)
            if (leading_number(table.rows[0][c])) numeric_cols.push_back(c);
    }
    double max_v = 1.0;
    for (const auto& row : table.rows)
        for (size_t c : numeric_cols)
            if (c < row.size())
                if (auto v = leading_number(row[c])) max_v = std::max(max_v, std::abs(*v));

    const int bar_w = 14, gap = 6, group_gap = 24, plot_h = 220, left = 140, top = 50;
    const int group_w = static_cast<int>(numeric_cols.size()) * (bar_w + gap) + group_gap;
    const int width = left + group_w * static_cast<int>(table.rows.size()) + 40;
    const int height = top + plot_h + 60;
    static const char* palette[] = {"#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c"};

    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height << "'>\n";
    os << "<text x='10' y='20' font-family='sans-serif' font-size='14'>" << svg_escape(table.title)
       << "</text>\n";
    for (size_t r = 0; r < table.rows.size(); ++r) {
        int gx = left + static_cast<int>(r) * group_w;
        for (size_t i = 0; i < numeric_cols.size(); ++i) {
            size_t c = numeric_cols[i];
            double v = c < table.rows[r].size() ? leading_number(table.rows[r][c]).value_or(0.0) : 0.0;
            int h = static_cast<int>(std::abs(v) / max_v * plot_h);
            int x = gx + static_cast<int>(i) * (bar_w + gap);
            os << "<rect x='" << x << "' y='" << top + plot_h - h << "' width='" << bar_w << "' height='" << h
               << "' fill='" << palette[i % 6] << "'/>\n";
        }
        os << "<text x='" << gx << "' y='" << top + plot_h + 16
           << "' font-family='sans-serif' font-size='10' transform='rotate(30 " << gx << ","
           << top + plot_h + 16 << ")'>" << svg_escape(table.rows[r].empty() ? "" : table.rows[r][0])
           << "</text>\n";
    }
    // legend
    for (size_t i = 0; i < numeric_cols.size(); ++i) {
        int y = top + static_cast<int>(i) * 16;
        os << "<rect x='10' y='" << y << "' width='10' height='10' fill='" << palette[i % 6] << "'/>\n";
        os << "<text x='24' y='" << y + 9 << "' font-family='sans-serif' font-size='10'>"
           << svg_escape(table.columns[numeric_cols[i]]) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace amaris
