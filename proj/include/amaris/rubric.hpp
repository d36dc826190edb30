#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "amaris/common.hpp"

namespace amaris {

enum class RubricCategory {
    correctness,
    instruction_following,
    safety,
    communication_quality,
    anti_reward_hacking,
    bonus,
    uncategorized,
};

std::string to_string(RubricCategory c);
RubricCategory rubric_category_from_string(const std::string& s);

enum class OpKind { create, update, del, reweight, merge, split };

std::string to_string(OpKind k);
OpKind op_kind_from_string(const std::string& s);

enum class UpdateStrategy { defensive, curriculum_advancement, maintenance };

std::string to_string(UpdateStrategy s);
UpdateStrategy strategy_from_string(const std::string& s);

/// One weighted natural-language criterion.
struct Rubric {
    std::string id;
    std::string text;
    double weight = 0.0;  // signed reward points, never zero in a valid set
    RubricCategory category = RubricCategory::uncategorized;
    bool anchor = false;
    int created_step = 0;
    OpKind origin_op = OpKind::create;

    json to_json() const;
    static Rubric from_json(const json& j);
};

/// Sharing boundary for a rubric set and its memory: one global set, or
/// one per unique training input (keyed by a digest of the input text).
struct ScopeKey {
    enum class Kind { global, per_instance };
    Kind kind = Kind::global;
    std::string instance_key;  // present iff kind == per_instance

    static ScopeKey global() { return ScopeKey{}; }
    static ScopeKey per_instance_of(const std::string& input_text);

    std::string str() const;
    bool operator==(const ScopeKey& o) const { return kind == o.kind && instance_key == o.instance_key; }
    bool operator<(const ScopeKey& o) const {
        if (kind != o.kind) return kind < o.kind;
        return instance_key < o.instance_key;
    }

    json to_json() const;
    static ScopeKey from_json(const json& j);
};

/// One rubric edit. Payload fields are populated per kind.
struct EditOp {
    OpKind kind = OpKind::create;
    std::optional<Rubric> rubric;           // create: the new rubric
    std::string target_id;                  // update/delete/reweight/split source
    std::string new_text;                   // update
    double new_weight = 0.0;                // reweight
    std::vector<std::string> source_ids;    // merge sources
    std::optional<Rubric> replacement;      // merge replacement
    std::vector<Rubric> replacements;       // split replacements

    static EditOp make_create(Rubric r);
    static EditOp make_update(std::string target, std::string text);
    static EditOp make_delete(std::string target);
    static EditOp make_reweight(std::string target, double weight);
    static EditOp make_merge(std::vector<std::string> sources, Rubric replacement);
    static EditOp make_split(std::string source, std::vector<Rubric> replacements);

    /// All rubric ids this op targets in the existing set.
    std::vector<std::string> target_ids() const;

    json to_json() const;
    static EditOp from_json(const json& j);
};

/// Versioned, scoped collection of weighted criteria; the reward
/// specification used for scoring at a step.
struct RubricSet {
    ScopeKey scope;
    int version = 1;
    std::vector<Rubric> rubrics;  // insertion order

    size_t n_g() const { return rubrics.size(); }
    const Rubric* find(const std::string& id) const;
    bool contains(const std::string& id) const { return find(id) != nullptr; }

    json to_json() const;
    static RubricSet from_json(const json& j);
};

struct Violation {
    std::string rubric_id;  // empty for set-level violations
    std::string rule;
};

/// Checks every Rubric and RubricSet invariant. Violations are data,
/// not failures: an empty vector means the set is valid.
std::vector<Violation> validate_set(const RubricSet& set);

/// One applied op plus the weight transition it caused (reweights record
/// old/new; creates record the initial weight as new).
struct AppliedOp {
    EditOp op;
    std::optional<double> old_weight;
    std::optional<double> new_weight;
};

/// Audit record for one applied update: every op in order, with the step
/// and strategy it was applied under.
struct OpLogEntry {
    int step = 0;
    UpdateStrategy strategy = UpdateStrategy::maintenance;
    int resulting_version = 0;
    std::vector<AppliedOp> ops;

    /// JSONL: one line per op, fields
    /// {"step","op_kind","target_ids","old_weight","new_weight","payload"}.
    std::vector<json> to_jsonl() const;
};

/// Flat view of one op-log line, as read back from JSONL.
struct OpLogRecord {
    int step = 0;
    OpKind op_kind = OpKind::create;
    std::vector<std::string> target_ids;
    std::optional<double> old_weight;
    std::optional<double> new_weight;
    json payload;  // carries strategy plus kind-specific payload

    UpdateStrategy strategy() const;
    static OpLogRecord from_json(const json& j);
};

/// Applies a single edit against `set`, returning the edited set with the
/// same version (versioning happens in apply_update). Throws Error with
/// code unknown_target, anchor_protected or duplicate_id.
RubricSet apply_operation(const RubricSet& set, const EditOp& op);

/// Applies `ops` sequentially and bumps the version by exactly one (also
/// for an empty list: a maintenance no-op still versions). Atomic: any
/// failure throws and the caller keeps the untouched input set. The thrown
/// Error message names the failing op index.
std::pair<RubricSet, OpLogEntry> apply_update(const RubricSet& set, const std::vector<EditOp>& ops,
                                              int step = 0,
                                              UpdateStrategy strategy = UpdateStrategy::maintenance);

/// Per-rubric satisfaction scores with the weighted total. The total is
/// the raw signed sum, with no normalization.
struct RewardBreakdown {
    std::map<std::string, double> per_rubric;
    double total = 0.0;
    int rubric_set_version = 0;

    json to_json() const;
};

/// total = sum_j weight_j * score_j over exactly the rubrics of `set`.
/// Throws missing_score / extra_score / score_out_of_range.
RewardBreakdown weighted_reward(const std::map<std::string, double>& scores, const RubricSet& set);

}  // namespace amaris
