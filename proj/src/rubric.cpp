#include "amaris/rubric.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

namespace amaris {

std::string to_string(RubricCategory c) {
    switch (c) {
        case RubricCategory::correctness: return "correctness";
        case RubricCategory::instruction_following: return "instruction_following";
        case RubricCategory::safety: return "safety";
        case RubricCategory::communication_quality: return "communication_quality";
        case RubricCategory::anti_reward_hacking: return "anti_reward_hacking";
        case RubricCategory::bonus: return "bonus";
        case RubricCategory::uncategorized: return "uncategorized";
    }
    return "uncategorized";
}

RubricCategory rubric_category_from_string(const std::string& s) {
    if (s == "correctness") return RubricCategory::correctness;
    if (s == "instruction_following") return RubricCategory::instruction_following;
    if (s == "safety") return RubricCategory::safety;
    if (s == "communication_quality") return RubricCategory::communication_quality;
    if (s == "anti_reward_hacking") return RubricCategory::anti_reward_hacking;
    if (s == "bonus") return RubricCategory::bonus;
    if (s == "uncategorized") return RubricCategory::uncategorized;
    throw Error("bad_enum", "unknown rubric category '" + s + "'");
}

std::string to_string(OpKind k) {
    switch (k) {
        case OpKind::create: return "create";
        case OpKind::update: return "update";
        case OpKind::del: return "delete";
        case OpKind::reweight: return "reweight";
        case OpKind::merge: return "merge";
        case OpKind::split: return "split";
    }
    return "create";
}

OpKind op_kind_from_string(const std::string& s) {
    if (s == "create") return OpKind::create;
    if (s == "update") return OpKind::update;
    if (s == "delete") return OpKind::del;
    if (s == "reweight") return OpKind::reweight;
    if (s == "merge") return OpKind::merge;
    if (s == "split") return OpKind::split;
    throw Error("bad_enum", "unknown op kind '" + s + "'");
}

std::string to_string(UpdateStrategy s) {
    switch (s) {
        case UpdateStrategy::defensive: return "defensive";
        case UpdateStrategy::curriculum_advancement: return "curriculum_advancement";
        case UpdateStrategy::maintenance: return "maintenance";
    }
    return "maintenance";
}

UpdateStrategy strategy_from_string(const std::string& s) {
    if (s == "defensive") return UpdateStrategy::defensive;
    if (s == "curriculum_advancement") return UpdateStrategy::curriculum_advancement;
    if (s == "maintenance") return UpdateStrategy::maintenance;
    throw Error("bad_enum", "unknown update strategy '" + s + "'");
}

json Rubric::to_json() const {
    return json{{"id", id},
                {"text", text},
                {"weight", weight},
                {"category", amaris::to_string(category)},
                {"anchor", anchor},
                {"created_step", created_step}};
}

Rubric Rubric::from_json(const json& j) {
    Rubric r;
    r.id = j.at("id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.weight = j.at("weight").get<double>();
    r.category = j.contains("category") ? rubric_category_from_string(j.at("category").get<std::string>())
                                        : RubricCategory::uncategorized;
    r.anchor = j.value("anchor", false);
    r.created_step = j.value("created_step", 0);
    return r;
}

ScopeKey ScopeKey::per_instance_of(const std::string& input_text) {
    ScopeKey k;
    k.kind = Kind::per_instance;
    k.instance_key = hex64(fnv1a64(input_text));
    return k;
}

std::string ScopeKey::str() const {
    return kind == Kind::global ? "global" : "instance:" + instance_key;
}

json ScopeKey::to_json() const {
    json j{{"kind", kind == Kind::global ? "global" : "per_instance"}};
    if (kind == Kind::per_instance) j["instance_key"] = instance_key;
    return j;
}

ScopeKey ScopeKey::from_json(const json& j) {
    ScopeKey k;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "global") {
        k.kind = Kind::global;
    } else if (kind == "per_instance") {
        k.kind = Kind::per_instance;
        k.instance_key = j.at("instance_key").get<std::string>();
    } else {
        throw Error("bad_enum", "unknown scope kind '" + kind + "'");
    }
    return k;
}

EditOp EditOp::make_create(Rubric r) {
    EditOp op;
    op.kind = OpKind::create;
    op.rubric = std::move(r);
    return op;
}

EditOp EditOp::make_update(std::string target, std::string text) {
    EditOp op;
    op.kind = OpKind::update;
    op.target_id = std::move(target);
    op.new_text = std::move(text);
    return op;
}

EditOp EditOp::make_delete(std::string target) {
    EditOp op;
    op.kind = OpKind::del;
    op.target_id = std::move(target);
    return op;
}

EditOp EditOp::make_reweight(std::string target, double weight) {
    EditOp op;
    op.kind = OpKind::reweight;
    op.target_id = std::move(target);
    op.new_weight = weight;
    return op;
}

EditOp EditOp::make_merge(std::vector<std::string> sources, Rubric replacement) {
    EditOp op;
    op.kind = OpKind::merge;
    op.source_ids = std::move(sources);
    op.replacement = std::move(replacement);
    return op;
}

EditOp EditOp::make_split(std::string source, std::vector<Rubric> replacements) {
    EditOp op;
    op.kind = OpKind::split;
    op.target_id = std::move(source);
    op.replacements = std::move(replacements);
    return op;
}

std::vector<std::string> EditOp::target_ids() const {
    switch (kind) {
        case OpKind::create: return {};
        case OpKind::merge: return source_ids;
        default: return {target_id};
    }
}

json EditOp::to_json() const {
    json j{{"kind", amaris::to_string(kind)}};
    switch (kind) {
        case OpKind::create:
            j["rubric"] = rubric->to_json();
            break;
        case OpKind::update:
            j["target_id"] = target_id;
            j["new_text"] = new_text;
            break;
        case OpKind::del:
            j["target_id"] = target_id;
            break;
        case OpKind::reweight:
            j["target_id"] = target_id;
            j["new_weight"] = new_weight;
            break;
        case OpKind::merge: {
            j["source_ids"] = source_ids;
            j["replacement"] = replacement->to_json();
            break;
        }
        case OpKind::split: {
            j["target_id"] = target_id;
            json reps = json::array();
            for (const auto& r : replacements) reps.push_back(r.to_json());
            j["replacements"] = reps;
            break;
        }
    }
    return j;
}

EditOp EditOp::from_json(const json& j) {
    EditOp op;
    op.kind = op_kind_from_string(j.at("kind").get<std::string>());
    switch (op.kind) {
        case OpKind::create:
            op.rubric = Rubric::from_json(j.at("rubric"));
            break;
        case OpKind::update:
            op.target_id = j.at("target_id").get<std::string>();
            op.new_text = j.at("new_text").get<std::string>();
            break;
        case OpKind::del:
            op.target_id = j.at("target_id").get<std::string>();
            break;
        case OpKind::reweight:
            op.target_id = j.at("target_id").get<std::string>();
            op.new_weight = j.at("new_weight").get<double>();
            break;
        case OpKind::merge:
            op.source_ids = j.at("source_ids").get<std::vector<std::string>>();
            op.replacement = Rubric::from_json(j.at("replacement"));
            break;
        case OpKind::split:
            op.target_id = j.at("target_id").get<std::string>();
            for (const auto& rj : j.at("replacements")) op.replacements.push_back(Rubric::from_json(rj));
            break;
    }
    return op;
}

const Rubric* RubricSet::find(const std::string& id) const {
    for (const auto& r : rubrics)
        if (r.id == id) return &r;
    return nullptr;
}

json RubricSet::to_json() const {
    json rs = json::array();
    for (const auto& r : rubrics) rs.push_back(r.to_json());
    return json{{"scope", scope.to_json()}, {"version", version}, {"rubrics", rs}};
}

RubricSet RubricSet::from_json(const json& j) {
    RubricSet s;
    s.scope = ScopeKey::from_json(j.at("scope"));
    s.version = j.at("version").get<int>();
    for (const auto& rj : j.at("rubrics")) s.rubrics.push_back(Rubric::from_json(rj));
    return s;
}

namespace {

void validate_rubric(const Rubric& r, std::vector<Violation>& out) {
    if (trim(r.text).empty()) out.push_back({r.id, "empty text"});
    if (!std::isfinite(r.weight)) out.push_back({r.id, "non-finite weight " + r.id});
    else if (r.weight == 0.0) out.push_back({r.id, "zero weight " + r.id});
    if (r.created_step < 0) out.push_back({r.id, "negative created_step"});
}

}  // namespace

std::vector<Violation> validate_set(const RubricSet& set) {
    std::vector<Violation> out;
    std::unordered_set<std::string> seen;
    for (const auto& r : set.rubrics) {
        if (!seen.insert(r.id).second) out.push_back({r.id, "duplicate rubric_id " + r.id});
        validate_rubric(r, out);
    }
    if (set.version < 1) out.push_back({"", "version below 1"});
    return out;
}

namespace {

void require_valid_new_rubric(const Rubric& r) {
    if (trim(r.text).empty()) throw Error("invalid_rubric", "empty text for rubric '" + r.id + "'");
    if (!std::isfinite(r.weight) || r.weight == 0.0)
        throw Error("invalid_rubric", "weight of rubric '" + r.id + "' must be finite and non-zero");
}

size_t require_target(const RubricSet& set, const std::string& id) {
    for (size_t i = 0; i < set.rubrics.size(); ++i)
        if (set.rubrics[i].id == id) return i;
    throw Error("unknown_target", "rubric '" + id + "' not in set");
}

}  // namespace

RubricSet apply_operation(const RubricSet& set, const EditOp& op) {
    RubricSet out = set;
    switch (op.kind) {
        case OpKind::create: {
            if (!op.rubric) throw Error("invalid_op", "create without rubric payload");
            require_valid_new_rubric(*op.rubric);
            if (out.contains(op.rubric->id))
                throw Error("duplicate_id", "create collides with existing id '" + op.rubric->id + "'");
            Rubric r = *op.rubric;
            r.origin_op = OpKind::create;
            out.rubrics.push_back(std::move(r));
            break;
        }
        case OpKind::update: {
            size_t i = require_target(out, op.target_id);
            if (trim(op.new_text).empty()) throw Error("invalid_op", "update with empty text");
            out.rubrics[i].text = op.new_text;
            out.rubrics[i].origin_op = OpKind::update;
            break;
        }
        case OpKind::del: {
            size_t i = require_target(out, op.target_id);
            if (out.rubrics[i].anchor)
                throw Error("anchor_protected", "cannot delete anchor rubric '" + op.target_id + "'");
            out.rubrics.erase(out.rubrics.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
        case OpKind::reweight: {
            size_t i = require_target(out, op.target_id);
            if (!std::isfinite(op.new_weight) || op.new_weight == 0.0)
                throw Error("invalid_op", "reweight to zero or non-finite weight");
            out.rubrics[i].weight = op.new_weight;
            out.rubrics[i].origin_op = OpKind::reweight;
            break;
        }
        case OpKind::merge: {
            std::set<std::string> distinct(op.source_ids.begin(), op.source_ids.end());
            if (distinct.size() < 2) throw Error("invalid_op", "merge needs at least two distinct sources");
            if (!op.replacement) throw Error("invalid_op", "merge without replacement rubric");
            require_valid_new_rubric(*op.replacement);
            for (const auto& id : op.source_ids) {
                size_t i = require_target(out, id);
                if (out.rubrics[i].anchor)
                    throw Error("anchor_protected", "cannot merge away anchor rubric '" + id + "'");
            }
            // replacement id may reuse a source id but must not collide with a survivor
            for (const auto& r : out.rubrics) {
                if (r.id == op.replacement->id && !distinct.count(r.id))
                    throw Error("duplicate_id", "merge replacement collides with id '" + r.id + "'");
            }
            std::erase_if(out.rubrics, [&](const Rubric& r) { return distinct.count(r.id) > 0; });
            Rubric rep = *op.replacement;
            rep.origin_op = OpKind::merge;
            out.rubrics.push_back(std::move(rep));
            break;
        }
        case OpKind::split: {
            if (op.replacements.size() < 2) throw Error("invalid_op", "split needs at least two replacements");
            size_t i = require_target(out, op.target_id);
            if (out.rubrics[i].anchor)
                throw Error("anchor_protected", "cannot split anchor rubric '" + op.target_id + "'");
            std::set<std::string> rep_ids;
            for (const auto& r : op.replacements) {
                require_valid_new_rubric(r);
                if (!rep_ids.insert(r.id).second)
                    throw Error("duplicate_id", "split replacements repeat id '" + r.id + "'");
            }
            for (const auto& r : out.rubrics) {
                if (r.id != op.target_id && rep_ids.count(r.id))
                    throw Error("duplicate_id", "split replacement collides with id '" + r.id + "'");
            }
            out.rubrics.erase(out.rubrics.begin() + static_cast<std::ptrdiff_t>(i));
            for (const auto& r : op.replacements) {
                Rubric part = r;
                part.origin_op = OpKind::split;
                out.rubrics.push_back(std::move(part));
            }
            break;
        }
    }
    return out;
}

std::pair<RubricSet, OpLogEntry> apply_update(const RubricSet& set, const std::vector<EditOp>& ops, int step,
                                              UpdateStrategy strategy) {
    RubricSet current = set;
    OpLogEntry entry;
    entry.step = step;
    entry.strategy = strategy;
    for (size_t i = 0; i < ops.size(); ++i) {
        const EditOp& op = ops[i];
        AppliedOp applied;
        applied.op = op;
        if (op.kind == OpKind::reweight) {
            if (const Rubric* r = current.find(op.target_id)) applied.old_weight = r->weight;
            applied.new_weight = op.new_weight;
        } else if (op.kind == OpKind::create && op.rubric) {
            applied.new_weight = op.rubric->weight;
        } else if (op.kind == OpKind::del) {
            if (const Rubric* r = current.find(op.target_id)) applied.old_weight = r->weight;
        }
        try {
            current = apply_operation(current, op);
        } catch (const Error& e) {
            throw Error(e.code(), "op " + std::to_string(i) + " (" + to_string(op.kind) + "): " + e.what());
        }
        entry.ops.push_back(std::move(applied));
    }
    current.version = set.version + 1;
    entry.resulting_version = current.version;
    return {std::move(current), std::move(entry)};
}

std::vector<json> OpLogEntry::to_jsonl() const {
    std::vector<json> lines;
    lines.reserve(ops.size());
    for (const auto& a : ops) {
        json payload = a.op.to_json();
        payload.erase("kind");
        payload["strategy"] = amaris::to_string(strategy);
        payload["resulting_version"] = resulting_version;
        json line{{"step", step},
                  {"op_kind", amaris::to_string(a.op.kind)},
                  {"target_ids", a.op.target_ids()},
                  {"old_weight", a.old_weight ? json(*a.old_weight) : json(nullptr)},
                  {"new_weight", a.new_weight ? json(*a.new_weight) : json(nullptr)},
                  {"payload", payload}};
        lines.push_back(std::move(line));
    }
    return lines;
}

UpdateStrategy OpLogRecord::strategy() const {
    if (payload.contains("strategy")) return strategy_from_string(payload.at("strategy").get<std::string>());
    return UpdateStrategy::maintenance;
}

OpLogRecord OpLogRecord::from_json(const json& j) {
    OpLogRecord r;
    r.step = j.at("step").get<int>();
    r.op_kind = op_kind_from_string(j.at("op_kind").get<std::string>());
    r.target_ids = j.at("target_ids").get<std::vector<std::string>>();
    if (j.contains("old_weight") && !j.at("old_weight").is_null()) r.old_weight = j.at("old_weight").get<double>();
    if (j.contains("new_weight") && !j.at("new_weight").is_null()) r.new_weight = j.at("new_weight").get<double>();
    r.payload = j.value("payload", json::object());
    return r;
}

json RewardBreakdown::to_json() const {
    json scores = json::object();
    for (const auto& [id, s] : per_rubric) scores[id] = s;
    return json{{"per_rubric", scores}, {"total", total}, {"rubric_set_version", rubric_set_version}};
}

RewardBreakdown weighted_reward(const std::map<std::string, double>& scores, const RubricSet& set) {
    RewardBreakdown out;
    out.rubric_set_version = set.version;
    for (const auto& r : set.rubrics) {
        auto it = scores.find(r.id);
        if (it == scores.end()) throw Error("missing_score", "no score for rubric '" + r.id + "'");
        double s = it->second;
        if (!(s >= 0.0 && s <= 1.0))
            throw Error("score_out_of_range", "score " + std::to_string(s) + " for rubric '" + r.id + "'");
        out.per_rubric[r.id] = s;
        out.total += r.weight * s;
    }
    if (scores.size() != set.rubrics.size()) {
        for (const auto& [id, _] : scores)
            if (!set.contains(id)) throw Error("extra_score", "score for unknown rubric '" + id + "'");
    }
    return out;
}

}  // namespace amaris
