#include "amaris/pipeline.hpp"

#include <cmath>

namespace amaris {

json Rollout::to_json() const {
    return json{{"rollout_id", rollout_id}, {"scope", scope.to_json()},   {"step", step},
                {"input_text", input_text}, {"output_text", output_text}, {"supplement", supplement},
                {"metadata", metadata},     {"exploit_tags", exploit_tags}, {"quality", quality}};
}

Rollout Rollout::from_json(const json& j) {
    Rollout r;
    r.rollout_id = j.at("rollout_id").get<std::string>();
    r.scope = ScopeKey::from_json(j.at("scope"));
    r.step = j.at("step").get<int>();
    r.input_text = j.at("input_text").get<std::string>();
    r.output_text = j.value("output_text", "");
    r.supplement = j.value("supplement", "");
    r.metadata = j.value("metadata", json::object());
    r.exploit_tags = j.value("exploit_tags", std::vector<std::string>{});
    r.quality = j.value("quality", 0.5);
    return r;
}

bool RolloutAnalysis::hacking_detected() const {
    return content.at("reward_hacking").at("detected").get<bool>();
}

std::optional<std::string> RolloutAnalysis::behavior_label() const {
    const json& label = content.at("reward_hacking").at("behavior_label");
    if (label.is_string()) return label.get<std::string>();
    return std::nullopt;
}

json RolloutAnalysis::to_content() const {
    json c = content;
    c["rollout_id"] = rollout_id;
    return c;
}

json BatchSummary::to_content() const {
    json c = body;
    c["n_analyses"] = n_analyses;
    return c;
}

BatchSummary BatchSummary::from_content(const ScopeKey& scope, const json& content) {
    BatchSummary b;
    b.scope = scope;
    b.body = content;
    b.n_analyses = content.value("n_analyses", 0);
    b.body.erase("n_analyses");
    return b;
}

json ChunkSummary::to_content() const {
    json c;
    c["chunk_index"] = chunk_index;
    c["covered_rollout_ids"] = covered_rollout_ids;
    c["body"] = body;
    return c;
}

namespace {

void require_valid(const RubricSet& set) {
    auto violations = validate_set(set);
    if (!violations.empty())
        throw Error("invalid_set",
                    "rubric set fails validation: " + violations.front().rule +
                        (violations.size() > 1 ? " (+" + std::to_string(violations.size() - 1) + " more)" : ""));
}

bool ground_truth_mismatch(const Rollout& r) {
    if (r.supplement.empty() || r.output_text.empty()) return false;
    return to_lower(r.output_text).find(to_lower(r.supplement)) == std::string::npos;
}

json base_payload(const Rollout& rollout, const RubricSet& set) {
    return json{{"step", rollout.step},
                {"rollout_id", rollout.rollout_id},
                {"input", rollout.input_text},
                {"output", rollout.output_text},
                {"supplement", rollout.supplement},
                {"metadata", rollout.metadata},
                {"rubrics", set.to_json().at("rubrics")},
                {"exploit_tags", rollout.exploit_tags},
                {"quality", rollout.quality},
                {"gt_mismatch", ground_truth_mismatch(rollout)}};
}

}  // namespace

json scorer_payload(const Rollout& rollout, const RubricSet& set) { return base_payload(rollout, set); }

json analyst_payload(const Rollout& rollout, const RubricSet& set) { return base_payload(rollout, set); }

RewardBreakdown score_rollout(const Rollout& rollout, const RubricSet& set, JudgeGateway& gateway) {
    require_valid(set);
    json out = gateway.invoke(JudgeRole::scorer, scorer_payload(rollout, set));
    std::map<std::string, double> scores;
    for (const auto& [id, v] : out.at("scores").items()) scores[id] = v.get<double>();
    return weighted_reward(scores, set);
}

RolloutAnalysis analyze_rollout(const Rollout& rollout, const RubricSet& set, JudgeGateway& gateway) {
    require_valid(set);
    json out = gateway.invoke(JudgeRole::analyst, analyst_payload(rollout, set));
    out.erase("additional");
    return RolloutAnalysis{rollout.rollout_id, std::move(out)};
}

std::pair<BatchSummary, std::vector<ChunkSummary>> summarize_step(const std::vector<RolloutAnalysis>& analyses,
                                                                  JudgeGateway& gateway, int chunk_size,
                                                                  const ScopeKey& scope, int step) {
    if (analyses.empty()) throw Error("empty_input", "summarize_step needs at least one analysis");
    if (chunk_size < 1) throw Error("invalid_argument", "chunk_size must be >= 1");

    auto analyses_json = [](auto begin, auto end) {
        json arr = json::array();
        for (auto it = begin; it != end; ++it) arr.push_back(it->content);
        return arr;
    };

    BatchSummary summary;
    summary.scope = scope;
    summary.step = step;
    summary.n_analyses = static_cast<int>(analyses.size());
    std::vector<ChunkSummary> chunks;

    if (analyses.size() <= static_cast<size_t>(chunk_size)) {
        json payload{{"step", step}, {"scope", scope.to_json()}, {"analyses", analyses_json(analyses.begin(), analyses.end())}};
        json out = gateway.invoke(JudgeRole::summarizer, payload);
        out.erase("additional");
        summary.body = std::move(out);
        return {std::move(summary), std::move(chunks)};
    }

    // contiguous partition in rollout order, ceil(n / chunk_size) chunks
    const size_t n = analyses.size();
    const size_t n_chunks = (n + static_cast<size_t>(chunk_size) - 1) / static_cast<size_t>(chunk_size);
    json chunk_bodies = json::array();
    for (size_t k = 0; k < n_chunks; ++k) {
        size_t lo = k * static_cast<size_t>(chunk_size);
        size_t hi = std::min(n, lo + static_cast<size_t>(chunk_size));
        json payload{{"step", step},
                     {"scope", scope.to_json()},
                     {"chunk_index", static_cast<int>(k)},
                     {"analyses", analyses_json(analyses.begin() + static_cast<std::ptrdiff_t>(lo),
                                                analyses.begin() + static_cast<std::ptrdiff_t>(hi))}};
        json out = gateway.invoke(JudgeRole::summarizer, payload);
        out.erase("additional");
        ChunkSummary chunk;
        chunk.step = step;
        chunk.chunk_index = static_cast<int>(k);
        for (size_t i = lo; i < hi; ++i) chunk.covered_rollout_ids.push_back(analyses[i].rollout_id);
        chunk.body = out;
        chunk_bodies.push_back(std::move(out));
        chunks.push_back(std::move(chunk));
    }

    json meta_payload{{"step", step}, {"scope", scope.to_json()}, {"chunk_summaries", chunk_bodies}};
    json out = gateway.invoke(JudgeRole::meta_summarizer, meta_payload);
    out.erase("additional");
    summary.body = std::move(out);
    return {std::move(summary), std::move(chunks)};
}

}  // namespace amaris
