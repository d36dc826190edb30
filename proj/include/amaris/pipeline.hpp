#pragma once

#include <optional>
#include <string>
#include <vector>

#include "amaris/common.hpp"
#include "amaris/judge.hpp"
#include "amaris/rubric.hpp"

namespace amaris {

/// One policy output for one input at a training step.
struct Rollout {
    std::string rollout_id;
    ScopeKey scope;
    int step = 1;
    std::string input_text;
    std::string output_text;
    std::string supplement;  // ground-truth answer / references, may be empty
    json metadata = json::object();  // goal, current step, total steps, model size
    std::vector<std::string> exploit_tags;  // synthetic harness only
    double quality = 0.5;                   // synthetic quality hint

    json to_json() const;
    static Rollout from_json(const json& j);
};

/// Five-section structured diagnostic report for one rollout. The section
/// payload is kept as validated JSON (see the analyst stage schema).
struct RolloutAnalysis {
    std::string rollout_id;
    json content;  // the five sections

    bool hacking_detected() const;
    std::optional<std::string> behavior_label() const;

    /// Memory-document content: sections plus the rollout id.
    json to_content() const;
};

/// Step-level synthesis consumed by the updater.
struct BatchSummary {
    ScopeKey scope;
    int step = 0;
    json body;  // summarizer stage schema
    int n_analyses = 0;

    json to_content() const;
    static BatchSummary from_content(const ScopeKey& scope, const json& content);
};

struct ChunkSummary {
    int step = 0;
    int chunk_index = 0;
    std::vector<std::string> covered_rollout_ids;
    json body;

    json to_content() const;
};

/// Scores one rollout against the active set with exactly one scorer call.
RewardBreakdown score_rollout(const Rollout& rollout, const RubricSet& set, JudgeGateway& gateway);

/// Produces the five-section diagnostic report for one rollout.
RolloutAnalysis analyze_rollout(const Rollout& rollout, const RubricSet& set, JudgeGateway& gateway);

/// Step-level summarization. With |analyses| <= chunk_size this is a single
/// summarizer call; otherwise analyses are partitioned in rollout order
/// into contiguous chunks, summarized independently, and consolidated by
/// one meta-summarizer call into the same final summary format.
std::pair<BatchSummary, std::vector<ChunkSummary>> summarize_step(const std::vector<RolloutAnalysis>& analyses,
                                                                  JudgeGateway& gateway, int chunk_size,
                                                                  const ScopeKey& scope, int step);

/// Payload builders shared with tests and the scheduler.
json scorer_payload(const Rollout& rollout, const RubricSet& set);
json analyst_payload(const Rollout& rollout, const RubricSet& set);

}  // namespace amaris
