#pragma once

#include <map>
#include <string>
#include <vector>

#include "amaris/common.hpp"
#include "amaris/pipeline.hpp"

namespace amaris {

/// Simulated-policy state: exploit propensities that respond to reward,
/// and a quality level that drives curriculum-saturation signals. A
/// multiplicative-weights stand-in for policy-gradient response, with no
/// claim of fidelity to real RL dynamics.
struct BehaviorProfile {
    std::map<std::string, double> propensities;  // behavior label (incl. "clean") -> [0,1], sums to 1
    double adaptation_rate = 0.8;                // eta
    double quality_level = 0.3;
    double quality_increment = 0.05;
    uint64_t seed = 1;

    static BehaviorProfile reference();

    json to_json() const;
    static BehaviorProfile from_json(const json& j);
};

struct SyntheticTask {
    std::string task_id;
    std::string input_text;
    std::string ground_truth;
    std::string domain;  // science | medicine | instruction_following | creative_writing
    std::vector<Rubric> annotated_rubrics;  // optional per-instance seed rubrics

    json to_json() const;
    static SyntheticTask from_json(const json& j);
};

std::vector<SyntheticTask> load_tasks(const std::string& path);
std::vector<SyntheticTask> builtin_tasks();

/// Mean reward observed for rollouts carrying one behavior vs clean ones.
struct BehaviorFeedback {
    std::map<std::string, double> mean_reward_by_behavior;
    double mean_reward_clean = 0.0;
    bool has_clean = false;
};

/// Deterministic batch generation: batch_size rollouts over
/// batch_size / samples_per_query tasks (cycled by step), exploit tags
/// sampled from the profile's propensities. Identical (profile, step,
/// seed) yields identical batches.
std::vector<Rollout> generate_batch(const BehaviorProfile& profile, const std::vector<SyntheticTask>& tasks,
                                    int step, int batch_size, int samples_per_query, ScopeKey::Kind scope_kind);

/// Multiplicative-weights response:
/// propensity_b <- propensity_b * exp(eta * (reward_b - reward_clean)),
/// renormalized; quality rises by a fixed increment when clean rollouts
/// dominate rewards.
BehaviorProfile adapt_profile(const BehaviorProfile& profile, const BehaviorFeedback& feedback);

/// Feedback extraction helper used by the training loop.
BehaviorFeedback behavior_feedback(const std::vector<Rollout>& rollouts, const std::vector<double>& rewards);

}  // namespace amaris
