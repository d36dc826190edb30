#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "amaris/harness.hpp"
#include "amaris/judge.hpp"
#include "amaris/memory.hpp"
#include "amaris/pipeline.hpp"
#include "amaris/updater.hpp"

namespace amaris {

enum class JobState { queued, analyzing, summarizing, updating, committed, failed, skipped };

std::string to_string(JobState s);
bool is_terminal(JobState s);

/// Per-scope view of version progress and the staleness bound.
struct VersionClock {
    int active_version = 1;
    int latest_submitted_step = 0;
    int latest_completed_step = 0;
    int staleness_bound = 1;
};

struct GateDecision {
    bool proceed = true;
    int wait_for_step = 0;  // meaningful when !proceed
};

/// Gate predicate: scoring step t may proceed iff every job submitted at
/// steps <= t - 1 - staleness_bound is terminal. `terminal_through_step`
/// is the highest step S with all jobs of step <= S terminal.
GateDecision gate_staleness(const VersionClock& clock, int t, int terminal_through_step);

/// Atomic version swap; the new set must be exactly one version ahead.
/// Throws version_gap otherwise.
VersionClock activate_version(const VersionClock& clock, const RubricSet& new_set);

/// Partitions a batch by scope key. Global scope yields one group.
std::map<ScopeKey, std::vector<Rollout>> route_scope(const std::vector<Rollout>& batch);

struct RunConfig {
    std::string mode = "async";  // async | sync (sync forces staleness_bound 0)
    int staleness_bound = 1;
    int batch_size = 16;
    int samples_per_query = 4;
    int chunk_size = 8;
    int static_window_n = 4;   // N: recent step summaries
    int dynamic_queries_k = 10;  // K: retrieval queries per update
    int docs_per_query_d = 3;  // D: documents per query
    int update_interval = 1;   // global scope: update when (t-1) % interval == 0
    int total_steps = 40;
    std::string scope = "global";     // global | per_instance
    std::string backend = "scripted";  // scripted | http
    bool profiling = false;
    uint64_t seed = 1;
    std::string scenario_path;  // empty -> built-in reference scenario
    std::string tasks_path;     // empty -> built-in task corpus
    std::string goal = "maximize genuine response quality across domains";
    double sample_fraction = 1.0;  // fraction of rollouts analyzed per step
    // A job submitted at step tau is joined and its result adopted at steps
    // >= tau + visibility_lag. Lag 1 models an instantaneous pipeline (the
    // result is active for the next step); larger lags exhibit bounded
    // staleness. The gate floor always dominates: jobs the bound requires
    // are waited for regardless of lag.
    int visibility_lag_steps = 1;
    json stage_latency_ms = json::object();  // injected per-stage sleeps
    int gate_timeout_ms = 60000;
    int context_char_budget = 20000;
    BehaviorProfile profile = BehaviorProfile::reference();

    void validate() const;  // throws invalid_config
    json to_json() const;
    static RunConfig from_json(const json& j);
};

struct StepLogEntry {
    int step = 0;
    std::string scope_str;
    int scored_version = 0;
    double reward_mean = 0.0;
    double reward_std = 0.0;
    std::string job_state = "none";
    json stage_ms = json::object();
    json stage_tokens = json::object();
    bool first_of_step = true;  // token accounting attaches to the first group of a step

    json to_json(bool profiling) const;
};

struct JobSnapshot {
    int job_id = 0;
    ScopeKey scope;
    int step = 0;
    JobState state = JobState::queued;
    std::optional<int> produced_version;
    std::string error;
};

struct RunResult {
    std::vector<StepLogEntry> log;
    std::map<ScopeKey, RubricSet> initial_sets;
    std::map<ScopeKey, RubricSet> final_sets;
    std::vector<json> oplog_lines;
    std::vector<UpdateRecord> records;  // in commit order
    std::vector<JobSnapshot> jobs;
    BehaviorProfile final_profile;
    bool profiling = false;

    void write_runlog(const std::string& path) const;
    void write_oplog(const std::string& path) const;
};

/// Runs the full loop: score each step with the scope's active set, run the
/// analysis -> summary -> update pipeline in the background, enforce the
/// staleness bound, and route scopes. The global scope cold-starts at t=1
/// with a synchronous cycle against a seed set derived from the goal.
RunResult run_training_loop(const RunConfig& config, JudgeGateway& gateway, MemoryStore& memory,
                            const std::vector<SyntheticTask>& tasks);

/// Seed set used before the global cold-start cycle: one provisional
/// anchor rubric derived from the training goal.
RubricSet cold_start_seed_set(const std::string& goal);

/// Version-1 set for a per-instance scope: the task's annotated rubrics
/// verbatim, or a small default when the corpus carries none.
RubricSet per_instance_seed_set(const SyntheticTask& task);

}  // namespace amaris
