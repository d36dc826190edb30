#include "amaris/scheduler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

namespace amaris {

std::string to_string(JobState s) {
    switch (s) {
        case JobState::queued: return "queued";
        case JobState::analyzing: return "analyzing";
        case JobState::summarizing: return "summarizing";
        case JobState::updating: return "updating";
        case JobState::committed: return "committed";
        case JobState::failed: return "failed";
        case JobState::skipped: return "skipped";
    }
    return "queued";
}

bool is_terminal(JobState s) {
    return s == JobState::committed || s == JobState::failed || s == JobState::skipped;
}

GateDecision gate_staleness(const VersionClock& clock, int t, int terminal_through_step) {
    if (t < 1) throw Error("invalid_argument", "step must be >= 1");
    const int required = t - 1 - clock.staleness_bound;
    if (terminal_through_step >= required) return {true, 0};
    return {false, required};
}

VersionClock activate_version(const VersionClock& clock, const RubricSet& new_set) {
    if (new_set.version != clock.active_version + 1)
        throw Error("version_gap", "cannot activate version " + std::to_string(new_set.version) +
                                       " over active " + std::to_string(clock.active_version));
    VersionClock next = clock;
    next.active_version = new_set.version;
    return next;
}

std::map<ScopeKey, std::vector<Rollout>> route_scope(const std::vector<Rollout>& batch) {
    std::map<ScopeKey, std::vector<Rollout>> groups;
    for (const auto& r : batch) groups[r.scope].push_back(r);
    return groups;
}

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
    if (mode != "async" && mode != "sync") throw Error("invalid_config", "mode must be async or sync");
    if (mode == "sync" && staleness_bound != 0)
        throw Error("invalid_config", "sync mode forces staleness_bound = 0");
    if (staleness_bound < 0) throw Error("invalid_config", "staleness_bound must be >= 0");
    if (update_interval < 1) throw Error("invalid_config", "update_interval must be >= 1");
    if (total_steps < 1) throw Error("invalid_config", "total_steps must be >= 1");
    if (batch_size < 1 || samples_per_query < 1 || batch_size % samples_per_query != 0)
        throw Error("invalid_config", "batch_size must be a positive multiple of samples_per_query");
    if (chunk_size < 1) throw Error("invalid_config", "chunk_size must be >= 1");
    if (static_window_n < 0) throw Error("invalid_config", "static_N must be >= 0");
    if (dynamic_queries_k < 0) throw Error("invalid_config", "dynamic_K must be >= 0");
    if (docs_per_query_d < 1) throw Error("invalid_config", "docs_per_query_D must be >= 1");
    if (scope != "global" && scope != "per_instance")
        throw Error("invalid_config", "scope must be global or per_instance");
    if (backend != "scripted" && backend != "http")
        throw Error("invalid_config", "backend must be scripted or http");
    if (!(sample_fraction > 0.0 && sample_fraction <= 1.0))
        throw Error("invalid_config", "sample_fraction must be in (0, 1]");
    if (visibility_lag_steps < 1) throw Error("invalid_config", "visibility_lag_steps must be >= 1");
}

json RunConfig::to_json() const {
    return json{{"mode", mode},
                {"staleness_bound", staleness_bound},
                {"batch_size", batch_size},
                {"samples_per_query", samples_per_query},
                {"chunk_size", chunk_size},
                {"static_N", static_window_n},
                {"dynamic_K", dynamic_queries_k},
                {"docs_per_query_D", docs_per_query_d},
                {"update_interval", update_interval},
                {"total_steps", total_steps},
                {"scope", scope},
                {"backend", backend},
                {"profiling", profiling},
                {"seed", seed},
                {"scenario", scenario_path},
                {"tasks", tasks_path},
                {"goal", goal},
                {"sample_fraction", sample_fraction},
                {"visibility_lag_steps", visibility_lag_steps},
                {"stage_latency_ms", stage_latency_ms},
                {"gate_timeout_ms", gate_timeout_ms},
                {"context_char_budget", context_char_budget},
                {"profile", profile.to_json()}};
}

RunConfig RunConfig::from_json(const json& j) {
    static const std::set<std::string> known = {
        "mode",          "staleness_bound", "batch_size",    "samples_per_query", "chunk_size",
        "static_N",      "dynamic_K",       "docs_per_query_D", "update_interval", "total_steps",
        "scope",         "backend",         "profiling",     "seed",              "scenario",
        "tasks",         "goal",            "sample_fraction", "visibility_lag_steps", "stage_latency_ms",
        "gate_timeout_ms", "context_char_budget", "profile"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw Error("invalid_config", "unknown config key '" + k + "'");

    RunConfig c;
    c.mode = j.value("mode", c.mode);
    c.staleness_bound = j.value("staleness_bound", c.mode == "sync" ? 0 : c.staleness_bound);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.samples_per_query = j.value("samples_per_query", c.samples_per_query);
    c.chunk_size = j.value("chunk_size", c.chunk_size);
    c.static_window_n = j.value("static_N", c.static_window_n);
    c.dynamic_queries_k = j.value("dynamic_K", c.dynamic_queries_k);
    c.docs_per_query_d = j.value("docs_per_query_D", c.docs_per_query_d);
    c.update_interval = j.value("update_interval", c.update_interval);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.scope = j.value("scope", c.scope);
    c.backend = j.value("backend", c.backend);
    c.profiling = j.value("profiling", c.profiling);
    c.seed = j.value("seed", c.seed);
    c.scenario_path = j.value("scenario", c.scenario_path);
    c.tasks_path = j.value("tasks", c.tasks_path);
    c.goal = j.value("goal", c.goal);
    c.sample_fraction = j.value("sample_fraction", c.sample_fraction);
    c.visibility_lag_steps = j.value("visibility_lag_steps", c.mode == "sync" ? 1 : c.visibility_lag_steps);
    c.stage_latency_ms = j.value("stage_latency_ms", c.stage_latency_ms);
    c.gate_timeout_ms = j.value("gate_timeout_ms", c.gate_timeout_ms);
    c.context_char_budget = j.value("context_char_budget", c.context_char_budget);
    if (j.contains("profile")) c.profile = BehaviorProfile::from_json(j.at("profile"));
    c.profile.seed = c.seed;
    c.validate();
    return c;
}

json StepLogEntry::to_json(bool profiling) const {
    return json{{"step", step},
                {"scope", scope_str},
                {"scored_version", scored_version},
                {"reward_mean", reward_mean},
                {"reward_std", reward_std},
                {"job_state", job_state},
                {"stage_ms", profiling ? stage_ms : json::object()},
                {"stage_tokens", profiling ? stage_tokens : json::object()}};
}

void RunResult::write_runlog(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("io_error", "cannot write '" + path + "'");
    for (const auto& e : log) out << e.to_json(profiling).dump() << "\n";
}

void RunResult::write_oplog(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("io_error", "cannot write '" + path + "'");
    for (const auto& line : oplog_lines) out << line.dump() << "\n";
}

RubricSet cold_start_seed_set(const std::string& goal) {
    RubricSet set;
    set.scope = ScopeKey::global();
    set.version = 1;
    Rubric anchor;
    anchor.id = "anchor_goal";
    anchor.text = "Reward responses that genuinely advance the training goal (" + goal +
                  ") with correct, safe and instruction-compliant output.";
    anchor.weight = 1.0;
    anchor.category = RubricCategory::correctness;
    anchor.anchor = true;
    anchor.created_step = 0;
    set.rubrics.push_back(std::move(anchor));
    return set;
}

RubricSet per_instance_seed_set(const SyntheticTask& task) {
    RubricSet set;
    set.scope = ScopeKey::per_instance_of(task.input_text);
    set.version = 1;
    if (!task.annotated_rubrics.empty()) {
        set.rubrics = task.annotated_rubrics;
        return set;
    }
    Rubric anchor;
    anchor.id = "anchor_correct";
    anchor.text = "Reward a correct, well-supported answer to: " + task.input_text;
    anchor.weight = 1.0;
    anchor.category = RubricCategory::correctness;
    anchor.anchor = true;
    set.rubrics.push_back(anchor);
    Rubric follow;
    follow.id = "if_base";
    follow.text = "Follow all explicit instructions of the task.";
    follow.weight = 0.75;
    follow.category = RubricCategory::instruction_following;
    set.rubrics.push_back(follow);
    return set;
}

// ---------------------------------------------------------------------------
// Engine

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Job {
    int job_id = 0;
    ScopeKey scope;
    int step = 0;
    std::vector<Rollout> rollouts;
    RubricSet scoring_set;  // snapshot that scored these rollouts
    JobState state = JobState::queued;
    std::optional<RubricSet> produced_set;
    std::optional<UpdateRecord> record;
    std::string error;
    json stage_ms = json::object();
};

struct ScopeState {
    bool initialized = false;
    RubricSet active;
    RubricSet tip;  // newest produced version; active trails it by at most the bound
    VersionClock clock;
    std::vector<Job*> jobs;  // submission order, steps strictly increasing
    size_t adopted = 0;      // adoption frontier into `jobs`
    std::vector<Rollout> pending;  // per-instance: new rollouts since last update
};

class Engine {
public:
    Engine(const RunConfig& config, JudgeGateway& gateway, MemoryStore& memory,
           const std::vector<SyntheticTask>& tasks)
        : config_(config), gateway_(gateway), memory_(memory), tasks_(tasks), profile_(config.profile) {
        updater_options_.context_char_budget = config.context_char_budget;
    }

    RunResult run();

private:
    void worker_main();
    void run_job(Job& job);
    void sleep_stage(const std::string& stage) const;
    double stage_latency(const std::string& stage) const;

    ScopeState& scope_state(const ScopeKey& scope);
    void init_scope(const ScopeKey& scope, const std::vector<Rollout>& group);
    void cold_start(ScopeState& ss, const std::vector<Rollout>& group, StepLogEntry& entry);

    int terminal_through_locked(const ScopeState& ss) const;
    void wait_terminal_through(const ScopeKey& scope, int step);
    void adopt_up_to(const ScopeKey& scope, int step);

    std::vector<RolloutAnalysis> analyze_group(const std::vector<Rollout>& group, const RubricSet& set);

    const RunConfig& config_;
    JudgeGateway& gateway_;
    MemoryStore& memory_;
    const std::vector<SyntheticTask>& tasks_;
    BehaviorProfile profile_;
    UpdaterOptions updater_options_;

    std::mutex mu_;
    std::condition_variable cv_;
    std::vector<std::unique_ptr<Job>> jobs_;
    std::deque<Job*> queue_;
    bool stop_ = false;
    std::map<ScopeKey, ScopeState> scopes_;
    std::vector<json> oplog_lines_;
    std::vector<UpdateRecord> records_;
    std::map<std::string, const SyntheticTask*> task_by_instance_;
};

double Engine::stage_latency(const std::string& stage) const {
    return config_.stage_latency_ms.value(stage, 0.0);
}

void Engine::sleep_stage(const std::string& stage) const {
    double ms = stage_latency(stage);
    if (ms > 0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

ScopeState& Engine::scope_state(const ScopeKey& scope) { return scopes_[scope]; }

void Engine::init_scope(const ScopeKey& scope, const std::vector<Rollout>& group) {
    ScopeState& ss = scopes_[scope];
    if (ss.initialized) return;
    ss.clock.staleness_bound = config_.staleness_bound;
    if (scope.kind == ScopeKey::Kind::global) {
        ss.active = cold_start_seed_set(config_.goal);
    } else {
        auto it = task_by_instance_.find(scope.instance_key);
        if (it == task_by_instance_.end()) throw Error("invalid_config", "no task for instance scope");
        ss.active = per_instance_seed_set(*it->second);
    }
    (void)group;
    ss.tip = ss.active;
    ss.initialized = true;
}

std::vector<RolloutAnalysis> Engine::analyze_group(const std::vector<Rollout>& group, const RubricSet& set) {
    size_t n = static_cast<size_t>(std::ceil(config_.sample_fraction * static_cast<double>(group.size())));
    n = std::clamp<size_t>(n, 1, group.size());
    std::vector<RolloutAnalysis> analyses;
    analyses.reserve(n);
    for (size_t i = 0; i < n; ++i) analyses.push_back(analyze_rollout(group[i], set, gateway_));
    return analyses;
}

// The global cold start: the first-step batch is analyzed and summarized
// against the seed set with an empty memory, and the resulting update
// defines the set that scores step 1 synchronously.
void Engine::cold_start(ScopeState& ss, const std::vector<Rollout>& group, StepLogEntry& entry) {
    auto t0 = Clock::now();
    sleep_stage("individual_analysis");
    std::vector<RolloutAnalysis> analyses = analyze_group(group, ss.active);
    entry.stage_ms["individual_analysis"] = ms_since(t0);

    t0 = Clock::now();
    sleep_stage("batch_summarization");
    auto [summary, chunks] = summarize_step(analyses, gateway_, config_.chunk_size, ss.active.scope, 1);
    entry.stage_ms["batch_summarization"] = ms_since(t0);

    t0 = Clock::now();
    sleep_stage("query_generation");
    sleep_stage("memory_retrieval");
    sleep_stage("rubric_update");
    CycleProfile prof;
    UpdateCycleResult cycle =
        run_update_cycle(ss.active.scope, 1, ss.active, summary, memory_, gateway_, config_.static_window_n,
                         config_.dynamic_queries_k, config_.docs_per_query_d, updater_options_, &prof);
    entry.stage_ms["query_generation"] = prof.query_ms + stage_latency("query_generation");
    entry.stage_ms["memory_retrieval"] = prof.retrieval_ms + stage_latency("memory_retrieval");
    entry.stage_ms["rubric_update"] = prof.update_ms + stage_latency("rubric_update");
    (void)t0;

    std::vector<json> analyses_content, chunks_content;
    for (const auto& a : analyses) analyses_content.push_back(a.to_content());
    for (const auto& c : chunks) chunks_content.push_back(c.to_content());
    memory_.commit_step(ss.active.scope, 1, analyses_content, chunks_content, summary.to_content(),
                        cycle.record.to_content());

    auto job = std::make_unique<Job>();
    job->job_id = static_cast<int>(jobs_.size());
    job->scope = ss.active.scope;
    job->step = 1;
    job->scoring_set = ss.active;
    job->state = JobState::committed;
    job->produced_set = cycle.set;
    job->record = cycle.record;
    job->stage_ms = entry.stage_ms;

    std::lock_guard<std::mutex> lock(mu_);
    ss.clock = activate_version(ss.clock, cycle.set);
    ss.active = cycle.set;
    ss.tip = cycle.set;
    ss.clock.latest_submitted_step = 1;
    ss.clock.latest_completed_step = 1;
    ss.jobs.push_back(job.get());
    ss.adopted = 1;
    jobs_.push_back(std::move(job));
    for (const auto& line : cycle.oplog.to_jsonl()) oplog_lines_.push_back(line);
    records_.push_back(cycle.record);
}

int Engine::terminal_through_locked(const ScopeState& ss) const {
    int through = 1 << 30;
    for (const Job* job : ss.jobs) {
        if (!is_terminal(job->state)) {
            through = job->step - 1;
            break;
        }
    }
    return through;
}

void Engine::wait_terminal_through(const ScopeKey& scope, int step) {
    std::unique_lock<std::mutex> lock(mu_);
    ScopeState& ss = scopes_[scope];
    auto done = [&] { return terminal_through_locked(ss) >= step; };
    if (!cv_.wait_for(lock, std::chrono::milliseconds(config_.gate_timeout_ms), done))
        throw Error("deadlock_timeout",
                    "jobs through step " + std::to_string(step) + " did not reach a terminal state");
}

void Engine::adopt_up_to(const ScopeKey& scope, int step) {
    wait_terminal_through(scope, step);
    std::lock_guard<std::mutex> lock(mu_);
    ScopeState& ss = scopes_[scope];
    while (ss.adopted < ss.jobs.size() && ss.jobs[ss.adopted]->step <= step) {
        Job* job = ss.jobs[ss.adopted];
        if (job->state == JobState::committed && job->produced_set) {
            ss.clock = activate_version(ss.clock, *job->produced_set);
            ss.active = *job->produced_set;
        }
        ss.clock.latest_completed_step = std::max(ss.clock.latest_completed_step, job->step);
        ++ss.adopted;
    }
}

void Engine::worker_main() {
    for (;;) {
        Job* job = nullptr;
        {
            std::unique_lock<std::mutex> lock(mu_);
            cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
            if (queue_.empty()) return;
            job = queue_.front();
            queue_.pop_front();
            job->state = JobState::analyzing;
        }
        cv_.notify_all();
        run_job(*job);
        cv_.notify_all();
    }
}

void Engine::run_job(Job& job) {
    auto set_state = [&](JobState s) {
        std::lock_guard<std::mutex> lock(mu_);
        job.state = s;
    };

    std::vector<RolloutAnalysis> analyses;
    BatchSummary summary;
    std::vector<ChunkSummary> chunks;
    try {
        auto t0 = Clock::now();
        sleep_stage("individual_analysis");
        analyses = analyze_group(job.rollouts, job.scoring_set);
        job.stage_ms["individual_analysis"] = ms_since(t0);

        set_state(JobState::summarizing);
        t0 = Clock::now();
        sleep_stage("batch_summarization");
        std::tie(summary, chunks) = summarize_step(analyses, gateway_, config_.chunk_size, job.scope, job.step);
        job.stage_ms["batch_summarization"] = ms_since(t0);
    } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu_);
        job.state = JobState::failed;
        job.error = e.what();
        return;
    }

    set_state(JobState::updating);
    std::optional<UpdateCycleResult> cycle;
    std::string cycle_error;
    try {
        RubricSet tip;
        {
            std::lock_guard<std::mutex> lock(mu_);
            tip = scopes_[job.scope].tip;
        }
        sleep_stage("query_generation");
        sleep_stage("memory_retrieval");
        sleep_stage("rubric_update");
        CycleProfile prof;
        cycle = run_update_cycle(job.scope, job.step, tip, summary, memory_, gateway_, config_.static_window_n,
                                 config_.dynamic_queries_k, config_.docs_per_query_d, updater_options_, &prof);
        job.stage_ms["query_generation"] = prof.query_ms + stage_latency("query_generation");
        job.stage_ms["memory_retrieval"] = prof.retrieval_ms + stage_latency("memory_retrieval");
        job.stage_ms["rubric_update"] = prof.update_ms + stage_latency("rubric_update");
    } catch (const std::exception& e) {
        cycle_error = e.what();
    }

    std::vector<json> analyses_content, chunks_content;
    for (const auto& a : analyses) analyses_content.push_back(a.to_content());
    for (const auto& c : chunks) chunks_content.push_back(c.to_content());
    try {
        memory_.commit_step(job.scope, job.step, analyses_content, chunks_content, summary.to_content(),
                            cycle ? std::optional<json>(cycle->record.to_content()) : std::nullopt);
    } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu_);
        job.state = JobState::failed;
        job.error = e.what();
        return;
    }

    std::lock_guard<std::mutex> lock(mu_);
    if (cycle) {
        scopes_[job.scope].tip = cycle->set;
        job.produced_set = cycle->set;
        job.record = cycle->record;
        for (const auto& line : cycle->oplog.to_jsonl()) oplog_lines_.push_back(line);
        records_.push_back(cycle->record);
        job.state = JobState::committed;
    } else {
        // summary and analyses are committed; the step is update-skipped
        job.state = JobState::skipped;
        job.error = cycle_error;
    }
}

RunResult Engine::run() {
    for (const auto& t : tasks_) task_by_instance_[ScopeKey::per_instance_of(t.input_text).instance_key] = &t;

    std::thread worker([this] { worker_main(); });
    RunResult result;
    result.profiling = config_.profiling;
    const ScopeKey::Kind scope_kind =
        config_.scope == "global" ? ScopeKey::Kind::global : ScopeKey::Kind::per_instance;

    // (step, scope) -> log index, for attaching job outcomes afterwards
    std::map<std::pair<int, std::string>, size_t> entry_index;

    try {
        for (int t = 1; t <= config_.total_steps; ++t) {
            std::vector<Rollout> batch = generate_batch(profile_, tasks_, t, config_.batch_size,
                                                        config_.samples_per_query, scope_kind);
            auto groups = route_scope(batch);
            std::vector<Rollout> scored_rollouts;
            std::vector<double> scored_rewards;

            bool first_group_of_step = true;
            for (auto& [scope, group] : groups) {
                init_scope(scope, group);
                ScopeState& ss = scopes_[scope];

                StepLogEntry entry;
                entry.step = t;
                entry.scope_str = scope.str();

                if (scope.kind == ScopeKey::Kind::global && t == 1) {
                    cold_start(ss, group, entry);
                    entry.job_state = "committed";
                } else {
                    // staleness gate, then deterministic adoption of results
                    {
                        std::unique_lock<std::mutex> lock(mu_);
                        GateDecision gate = gate_staleness(ss.clock, t, terminal_through_locked(ss));
                        lock.unlock();
                        if (!gate.proceed) wait_terminal_through(scope, gate.wait_for_step);
                    }
                    const int join_through =
                        std::max(t - config_.visibility_lag_steps, t - 1 - config_.staleness_bound);
                    adopt_up_to(scope, join_through);
                }

                auto score_t0 = Clock::now();
                RubricSet scoring_set;
                {
                    std::lock_guard<std::mutex> lock(mu_);
                    scoring_set = ss.active;
                }
                double sum = 0.0, sum_sq = 0.0;
                for (const auto& r : group) {
                    RewardBreakdown breakdown = score_rollout(r, scoring_set, gateway_);
                    sum += breakdown.total;
                    sum_sq += breakdown.total * breakdown.total;
                    scored_rollouts.push_back(r);
                    scored_rewards.push_back(breakdown.total);
                }
                entry.scored_version = scoring_set.version;
                entry.reward_mean = sum / static_cast<double>(group.size());
                double var = sum_sq / static_cast<double>(group.size()) - entry.reward_mean * entry.reward_mean;
                entry.reward_std = std::sqrt(std::max(0.0, var));
                entry.stage_ms["scoring"] = ms_since(score_t0);
                entry.first_of_step = first_group_of_step;
                first_group_of_step = false;

                // update trigger
                bool submit = false;
                std::vector<Rollout> job_rollouts;
                if (scope.kind == ScopeKey::Kind::global) {
                    submit = (t - 1) % config_.update_interval == 0 && t > 1;
                    if (submit) job_rollouts = group;
                } else {
                    ss.pending.insert(ss.pending.end(), group.begin(), group.end());
                    bool in_flight = false;
                    {
                        std::lock_guard<std::mutex> lock(mu_);
                        for (const Job* job : ss.jobs)
                            if (!is_terminal(job->state)) in_flight = true;
                    }
                    if (!in_flight && static_cast<int>(ss.pending.size()) >= config_.samples_per_query) {
                        submit = true;
                        job_rollouts = std::move(ss.pending);
                        ss.pending.clear();
                    }
                }
                if (submit) {
                    auto job = std::make_unique<Job>();
                    job->job_id = static_cast<int>(jobs_.size());
                    job->scope = scope;
                    job->step = t;
                    job->rollouts = std::move(job_rollouts);
                    job->scoring_set = scoring_set;
                    {
                        std::lock_guard<std::mutex> lock(mu_);
                        ss.jobs.push_back(job.get());
                        ss.clock.latest_submitted_step = t;
                        queue_.push_back(job.get());
                        jobs_.push_back(std::move(job));
                    }
                    cv_.notify_all();
                    entry.job_state = "queued";
                }

                entry_index[{t, entry.scope_str}] = result.log.size();
                result.log.push_back(std::move(entry));
            }

            // simulated policy responds to the step's rewards
            profile_ = adapt_profile(profile_, behavior_feedback(scored_rollouts, scored_rewards));
        }

        // drain: join every job and adopt all remaining results in order
        for (auto& [scope, ss] : scopes_) {
            if (!ss.jobs.empty()) adopt_up_to(scope, ss.jobs.back()->step);
        }
    } catch (...) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        worker.join();
        throw;
    }
    {
        std::lock_guard<std::mutex> lock(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    worker.join();

    // attach job outcomes to their submission-step entries
    for (const auto& jp : jobs_) {
        auto it = entry_index.find({jp->step, jp->scope.str()});
        if (it != entry_index.end()) {
            StepLogEntry& entry = result.log[it->second];
            entry.job_state = to_string(jp->state);
            for (const auto& [k, v] : jp->stage_ms.items()) entry.stage_ms[k] = v;
        }
        JobSnapshot snap;
        snap.job_id = jp->job_id;
        snap.scope = jp->scope;
        snap.step = jp->step;
        snap.state = jp->state;
        if (jp->produced_set) snap.produced_version = jp->produced_set->version;
        snap.error = jp->error;
        result.jobs.push_back(std::move(snap));
    }

    // per-step token accounting by role, attributed to the first group entry
    std::map<int, std::map<std::string, long>> tokens_by_step;
    for (const auto& rec : gateway_.call_log()) {
        if (!rec.ok) continue;
        std::string bucket;
        switch (rec.role) {
            case JudgeRole::analyst: bucket = "individual_analysis"; break;
            case JudgeRole::summarizer:
            case JudgeRole::meta_summarizer: bucket = "batch_summarization"; break;
            case JudgeRole::query_generator: bucket = "query_generation"; break;
            case JudgeRole::updater: bucket = "rubric_update"; break;
            default: continue;  // scorer cost belongs to the RL loop, not the pipeline
        }
        tokens_by_step[rec.step][bucket] += rec.tokens;
    }
    for (auto& entry : result.log) {
        if (!entry.first_of_step) continue;
        json tokens{{"individual_analysis", 0}, {"batch_summarization", 0}, {"query_generation", 0},
                    {"memory_retrieval", 0},    {"rubric_update", 0}};
        auto it = tokens_by_step.find(entry.step);
        if (it != tokens_by_step.end())
            for (const auto& [bucket, n] : it->second) tokens[bucket] = n;
        entry.stage_tokens = std::move(tokens);
    }

    for (auto& [scope, ss] : scopes_) {
        RubricSet initial = scope.kind == ScopeKey::Kind::global ? cold_start_seed_set(config_.goal) : RubricSet{};
        if (scope.kind == ScopeKey::Kind::per_instance) {
            auto it = task_by_instance_.find(scope.instance_key);
            if (it != task_by_instance_.end()) initial = per_instance_seed_set(*it->second);
        }
        result.initial_sets[scope] = initial;
        result.final_sets[scope] = ss.active;
    }
    result.oplog_lines = oplog_lines_;
    result.records = records_;
    result.final_profile = profile_;
    return result;
}

}  // namespace

RunResult run_training_loop(const RunConfig& config, JudgeGateway& gateway, MemoryStore& memory,
                            const std::vector<SyntheticTask>& tasks) {
    config.validate();
    Engine engine(config, gateway, memory, tasks);
    return engine.run();
}

}  // namespace amaris
