#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "amaris/common.hpp"

namespace amaris {

// The seven LLM roles of the improvement loop. Each role binds to one
// prompt template and one structured-output schema.
enum class JudgeRole {
    scorer,
    analyst,
    summarizer,
    meta_summarizer,
    query_generator,
    updater,
    rubric_quality,
};

std::string to_string(JudgeRole r);
JudgeRole judge_role_from_string(const std::string& s);
const std::vector<JudgeRole>& all_judge_roles();

// Suboptimal-behavior vocabulary used by analyses and the synthetic
// harness. Free-text labels are allowed with an "other" prefix.
const std::vector<std::string>& behavior_taxonomy();
bool is_valid_behavior_label(const std::string& label);

/// Prompt text with bracketed [PLACEHOLDER] fields.
struct PromptTemplate {
    JudgeRole role = JudgeRole::scorer;
    std::string body;
    std::set<std::string> required_placeholders;
};

/// Deterministic substitution of [NAME] fields. Required placeholders must
/// be bound; unbound optional ones render as empty sections. The result
/// never contains an unresolved bracket field.
std::string render_prompt(const PromptTemplate& tmpl, const std::map<std::string, std::string>& bindings);

/// Built-in template for a role, authored to the stage's content contract.
const PromptTemplate& default_template(JudgeRole role);

/// Strict schema check of a role's structured output. Throws
/// schema_violation / missing_field / bad_enum.
void validate_stage_output(JudgeRole role, const json& output);

/// Extracts the outermost JSON object from `raw` (leading/trailing prose is
/// stripped), validates it against the role schema, and moves unknown
/// top-level fields into an "additional" bag. Throws malformed /
/// missing_field / bad_enum.
json parse_stage_output(JudgeRole role, const std::string& raw);

// ---------------------------------------------------------------------------
// Scripted scenario: a deterministic rule-based stand-in for every role.

/// Canned output of one rule: either a literal document for the role, or a
/// named generator mode evaluated against the payload.
struct ScenarioOutput {
    std::optional<json> literal;
    std::string mode;  // set iff literal is empty
    json params = json::object();
};

struct ScenarioRule {
    JudgeRole role = JudgeRole::scorer;
    json match = json::object();  // conjunctive matcher, empty matches all
    ScenarioOutput output;
};

/// Ordered rules plus a default output per role; for any (role, payload)
/// exactly one rule fires (first match wins, default last).
struct ScriptedScenario {
    std::vector<ScenarioRule> rules;
    std::map<JudgeRole, ScenarioOutput> defaults;

    static ScriptedScenario reference();  // built-in three-stage arc
};

/// Loads and validates a scenario file. Throws io_error / invalid_rule.
ScriptedScenario load_scenario(const std::string& path);
ScriptedScenario parse_scenario(const json& doc);

bool scenario_rule_matches(const json& match, JudgeRole role, const json& payload);
void validate_matcher(const json& match);

// ---------------------------------------------------------------------------
// Gateway

struct JudgeCallRecord {
    JudgeRole role;
    int step = 0;
    bool ok = true;
    int attempts = 1;
    long tokens = 0;  // crude chars/4 estimate of prompt + reply
};

/// Uniform entry point to all judge roles with retry and schema
/// enforcement. invoke() never returns a document that fails its role
/// schema. On exhausted retries at the updater role only, a maintenance
/// no-op proposal is substituted and marked "degraded"; other roles
/// propagate the error.
class JudgeGateway {
public:
    virtual ~JudgeGateway() = default;

    json invoke(JudgeRole role, const json& payload);

    std::vector<JudgeCallRecord> call_log() const;
    long calls(JudgeRole role) const;
    void reset_call_log();

protected:
    virtual json invoke_once(JudgeRole role, const json& payload) = 0;
    virtual int retry_budget() const = 0;
    virtual void backoff(int attempt) {}
    virtual long estimate_tokens(JudgeRole role, const json& payload, const json& output) const;

private:
    mutable std::mutex mu_;
    std::vector<JudgeCallRecord> log_;
};

/// Deterministic backend: a pure function of (role, payload, scenario).
class ScriptedGateway : public JudgeGateway {
public:
    explicit ScriptedGateway(ScriptedScenario scenario) : scenario_(std::move(scenario)) {}

    const ScriptedScenario& scenario() const { return scenario_; }

protected:
    json invoke_once(JudgeRole role, const json& payload) override;
    int retry_budget() const override { return 1; }

private:
    ScriptedScenario scenario_;
};

/// Evaluates a scenario output (literal or generator mode) for a payload.
/// Exposed for scenario validation and tests.
json evaluate_scripted_output(const ScenarioOutput& out, JudgeRole role, const json& payload);

struct HttpGatewayConfig {
    std::string base_url;  // e.g. http://localhost:8080
    std::string api_key;
    std::string model = "judge-default";
    std::map<JudgeRole, std::string> model_overrides;
    double temperature = 0.0;
    int retries = 3;
    int backoff_base_ms = 200;
    int max_in_flight = 8;
    int timeout_sec = 120;

    /// Reads AMARIS_JUDGE_BASE_URL, AMARIS_JUDGE_API_KEY,
    /// AMARIS_JUDGE_MODEL_SCORER and AMARIS_JUDGE_MODEL_UPDATER.
    static HttpGatewayConfig from_env();
};

/// Chat-completion backend: POST {base_url}/chat/completions, reply read
/// from choices[0].message.content.
class HttpGateway : public JudgeGateway {
public:
    explicit HttpGateway(HttpGatewayConfig config);
    ~HttpGateway() override;

protected:
    json invoke_once(JudgeRole role, const json& payload) override;
    int retry_budget() const override { return config_.retries; }
    void backoff(int attempt) override;

private:
    HttpGatewayConfig config_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Renders a role payload into the role's default prompt text (used by the
/// HTTP backend and by token accounting).
std::string render_payload_prompt(JudgeRole role, const json& payload);

}  // namespace amaris
