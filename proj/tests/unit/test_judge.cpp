#include <doctest.h>

#include <fstream>

#include "amaris/common.hpp"
#include "amaris/judge.hpp"
#include "amaris/rubric.hpp"

using namespace amaris;

namespace {

PromptTemplate tmpl(const std::string& body, std::set<std::string> required = {}) {
    PromptTemplate t;
    t.role = JudgeRole::scorer;
    t.body = body;
    t.required_placeholders = std::move(required);
    return t;
}

json valid_analysis(bool detected = false, const json& label = nullptr) {
    return json{{"reward_hacking",
                 {{"detected", detected}, {"behavior_label", label}, {"evidence", "e"}, {"confidence", "low"}}},
                {"training_stage", {{"assessment", "ok"}, {"expected_for_size", true}}},
                {"rubric_analysis", {{"weakest_rubric_id", nullptr}, {"flaw_description", ""}}},
                {"curriculum", {{"next_priority", "hold"}}},
                {"observations", ""}};
}

json valid_summary() {
    return json{{"training_health", "stable"},
                {"learning_phase", "stable"},
                {"recurring_patterns", json::array()},
                {"dominant_hacking_risk", {{"label", nullptr}, {"evidence", ""}}},
                {"weakest_rubric_id", nullptr},
                {"saturation_signs", ""},
                {"provisional_plan", "hold"}};
}

// Gateway that fails a fixed number of times before delegating to a script.
class FlakyGateway : public JudgeGateway {
public:
    FlakyGateway(int failures, json reply) : failures_(failures), reply_(std::move(reply)) {}
    int attempts = 0;

protected:
    json invoke_once(JudgeRole, const json&) override {
        ++attempts;
        if (attempts <= failures_) throw Error("backend_unreachable", "transient");
        return reply_;
    }
    int retry_budget() const override { return 3; }

private:
    int failures_;
    json reply_;
};

}  // namespace

TEST_CASE("render_prompt substitutes bound placeholders") {
    auto t = tmpl("score [INPUT] against [RUBRICS]", {"INPUT", "RUBRICS"});
    CHECK(render_prompt(t, {{"INPUT", "x"}, {"RUBRICS", "r1, r2"}}) == "score x against r1, r2");
}

TEST_CASE("render_prompt fails on a missing required placeholder") {
    auto t = tmpl("score [INPUT] against [RUBRICS]", {"INPUT", "RUBRICS"});
    try {
        render_prompt(t, {{"INPUT", "x"}});
        FAIL("expected missing_placeholder");
    } catch (const Error& e) {
        CHECK(e.code() == "missing_placeholder");
        CHECK(std::string(e.what()).find("RUBRICS") != std::string::npos);
    }
}

TEST_CASE("render_prompt leaves plain text and non-placeholder brackets alone") {
    CHECK(render_prompt(tmpl("no placeholders here"), {}) == "no placeholders here");
    CHECK(render_prompt(tmpl("array[3] stays"), {}) == "array[3] stays");
    // optional placeholders render as empty sections
    CHECK(render_prompt(tmpl("a[OPTIONAL]b"), {}) == "ab");
}

TEST_CASE("default templates render from role payloads without leftovers") {
    for (JudgeRole role : all_judge_roles()) {
        json payload{{"step", 3},
                     {"input", "i"},
                     {"output", "o"},
                     {"rubrics", json::array({json{{"id", "a"}, {"weight", 1.0}, {"text", "t"}}})},
                     {"analyses", json::array({valid_analysis()})},
                     {"chunk_summaries", json::array({valid_summary()})},
                     {"summary", valid_summary()},
                     {"max_queries", 5},
                     {"task_context", "ctx"},
                     {"candidates", json::array({json{{"label", "candidate_1"}, {"text", "body"}}})}};
        std::string text = render_payload_prompt(role, payload);
        CHECK(!text.empty());
        for (const auto& name : default_template(role).required_placeholders)
            CHECK(text.find("[" + name + "]") == std::string::npos);
    }
}

TEST_CASE("parse_stage_output strips prose and collects unknown fields") {
    json out = parse_stage_output(JudgeRole::scorer,
                                  "Sure, here are the scores:\n{\"scores\": {\"a\": 0.5}, \"total\": 0.5}\nDone.");
    CHECK(out.at("scores").at("a") == doctest::Approx(0.5));
    CHECK(out.at("additional").at("total") == doctest::Approx(0.5));
}

TEST_CASE("parse_stage_output rejects malformed and invalid documents") {
    CHECK_THROWS_WITH_AS(parse_stage_output(JudgeRole::scorer, "no json at all"), doctest::Contains("malformed"),
                         Error);
    // bad strategy enum
    json bad{{"strategy", "aggressive"}, {"ops", json::array()}, {"reasoning", "r"}};
    try {
        parse_stage_output(JudgeRole::updater, bad.dump());
        FAIL("expected bad_enum");
    } catch (const Error& e) {
        CHECK(e.code() == "bad_enum");
        CHECK(std::string(e.what()).find("aggressive") != std::string::npos);
    }
    // missing field
    try {
        parse_stage_output(JudgeRole::updater, json{{"strategy", "defensive"}, {"ops", json::array()}}.dump());
        FAIL("expected missing_field");
    } catch (const Error& e) {
        CHECK(e.code() == "missing_field");
    }
}

TEST_CASE("updater outputs parse into proposals") {
    json doc{{"strategy", "defensive"},
             {"ops", json::array({json{{"kind", "reweight"}, {"target_id", "S1"}, {"new_weight", 0.35}}})},
             {"reasoning", "history shows the pattern recurring"}};
    json parsed = parse_stage_output(JudgeRole::updater, doc.dump());
    CHECK(parsed.at("strategy") == "defensive");
    CHECK(parsed.at("ops").size() == 1);
}

TEST_CASE("analyst labels are restricted to the taxonomy plus other") {
    json ok = valid_analysis(true, "length_gaming");
    CHECK_NOTHROW(validate_stage_output(JudgeRole::analyst, ok));
    json other = valid_analysis(true, "other: memorized answers");
    CHECK_NOTHROW(validate_stage_output(JudgeRole::analyst, other));
    json bad = valid_analysis(true, "verbosity");
    CHECK_THROWS_AS(validate_stage_output(JudgeRole::analyst, bad), Error);
}

TEST_CASE("parse and serialize round-trip for fuzzed well-formed outputs") {
    Rng rng(99);
    auto label = [&]() -> json {
        const auto& tax = behavior_taxonomy();
        return rng.uniform01() < 0.3 ? json(nullptr) : json(tax[rng.uniform_int(tax.size())]);
    };
    for (int i = 0; i < 200; ++i) {
        json docs[3];
        docs[0] = valid_analysis(rng.uniform01() < 0.5, label());
        docs[1] = valid_summary();
        docs[1]["recurring_patterns"].push_back("p" + std::to_string(rng.uniform_int(10)));
        docs[2] =
            json{{"scores", {{"r" + std::to_string(rng.uniform_int(5)), rng.uniform01()}, {"x", rng.uniform01()}}}};
        JudgeRole roles[3] = {JudgeRole::analyst, JudgeRole::summarizer, JudgeRole::scorer};
        for (int d = 0; d < 3; ++d) {
            json parsed = parse_stage_output(roles[d], docs[d].dump());
            CHECK(parsed == docs[d]);
            // a second pass is the identity
            CHECK(parse_stage_output(roles[d], parsed.dump()) == parsed);
        }
    }
}

TEST_CASE("the scripted backend is a pure function of role, payload and scenario") {
    ScriptedGateway gateway(ScriptedScenario::reference());
    json payload{{"step", 4},
                 {"rollout_id", "r1"},
                 {"exploit_tags", json::array({"length_gaming"})},
                 {"rubrics", json::array({json{{"id", "a"}, {"weight", 1.0}, {"text", "criterion"}}})},
                 {"quality", 0.4}};
    json a = gateway.invoke(JudgeRole::analyst, payload);
    json b = gateway.invoke(JudgeRole::analyst, payload);
    CHECK(a.dump() == b.dump());
    CHECK(a.at("reward_hacking").at("detected") == true);
    CHECK(a.at("reward_hacking").at("behavior_label") == "length_gaming");
}

TEST_CASE("scorer tag_match scores penalties only when the rubric names the tag") {
    ScriptedGateway gateway(ScriptedScenario::reference());
    json payload{{"step", 2},
                 {"exploit_tags", json::array({"over_refusal"})},
                 {"quality", 0.0},
                 {"rubrics", json::array({
                                 json{{"id", "help"}, {"weight", 0.75}, {"text", "gives helpful guidance"}},
                                 json{{"id", "pen_over_refusal"},
                                      {"weight", -0.75},
                                      {"text", "Penalize over refusal: refusing benign requests loses reward."}},
                                 json{{"id", "pen_length_gaming"},
                                      {"weight", -0.5},
                                      {"text", "Penalize length gaming: padded answers lose reward."}},
                             })}};
    json out = gateway.invoke(JudgeRole::scorer, payload);
    CHECK(out.at("scores").at("help") == doctest::Approx(0.0));  // quality 0
    CHECK(out.at("scores").at("pen_over_refusal") == doctest::Approx(1.0));
    CHECK(out.at("scores").at("pen_length_gaming") == doctest::Approx(0.0));
}

TEST_CASE("canned by_rubric rules return their configured scores") {
    json doc{{"rules", json::array({json{
                  {"role", "scorer"},
                  {"match", json{{"tags_any", json::array({"length_gaming"})}}},
                  {"output", json{{"mode", "by_rubric"}, {"scores", json{{"a", 0.25}}}, {"default", 0.75}}}}})}};
    ScriptedGateway gateway(parse_scenario(doc));
    json payload{{"step", 1},
                 {"exploit_tags", json::array({"length_gaming"})},
                 {"rubrics", json::array({json{{"id", "a"}, {"weight", 1.0}, {"text", "t"}},
                                          json{{"id", "b"}, {"weight", 1.0}, {"text", "t"}}})}};
    json out = gateway.invoke(JudgeRole::scorer, payload);
    CHECK(out.at("scores").at("a") == doctest::Approx(0.25));
    CHECK(out.at("scores").at("b") == doctest::Approx(0.75));
}

TEST_CASE("invoke retries transient failures up to the budget") {
    FlakyGateway twice(2, json{{"scores", json::object()}});
    json out = twice.invoke(JudgeRole::scorer, json{{"step", 1}});
    CHECK(out.contains("scores"));
    CHECK(twice.attempts == 3);

    FlakyGateway always(99, json::object());
    CHECK_THROWS_AS(always.invoke(JudgeRole::scorer, json{{"step", 1}}), Error);
}

TEST_CASE("exhausted retries at the updater degrade to a maintenance no-op") {
    FlakyGateway broken(99, json::object());
    json out = broken.invoke(JudgeRole::updater, json{{"step", 5}});
    CHECK(out.at("strategy") == "maintenance");
    CHECK(out.at("ops").empty());
    CHECK(out.at("degraded") == true);
    // the substituted proposal still satisfies the updater schema
    CHECK_NOTHROW(validate_stage_output(JudgeRole::updater, out));
}

TEST_CASE("invoke never returns an output that fails its role schema") {
    FlakyGateway bad_schema(0, json{{"scores", {{"a", 1.7}}}});  // out of range
    CHECK_THROWS_AS(bad_schema.invoke(JudgeRole::scorer, json::object()), Error);
}

TEST_CASE("scenario files validate their rules on load") {
    auto write = [](const std::string& path, const std::string& body) {
        std::ofstream out(path);
        out << body;
    };
    const std::string dir = "/tmp/amaris_judge_test";
    std::filesystem::create_directories(dir);

    write(dir + "/ok.json", json{{"rules", json::array({json{{"role", "updater"},
                                                             {"match", json{{"step_range", {1, 5}}}},
                                                             {"output", {{"mode", "maintenance"}}}}})}}
                                .dump());
    ScriptedScenario ok = load_scenario(dir + "/ok.json");
    CHECK(ok.rules.size() == 1);
    CHECK(ok.defaults.size() == all_judge_roles().size());  // built-in defaults fill the rest

    // updater literal failing the role schema
    write(dir + "/bad_literal.json",
          json{{"rules", json::array({json{{"role", "updater"},
                                           {"output", {{"literal", json{{"strategy", "aggressive"},
                                                                        {"ops", json::array()},
                                                                        {"reasoning", "r"}}}}}}})}}
              .dump());
    try {
        load_scenario(dir + "/bad_literal.json");
        FAIL("expected invalid_rule");
    } catch (const Error& e) {
        CHECK(e.code() == "invalid_rule");
    }

    // unknown matcher key
    write(dir + "/bad_matcher.json", json{{"rules", json::array({json{{"role", "scorer"},
                                                                      {"match", json{{"planet", "mars"}}},
                                                                      {"output", {{"mode", "constant"}}}}})}}
                                         .dump());
    CHECK_THROWS_AS(load_scenario(dir + "/bad_matcher.json"), Error);

    write(dir + "/empty.json", "");
    try {
        load_scenario(dir + "/empty.json");
        FAIL("expected io_error");
    } catch (const Error& e) {
        CHECK(e.code() == "io_error");
    }

    CHECK_THROWS_AS(load_scenario(dir + "/does_not_exist.json"), Error);
}

TEST_CASE("first matching rule wins and defaults catch the rest") {
    json doc{{"rules",
              json::array({json{{"role", "analyst"},
                                {"match", json{{"step_range", {1, 10}}}},
                                {"output", {{"mode", "tag_reactive"}}}},
                           json{{"role", "analyst"}, {"match", json::object()}, {"output", {{"mode", "stable"}}}}})},
             {"defaults", json{{"updater", {{"mode", "maintenance"}}}}}};
    ScriptedGateway gateway(parse_scenario(doc));
    json early = gateway.invoke(JudgeRole::analyst, json{{"step", 5}, {"exploit_tags", json::array({"sycophancy"})}});
    CHECK(early.at("reward_hacking").at("detected") == true);
    json late = gateway.invoke(JudgeRole::analyst, json{{"step", 30}, {"exploit_tags", json::array({"sycophancy"})}});
    CHECK(late.at("reward_hacking").at("detected") == false);

    // scripted default updater: maintenance with empty ops
    json fallback = gateway.invoke(JudgeRole::updater, json{{"step", 3}});
    CHECK(fallback.at("strategy") == "maintenance");
    CHECK(fallback.at("ops").empty());
}
