#include <doctest.h>

#include <functional>
#include <set>

#include "amaris/common.hpp"
#include "amaris/rubric.hpp"

using namespace amaris;

namespace {

Rubric mk(const std::string& id, double weight, bool anchor = false,
          RubricCategory cat = RubricCategory::uncategorized, const std::string& text = "") {
    Rubric r;
    r.id = id;
    r.text = text.empty() ? "criterion " + id : text;
    r.weight = weight;
    r.anchor = anchor;
    r.category = cat;
    return r;
}

RubricSet mk_set(std::vector<Rubric> rubrics, int version = 1) {
    RubricSet s;
    s.version = version;
    s.rubrics = std::move(rubrics);
    return s;
}

// The structure-rubric set of the chemistry case study: one anchor plus
// five structure/style criteria.
RubricSet chemistry_fixture() {
    return mk_set({
        mk("C0", 1.00, true, RubricCategory::correctness, "Correct final answer."),
        mk("C1", 1.20, false, RubricCategory::instruction_following, "Final-answer block presence."),
        mk("C2", 1.50, false, RubricCategory::instruction_following, "Final-answer block completeness."),
        mk("C3", 0.80, false, RubricCategory::instruction_following, "Approved final-answer heading."),
        mk("C4", -4.00, false, RubricCategory::anti_reward_hacking, "Decorative emoji hard gate."),
        mk("C5", 2.00, false, RubricCategory::communication_quality, "Clean professional formatting."),
    });
}

std::string err_code(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

}  // namespace

TEST_CASE("validate_set reports invariant violations as data") {
    CHECK(validate_set(mk_set({mk("a", 1.0), mk("b", -0.5)})).empty());

    auto dup = validate_set(mk_set({mk("a", 1.0), mk("a", 2.0)}));
    REQUIRE(dup.size() == 1);
    CHECK(dup[0].rubric_id == "a");
    CHECK(dup[0].rule.find("duplicate") != std::string::npos);

    auto zero = validate_set(mk_set({mk("c", 0.0)}));
    REQUIRE(zero.size() == 1);
    CHECK(zero[0].rule.find("zero weight c") != std::string::npos);

    auto blank = validate_set(mk_set({mk("d", 1.0, false, RubricCategory::uncategorized, "   ")}));
    REQUIRE(blank.size() == 1);
    CHECK(blank[0].rule.find("empty text") != std::string::npos);
}

TEST_CASE("merge removes all sources and appends the replacement") {
    RubricSet before = chemistry_fixture();
    REQUIRE(before.n_g() == 6);

    EditOp merge = EditOp::make_merge({"C1", "C2", "C3"},
                                      mk("C6", 3.50, false, RubricCategory::instruction_following,
                                         "Single complete final-answer block."));
    RubricSet after = apply_operation(before, merge);

    CHECK(after.n_g() == 4);
    CHECK_FALSE(after.contains("C1"));
    CHECK_FALSE(after.contains("C2"));
    CHECK_FALSE(after.contains("C3"));
    REQUIRE(after.contains("C6"));
    CHECK(after.find("C6")->weight == doctest::Approx(3.50));
    CHECK(after.find("C6")->origin_op == OpKind::merge);
    CHECK(validate_set(after).empty());
    CHECK(after.version == before.version);  // versioning happens in apply_update
}

TEST_CASE("reweight changes only the target weight") {
    RubricSet before = mk_set({mk("A0", 1.0, true), mk("S1", 0.75), mk("S2", 0.5), mk("S3", 0.4), mk("S4", -0.5)});
    RubricSet after = apply_operation(before, EditOp::make_reweight("S1", 0.35));
    CHECK(after.n_g() == before.n_g());
    CHECK(after.find("S1")->weight == doctest::Approx(0.35));
    CHECK(after.find("S1")->text == before.find("S1")->text);
    for (const auto& r : before.rubrics)
        if (r.id != "S1") CHECK(after.find(r.id)->weight == doctest::Approx(r.weight));
}

TEST_CASE("split replaces one rubric with its parts") {
    RubricSet before = mk_set({mk("x", 1.0), mk("y", 0.5)});
    RubricSet after = apply_operation(before, EditOp::make_split("x", {mk("x1", 0.6), mk("x2", 0.4)}));
    CHECK(after.n_g() == 3);
    CHECK_FALSE(after.contains("x"));
    CHECK(after.contains("x1"));
    CHECK(after.contains("x2"));
    CHECK(after.find("x1")->origin_op == OpKind::split);
}

TEST_CASE("edit errors carry stable codes") {
    RubricSet set = mk_set({mk("a", 1.0, true), mk("b", -0.5)});

    CHECK(err_code([&] { apply_operation(set, EditOp::make_delete("zz")); }) == "unknown_target");
    CHECK(err_code([&] { apply_operation(set, EditOp::make_delete("a")); }) == "anchor_protected");
    CHECK(err_code([&] { apply_operation(set, EditOp::make_merge({"a", "b"}, mk("c", 1.0))); }) ==
          "anchor_protected");
    CHECK(err_code([&] { apply_operation(set, EditOp::make_create(mk("b", 1.0))); }) == "duplicate_id");
    CHECK(err_code([&] { apply_operation(set, EditOp::make_reweight("b", 0.0)); }) == "invalid_op");
    CHECK(err_code([&] { apply_operation(set, EditOp::make_merge({"b"}, mk("c", 1.0))); }) == "invalid_op");
    CHECK(err_code([&] { apply_operation(set, EditOp::make_split("b", {mk("c", 1.0)})); }) == "invalid_op");

    // anchors may still be updated and reweighted
    CHECK(apply_operation(set, EditOp::make_update("a", "sharper anchor wording")).find("a")->text ==
          "sharper anchor wording");
    CHECK(apply_operation(set, EditOp::make_reweight("a", 2.0)).find("a")->weight == doctest::Approx(2.0));
}

TEST_CASE("apply_update versions exactly once, also for empty op lists") {
    RubricSet set = mk_set({mk("a", 1.0)}, 7);
    auto [next, entry] = apply_update(set, {});
    CHECK(next.version == 8);
    CHECK(next.rubrics.size() == 1);
    CHECK(entry.ops.empty());
    CHECK(entry.resulting_version == 8);
}

TEST_CASE("create then delete restores the rubric multiset") {
    RubricSet set = mk_set({mk("a", 1.0), mk("b", 0.5)});
    auto [next, entry] = apply_update(set, {EditOp::make_create(mk("r9", 0.25)), EditOp::make_delete("r9")});
    CHECK(next.version == set.version + 1);
    std::multiset<std::string> before_ids, after_ids;
    for (const auto& r : set.rubrics) before_ids.insert(r.id);
    for (const auto& r : next.rubrics) after_ids.insert(r.id);
    CHECK(before_ids == after_ids);
    CHECK(entry.ops.size() == 2);
}

TEST_CASE("apply_update is atomic and names the failing op index") {
    RubricSet set = mk_set({mk("a", 1.0)});
    json before = set.to_json();
    try {
        apply_update(set, {EditOp::make_create(mk("b", 0.5)), EditOp::make_delete("missing")});
        FAIL("expected unknown_target");
    } catch (const Error& e) {
        CHECK(e.code() == "unknown_target");
        CHECK(std::string(e.what()).find("op 1") != std::string::npos);
    }
    CHECK(set.to_json() == before);
}

TEST_CASE("weighted_reward is the raw signed weighted sum") {
    RubricSet one = mk_set({mk("a", 1.0)});
    CHECK(weighted_reward({{"a", 1.0}}, one).total == doctest::Approx(1.0));

    RubricSet three = mk_set({mk("a", 1.0), mk("b", 0.5), mk("c", -0.5)});
    RewardBreakdown r = weighted_reward({{"a", 1.0}, {"b", 1.0}, {"c", 1.0}}, three);
    CHECK(r.total == doctest::Approx(1.0));  // 1 + 0.5 - 0.5
    CHECK(r.per_rubric.size() == 3);
    CHECK(r.rubric_set_version == three.version);

    // penalty magnitudes comparable to the emoji hard gate
    RubricSet gate = mk_set({mk("a", 1.0), mk("c4", -4.0)});
    CHECK(weighted_reward({{"a", 1.0}, {"c4", 1.0}}, gate).total == doctest::Approx(-3.0));
}

TEST_CASE("weighted_reward rejects wrong score maps") {
    RubricSet set = mk_set({mk("a", 1.0), mk("b", 0.5)});
    CHECK(err_code([&] { weighted_reward({{"a", 1.0}}, set); }) == "missing_score");
    CHECK(err_code([&] { weighted_reward({{"a", 1.0}, {"b", 0.5}, {"zz", 0.1}}, set); }) == "extra_score");
    CHECK(err_code([&] { weighted_reward({{"a", 1.5}, {"b", 0.5}}, set); }) == "score_out_of_range");
}

TEST_CASE("weighted_reward is linear in the score vector") {
    Rng rng(42);
    RubricSet set = mk_set({mk("a", 1.3), mk("b", -2.1), mk("c", 0.7), mk("d", 0.05)});
    for (int trial = 0; trial < 200; ++trial) {
        std::map<std::string, double> s1, s2, blend;
        double alpha = rng.uniform01();
        for (const auto& r : set.rubrics) {
            s1[r.id] = rng.uniform01();
            s2[r.id] = rng.uniform01();
            blend[r.id] = alpha * s1[r.id] + (1 - alpha) * s2[r.id];
        }
        double lhs = weighted_reward(blend, set).total;
        double rhs = alpha * weighted_reward(s1, set).total + (1 - alpha) * weighted_reward(s2, set).total;
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("cardinality algebra holds on randomized op sequences") {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Rubric> rubrics;
        int n0 = 3 + static_cast<int>(rng.uniform_int(5));
        for (int i = 0; i < n0; ++i) rubrics.push_back(mk("r" + std::to_string(i), 0.5 + rng.uniform01()));
        RubricSet set = mk_set(rubrics);
        int fresh = 100;
        long expected = static_cast<long>(set.n_g());
        for (int k = 0; k < 6; ++k) {
            switch (rng.uniform_int(4)) {
                case 0: {
                    set = apply_operation(set, EditOp::make_create(mk("n" + std::to_string(fresh++), 1.0)));
                    expected += 1;
                    break;
                }
                case 1: {
                    if (set.n_g() < 2) break;
                    set = apply_operation(set, EditOp::make_delete(set.rubrics[rng.uniform_int(set.n_g())].id));
                    expected -= 1;
                    break;
                }
                case 2: {
                    if (set.n_g() < 3) break;
                    size_t i = rng.uniform_int(set.n_g());
                    size_t j = (i + 1 + rng.uniform_int(set.n_g() - 1)) % set.n_g();
                    set = apply_operation(set, EditOp::make_merge({set.rubrics[i].id, set.rubrics[j].id},
                                                                  mk("m" + std::to_string(fresh++), 1.0)));
                    expected += 1 - 2;  // merge of k sources changes the count by 1-k
                    break;
                }
                case 3: {
                    size_t i = rng.uniform_int(set.n_g());
                    int parts = 2 + static_cast<int>(rng.uniform_int(2));
                    std::vector<Rubric> reps;
                    for (int p = 0; p < parts; ++p) reps.push_back(mk("s" + std::to_string(fresh++), 0.5));
                    set = apply_operation(set, EditOp::make_split(set.rubrics[i].id, reps));
                    expected += parts - 1;
                    break;
                }
            }
            long recount = 0;  // brute-force recount
            for (const auto& r : set.rubrics) {
                (void)r;
                recount += 1;
            }
            REQUIRE(recount == expected);
            REQUIRE(validate_set(set).empty());
        }
    }
}

TEST_CASE("rubric sets and ops round-trip through their JSON schema") {
    RubricSet set = chemistry_fixture();
    set.scope = ScopeKey::per_instance_of("some input text");
    json j = set.to_json();
    CHECK(j.at("scope").at("kind") == "per_instance");
    CHECK(j.at("rubrics").at(0).contains("id"));
    CHECK(RubricSet::from_json(j).to_json() == j);

    std::vector<EditOp> ops = {
        EditOp::make_create(mk("z", 1.0)),
        EditOp::make_update("C1", "new text"),
        EditOp::make_delete("C1"),
        EditOp::make_reweight("C1", -2.0),
        EditOp::make_merge({"C1", "C2"}, mk("m", 1.0)),
        EditOp::make_split("C1", {mk("p1", 0.5), mk("p2", 0.5)}),
    };
    for (const auto& op : ops) CHECK(EditOp::from_json(op.to_json()).to_json() == op.to_json());
}

TEST_CASE("op log lines carry weight transitions and strategy") {
    RubricSet set = mk_set({mk("a", 1.0), mk("b", 0.75)});
    auto [next, entry] =
        apply_update(set, {EditOp::make_reweight("b", 0.35), EditOp::make_create(mk("c", -0.75))}, 12,
                     UpdateStrategy::defensive);
    (void)next;
    auto lines = entry.to_jsonl();
    REQUIRE(lines.size() == 2);
    CHECK(lines[0].at("step") == 12);
    CHECK(lines[0].at("op_kind") == "reweight");
    CHECK(lines[0].at("old_weight").get<double>() == doctest::Approx(0.75));
    CHECK(lines[0].at("new_weight").get<double>() == doctest::Approx(0.35));
    CHECK(lines[0].at("payload").at("strategy") == "defensive");
    CHECK(lines[1].at("op_kind") == "create");
    CHECK(lines[1].at("new_weight").get<double>() == doctest::Approx(-0.75));

    OpLogRecord rec = OpLogRecord::from_json(lines[0]);
    CHECK(rec.strategy() == UpdateStrategy::defensive);
    CHECK(rec.target_ids == std::vector<std::string>{"b"});
}

TEST_CASE("instance keys are deterministic digests of the input") {
    ScopeKey a = ScopeKey::per_instance_of("What is DNA gyrase?");
    ScopeKey b = ScopeKey::per_instance_of("What is DNA gyrase?");
    ScopeKey c = ScopeKey::per_instance_of("What is DNA ligase?");
    CHECK(a == b);
    CHECK_FALSE(a == c);
    CHECK(a.instance_key.size() == 16);
}

// The over-refusal correction pattern: one text revision, two reweights
// and two creations, including a negative refusal penalty.
TEST_CASE("a defensive correction update applies as a unit") {
    RubricSet before = mk_set({
        mk("M0", 1.00, true, RubricCategory::safety),
        mk("M1", 1.00, false, RubricCategory::safety),
        mk("M2", 0.75, false, RubricCategory::safety),
        mk("M3", 0.50, false, RubricCategory::communication_quality),
        mk("M4", 0.75, false, RubricCategory::instruction_following),
    });
    std::vector<EditOp> ops = {
        EditOp::make_update("M1", "Avoid definitive dosing changes beyond common low-risk guidance."),
        EditOp::make_reweight("M2", 0.40),
        EditOp::make_reweight("M3", 0.25),
        EditOp::make_create(mk("M5", 0.90, false, RubricCategory::safety,
                               "Standard guidance plus escalation criteria for low-risk questions.")),
        EditOp::make_create(mk("M6", -0.75, false, RubricCategory::anti_reward_hacking,
                               "Penalize refusal of benign requests without next steps.")),
    };
    auto [after, entry] = apply_update(before, ops, 20, UpdateStrategy::defensive);
    CHECK(after.n_g() == 7);
    CHECK(after.version == 2);
    CHECK(after.find("M2")->weight == doctest::Approx(0.40));
    CHECK(after.find("M3")->weight == doctest::Approx(0.25));
    CHECK(after.find("M6")->weight == doctest::Approx(-0.75));
    CHECK(after.find("M0")->weight == doctest::Approx(1.00));  // anchor untouched
    CHECK(entry.ops.size() == 5);
}

// The saturation pattern: a mastered format criterion is down-weighted
// while stretch criteria are added.
TEST_CASE("a curriculum advancement update applies as a unit") {
    RubricSet before = mk_set({
        mk("I0", 1.00, false, RubricCategory::instruction_following),
        mk("I1", 1.00, false, RubricCategory::instruction_following),
        mk("I2", 0.75, false, RubricCategory::instruction_following),
        mk("I3", 0.50, false, RubricCategory::communication_quality),
    });
    std::vector<EditOp> ops = {
        EditOp::make_reweight("I1", 0.25),
        EditOp::make_update("I2", "Non-redundant topical coverage."),
        EditOp::make_create(mk("I4", 0.75, false, RubricCategory::bonus, "Distinct concrete function per bullet.")),
        EditOp::make_create(mk("I5", 0.75, false, RubricCategory::bonus, "Information density under the limit.")),
    };
    auto [after, entry] = apply_update(before, ops, 30, UpdateStrategy::curriculum_advancement);
    (void)entry;
    CHECK(after.n_g() == 6);
    CHECK(after.find("I1")->weight == doctest::Approx(0.25));
    CHECK(after.find("I1")->text == before.find("I1")->text);
    CHECK(validate_set(after).empty());
}
