#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "jat/experiments.hpp"
#include "test_util.hpp"

using namespace jat;

namespace {

std::string asset(const std::string& rel) {
#ifdef JAT_ASSET_DIR
    return std::string(JAT_ASSET_DIR) + "/" + rel;
#else
    return "assets/" + rel;
#endif
}

ExperimentPlan tiny_plan(const std::string& kind) {
    ExperimentPlan p;
    p.kind = kind;
    p.tasks = kind == "kappa_sweep" ? std::vector<std::string>{"point_reach"}
                                    : std::vector<std::string>{"alias_pair_a", "alias_pair_b"};
    p.kappa_grid = {0.005};
    p.seeds = {0, 1};
    p.steps_per_run = 12;
    p.episodes_per_dataset = 6;
    p.eval_episodes = 4;
    p.model = ModelConfig::desk();
    p.model.layers = 1;
    p.model.hidden = 64;
    p.model.heads = 2;
    p.model.intermediate = 64;
    p.model.global_window = 32;
    p.model.local_window = 16;
    p.model.conv_channels = {2, 3, 4};
    p.tokenizer_vocab = asset("toy_tokenizer/vocab.json");
    p.tokenizer_merges = asset("toy_tokenizer/merges.txt");
    return p;
}

}  // namespace

TEST_CASE("plan validation") {
    auto p = tiny_plan("kappa_sweep");
    CHECK_NOTHROW(p.validate());

    SUBCASE("unknown kind") {
        p.kind = "noise_study";
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    }
    SUBCASE("single seed rejected") {
        p.seeds = {0};
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    }
    SUBCASE("kappa outside [0,1]") {
        p.kappa_grid = {1.5};
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    }
    SUBCASE("ablation needs the pair") {
        p.kind = "reward_ablation";
        p.tasks = {"alias_pair_a"};
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    }
    SUBCASE("json round trip rejects unknown keys") {
        auto j = p.to_json();
        CHECK_NOTHROW(ExperimentPlan::from_json(j));
        j["plutonium"] = 1;
        CHECK_THROWS_WITH_AS(ExperimentPlan::from_json(j), doctest::Contains("plutonium"), std::invalid_argument);
    }
}

TEST_CASE("kappa sweep: bookkeeping, grid{0} control reduction, resume") {
    auto plan = tiny_plan("kappa_sweep");
    const auto out = testutil::scratch_dir("exp_sweep");

    // grid {0} with the control enabled collapses to a single setting
    auto zero_plan = plan;
    zero_plan.kappa_grid = {0.0};
    const auto zero = experiments::run_kappa_sweep(zero_plan, out / "zero");
    CHECK(zero.rows.size() == 1);
    CHECK(zero.rows[0].control);

    // {0.005} grid plus control, 2 seeds: 4 training cells, 4 result rows
    const auto sweep = experiments::run_kappa_sweep(plan, out / "sweep");
    REQUIRE(sweep.rows.size() == 2);
    CHECK(sweep.rows[0].control);
    CHECK(sweep.rows[1].kappa == 0.005);
    int cell_files = 0;
    for (const auto& e : std::filesystem::directory_iterator(out / "sweep" / "cells")) {
        (void)e;
        ++cell_files;
    }
    CHECK(cell_files == 4);
    CHECK(std::filesystem::exists(out / "sweep" / "results.csv"));
    CHECK(std::filesystem::exists(out / "sweep" / "summary.json"));
    CHECK(std::filesystem::exists(out / "sweep" / "plots" / "kappa_iqm.svg"));

    // resume: delete one cell, rerun; only that cell is retrained and the
    // repeated cells give identical aggregates
    std::filesystem::remove(out / "sweep" / "cells" / "kappa_0.005_seed_1.json");
    const auto again = experiments::run_kappa_sweep(plan, out / "sweep");
    CHECK(again.rows.size() == 2);
    CHECK(again.rows[0].iqm_value == doctest::Approx(sweep.rows[0].iqm_value).epsilon(1e-12));
    CHECK(again.rows[1].iqm_value == doctest::Approx(sweep.rows[1].iqm_value).epsilon(1e-12));

    // report embeds the plan and its hash
    const auto summary = nlohmann::json::parse(std::ifstream(out / "sweep" / "summary.json"));
    CHECK(summary.at("plan").at("kind") == "kappa_sweep");
    CHECK(summary.at("plan_hash").get<std::string>().size() == 16);
    CHECK(summary.at("plan_hash") == experiments::plan_hash(plan));
}

TEST_CASE("reward ablation: three settings and the pairwise statistic") {
    auto plan = tiny_plan("reward_ablation");
    const auto out = testutil::scratch_dir("exp_ablation");
    const auto result = experiments::run_reward_ablation(plan, out);

    // cells: 2 single-task x 2 seeds + 2 joint settings x 2 seeds
    int cell_files = 0;
    for (const auto& e : std::filesystem::directory_iterator(out / "cells")) {
        (void)e;
        ++cell_files;
    }
    CHECK(cell_files == 8);
    CHECK(result.improvement_probability >= 0.0);
    CHECK(result.improvement_probability <= 1.0);
    CHECK(result.improvement_ci.first <= result.improvement_probability + 1e-9);
    CHECK(result.improvement_ci.second >= result.improvement_probability - 1e-9);
    CHECK(std::filesystem::exists(out / "plots" / "reward_ablation_iqm.svg"));

    // setting (b) on a single task with zeroed rewards reuses the exact code
    // path of setting (a): only the zero_rewards flag differs
    const auto summary = nlohmann::json::parse(std::ifstream(out / "summary.json"));
    CHECK(summary.at("aggregate").contains("single"));
    CHECK(summary.at("aggregate").contains("joint_without_reward"));
    CHECK(summary.at("aggregate").contains("joint_with_reward"));
}
