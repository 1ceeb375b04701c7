#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "jat/tokenizer.hpp"
#include "jat/toyenvs.hpp"
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

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("catalogue lookup and rejection") {
    auto env = make_env("grid_word");
    const auto obs = env->reset(0);
    CHECK(obs.kind == Modality::kDiscrete);
    CHECK(obs.discrete.size() == 50);  // 5x5x2 symbolic view
    CHECK(env->mission().rfind("go to the ", 0) == 0);
    CHECK_THROWS_WITH_AS(make_env("atari"), doctest::Contains("point_reach"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(scripted_expert("nope"), doctest::Contains("catalogue"), std::invalid_argument);
}

TEST_CASE("environments are deterministic under seed and terminate within cap") {
    for (const auto& name : env_catalogue()) {
        CAPTURE(name);
        auto env = make_env(name);
        auto expert = scripted_expert(name);
        for (uint64_t seed : {1ull, 2ull, 3ull}) {
            Rng n1(0), n2(0);
            auto [e1, r1] = rollout(
                *env, [&](const Observation& o) { return expert.act(o, env->mission(), n1); }, seed);
            auto [e2, r2] = rollout(
                *env, [&](const Observation& o) { return expert.act(o, env->mission(), n2); }, seed);
            CHECK(r1 == r2);
            CHECK(e1.length() == e2.length());
            CHECK(e1.length() <= static_cast<size_t>(env->episode_cap()));
            for (float r : e1.rewards) CHECK(std::isfinite(r));
            // episodes validate against the environment's own spec
            DatasetManifest m;
            m.task_id = env->task_id();
            m.domain = env->domain();
            m.observation = env->observation_spec();
            m.action = env->action_spec();
            m.episode_count = 1;
            CHECK(validate_episode(e1, m).empty());
        }
    }
}

TEST_CASE("alias pair: identical observations, different rewards") {
    auto a = make_env("alias_pair_a");
    auto b = make_env("alias_pair_b");
    Rng arng(33);
    for (uint64_t seed : {10ull, 11ull}) {
        auto oa = a->reset(seed);
        auto ob = b->reset(seed);
        bool rewards_differ = false;
        for (int t = 0; t < 50; ++t) {
            CHECK(oa.continuous == ob.continuous);
            const auto act = a->random_action(arng);
            const auto ra = a->step(act);
            const auto rb = b->step(act);
            rewards_differ = rewards_differ || ra.reward != rb.reward;
            oa = ra.observation;
            ob = rb.observation;
        }
        CHECK(rewards_differ);
    }
}

TEST_CASE("alias experts reach opposite corners") {
    for (const bool variant_b : {false, true}) {
        auto env = make_env(variant_b ? "alias_pair_b" : "alias_pair_a");
        auto expert = scripted_expert(env->task_id());
        Rng nr(0);
        auto obs = env->reset(99);
        StepResult last{};
        for (int t = 0; t < 50; ++t) {
            last = env->step(expert.act(obs, "", nr));
            obs = last.observation;
        }
        const float g = variant_b ? -0.8f : 0.8f;
        CHECK(std::abs(obs.continuous[0] - g) < 0.01f);
        CHECK(std::abs(obs.continuous[1] - g) < 0.01f);
    }
}

TEST_CASE("grid_word expert solves every goal layout within the cap") {
    auto env = make_env("grid_word");
    auto expert = scripted_expert("grid_word");
    auto* grid = dynamic_cast<envs::GridWord*>(env.get());
    REQUIRE(grid != nullptr);
    std::set<int> target_positions;
    int successes = 0;
    const int episodes = 300;
    for (int i = 0; i < episodes; ++i) {
        Rng nr(0);
        auto obs = env->reset(static_cast<uint64_t>(i));
        target_positions.insert(grid->target_pos());
        for (int t = 0; t < env->episode_cap(); ++t) {
            const auto r = env->step(expert.act(obs, env->mission(), nr));
            obs = r.observation;
            if (r.done) {
                if (r.reward > 0.0f) ++successes;
                break;
            }
        }
    }
    CHECK(successes == episodes);                 // success rate 1.0
    CHECK(target_positions.size() >= 24);         // layouts cover nearly every cell
}

TEST_CASE("point_reach expert ends within 0.05 of the goal on 100 seeds") {
    auto env = make_env("point_reach");
    auto expert = scripted_expert("point_reach");
    for (int i = 0; i < 100; ++i) {
        Rng nr(0);
        auto [e, ret] = rollout(
            *env, [&](const Observation& o) { return expert.act(o, env->mission(), nr); },
            static_cast<uint64_t>(i));
        CHECK(e.length() < static_cast<size_t>(env->episode_cap()));
        // the final reward is the negated final distance to the goal
        CHECK(e.rewards.back() > -0.05f);
    }
}

TEST_CASE("pixel_catch expert catches every drop") {
    auto env = make_env("pixel_catch");
    auto expert = scripted_expert("pixel_catch");
    Rng nr(0);
    auto [e, ret] = rollout(
        *env, [&](const Observation& o) { return expert.act(o, env->mission(), nr); }, 4);
    CHECK(e.length() == 100);
    CHECK(ret == 4.0);  // one catch per 23-step fall cycle
}

TEST_CASE("dataset generation is deterministic and carries measured scores") {
    const auto dir = testutil::scratch_dir("envs_gen");
    GenerateOptions opt;
    opt.random_score_episodes = 50;
    const auto m1 = generate_dataset("point_reach", "expert", 10, 7, dir / "a", opt);
    const auto m2 = generate_dataset("point_reach", "expert", 10, 7, dir / "b", opt);
    CHECK(m1.episode_count == 10);
    CHECK(file_bytes(dir / "a" / "episodes.jsonl") == file_bytes(dir / "b" / "episodes.jsonl"));
    CHECK(file_bytes(dir / "a" / "manifest.json") == file_bytes(dir / "b" / "manifest.json"));
    CHECK(m1.expert_score_mean > m1.random_score);  // expert beats the baseline
    CHECK_THROWS_AS(generate_dataset("point_reach", "expert", 0, 7, dir / "c", opt), std::invalid_argument);
}

TEST_CASE("grid_word expert score fixture") {
    const auto dir = testutil::scratch_dir("envs_fixture");
    GenerateOptions opt;
    opt.random_score_episodes = 200;
    const auto m = generate_dataset("grid_word", "expert", 1000, 3, dir / "ds", opt);
    // reference run: mean expert return over 1,000 episodes
    CHECK(std::abs(m.expert_score_mean - 0.954086) < 0.02);
    CHECK(m.expert_score_mean > 0.9);
    CHECK(m.random_score < 0.6);
}

TEST_CASE("caption corpus: grammar, colors, coverage") {
    auto tok = BpeTokenizer::load(asset("toy_tokenizer/vocab.json"), asset("toy_tokenizer/merges.txt"));

    const auto one = make_caption_sample(tok, 0);
    CHECK(one.image.shape == Shape{3, 224, 224});
    for (float v : one.image.data) CHECK((v >= 0.0f && v <= 1.0f));
    // caption matches "a <color> <shape>"
    bool grammar_ok = false;
    for (const auto& [color, rgb] : caption_palette().colors) {
        for (const auto& shape : caption_palette().shapes) {
            grammar_ok = grammar_ok || one.caption == "a " + color + " " + shape;
        }
    }
    CHECK(grammar_ok);
    CHECK(tok.decode(one.tokens) == one.caption);

    // a red square image peaks in the red channel
    for (uint64_t s = 0; s < 200; ++s) {
        const auto sample = make_caption_sample(tok, s);
        if (sample.caption != "a red square") continue;
        double sums[3] = {};
        const int64_t plane = 224 * 224;
        for (int c = 0; c < 3; ++c) {
            for (int64_t i = 0; i < plane; ++i) sums[c] += sample.image[c * plane + i];
        }
        CHECK(sums[0] > sums[1]);
        CHECK(sums[0] > sums[2]);
        break;
    }

    // 26 distinct (color, shape) pairs at n=1,000
    std::set<std::string> captions;
    for (uint64_t s = 0; s < 1000; ++s) captions.insert(make_caption_sample(tok, derive_seed(42, s)).caption);
    CHECK(captions.size() == caption_palette().colors.size() * caption_palette().shapes.size());
    CHECK(captions.size() == 26);

    const auto dir = testutil::scratch_dir("captions");
    generate_caption_corpus(tok, 3, 0, dir / "cc");
    const auto records = read_caption_corpus(dir / "cc");
    REQUIRE(records.size() == 3);
    CHECK(records[0].image.shape == Shape{3, 224, 224});
    CHECK(tok.decode(records[0].tokens) == records[0].caption);
}
