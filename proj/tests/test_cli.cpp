// Exercises the installed command-line surface end to end through the shell:
// exit-code contract, overwrite protection, determinism, seed override.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "test_util.hpp"

namespace {

std::string cli_path() {
#ifdef JAT_CLI_PATH
    return JAT_CLI_PATH;
#else
    return "./jat";
#endif
}

std::string asset(const std::string& rel) {
#ifdef JAT_ASSET_DIR
    return std::string(JAT_ASSET_DIR) + "/" + rel;
#else
    return "assets/" + rel;
#endif
}

struct CmdResult {
    int code;
    std::string output;
};

CmdResult run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + cli_path() + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[512];
    while (fgets(buf, sizeof(buf), pipe)) out += buf;
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("exit codes: success 0, usage 1, data errors 2") {
    const auto dir = jat::testutil::scratch_dir("cli_codes");
    CHECK(run("gen-data --env point_reach --episodes 2 --seed 1 --out " + (dir / "ds").string()).code == 0);
    CHECK(run("").code == 1);                                 // missing subcommand
    CHECK(run("gen-data --episodes 2").code == 1);            // missing required flags
    const auto unknown = run("gen-data --env mars --out " + (dir / "x").string());
    CHECK(unknown.code == 2);
    CHECK(unknown.output.find("point_reach") != std::string::npos);  // catalogue printed
    CHECK(run("train --config " + (dir / "missing.json").string() + " --out " + (dir / "t").string()).code == 2);
}

TEST_CASE("gen-data is deterministic and respects overwrite protection") {
    const auto dir = jat::testutil::scratch_dir("cli_gen");
    const std::string flags = "gen-data --env grid_word --policy expert --episodes 5 --seed 3 --out ";
    CHECK(run(flags + (dir / "a").string()).code == 0);
    CHECK(run(flags + (dir / "b").string()).code == 0);
    CHECK(file_bytes(dir / "a" / "episodes.jsonl") == file_bytes(dir / "b" / "episodes.jsonl"));
    CHECK(file_bytes(dir / "a" / "manifest.json") == file_bytes(dir / "b" / "manifest.json"));

    CHECK(run(flags + (dir / "a").string()).code == 2);              // refuses to overwrite
    CHECK(run(flags + (dir / "a").string() + " --force").code == 0);  // unless forced
}

TEST_CASE("JAT_SEED overrides the seed flag") {
    const auto dir = jat::testutil::scratch_dir("cli_seed");
    CHECK(run("gen-data --env point_reach --episodes 3 --seed 1 --out " + (dir / "s1").string()).code == 0);
    CHECK(run("gen-data --env point_reach --episodes 3 --seed 2 --out " + (dir / "s2").string()).code == 0);
    CHECK(run("gen-data --env point_reach --episodes 3 --seed 2 --out " + (dir / "s1again").string(),
              "JAT_SEED=1").code == 0);
    CHECK(file_bytes(dir / "s1" / "episodes.jsonl") != file_bytes(dir / "s2" / "episodes.jsonl"));
    CHECK(file_bytes(dir / "s1" / "episodes.jsonl") == file_bytes(dir / "s1again" / "episodes.jsonl"));
}

TEST_CASE("train, eval, complete and caption round through the CLI") {
    const auto dir = jat::testutil::scratch_dir("cli_train");
    REQUIRE(run("gen-data --env point_reach --episodes 16 --seed 5 --loss-weight 10 --out " + (dir / "ds").string())
                .code == 0);

    nlohmann::json cfg;
    cfg["model"] = {{"preset", "desk"}, {"layers", 1}, {"hidden", 64}, {"heads", 2}, {"intermediate", 64},
                    {"global_window", 32}, {"local_window", 16}, {"conv_channels", {2, 3, 4}}};
    cfg["tokenizer"] = {{"vocab", asset("toy_tokenizer/vocab.json")}, {"merges", asset("toy_tokenizer/merges.txt")}};
    cfg["optimizer"] = {{"total_steps", 8}, {"batch_size", 2}, {"grad_accumulation", 1}, {"peak_lr", 1e-4}};
    cfg["data"] = {{"datasets", {{{"path", (dir / "ds").string()}}}}};
    cfg["train"] = {{"seed", 0}, {"log_every", 4}};
    std::ofstream(dir / "cfg.json") << cfg.dump();

    const auto trained = run("train --config " + (dir / "cfg.json").string() + " --out " + (dir / "run").string());
    CHECK(trained.code == 0);
    const auto ckpt = (dir / "run" / "checkpoints" / "step_8.ckpt").string();
    REQUIRE(std::filesystem::exists(ckpt));
    CHECK(std::filesystem::exists(dir / "run" / "resolved_config.json"));

    SUBCASE("unknown config keys are rejected") {
        auto bad = cfg;
        bad["mystery"] = 1;
        std::ofstream(dir / "bad.json") << bad.dump();
        const auto r = run("train --config " + (dir / "bad.json").string() + " --out " + (dir / "runbad").string());
        CHECK(r.code == 2);
        CHECK(r.output.find("mystery") != std::string::npos);
    }

    SUBCASE("evaluation protocols and spec mismatch") {
        const auto ev = run("eval --checkpoint " + ckpt + " --env point_reach --episodes 3 --seed 1 --out " +
                            (dir / "ev").string());
        CHECK(ev.code == 0);
        CHECK(std::filesystem::exists(dir / "ev" / "report.json"));
        // unknown task for this checkpoint
        const auto wrong = run("eval --checkpoint " + ckpt + " --env grid_word --episodes 1 --out " +
                               (dir / "ev2").string());
        CHECK(wrong.code == 2);
        CHECK(wrong.output.find("grid_word") != std::string::npos);
    }

    SUBCASE("text generation determinism and empty-prompt rejection") {
        const auto c1 = run("complete --checkpoint " + ckpt + " --prompt \"the weather\" --max-tokens 4");
        const auto c2 = run("complete --checkpoint " + ckpt + " --prompt \"the weather\" --max-tokens 4");
        CHECK(c1.code == 0);
        CHECK(c1.output == c2.output);
        CHECK(run("complete --checkpoint " + ckpt + " --prompt \"\"").code == 2);
    }
}

TEST_CASE("caption demo consumes PPM images") {
    const auto dir = jat::testutil::scratch_dir("cli_caption");
    REQUIRE(run("gen-data --env point_reach --episodes 4 --seed 5 --out " + (dir / "ds").string()).code == 0);
    nlohmann::json cfg;
    cfg["model"] = {{"preset", "desk"}, {"layers", 1}, {"hidden", 64}, {"heads", 2}, {"intermediate", 64},
                    {"global_window", 256}, {"local_window", 64}, {"conv_channels", {2, 3, 4}}};
    cfg["tokenizer"] = {{"vocab", asset("toy_tokenizer/vocab.json")}, {"merges", asset("toy_tokenizer/merges.txt")}};
    cfg["optimizer"] = {{"total_steps", 2}, {"batch_size", 1}, {"grad_accumulation", 1}};
    cfg["data"] = {{"datasets", {{{"path", (dir / "ds").string()}}}}};
    std::ofstream(dir / "cfg.json") << cfg.dump();
    REQUIRE(run("train --config " + (dir / "cfg.json").string() + " --out " + (dir / "run").string()).code == 0);
    const auto ckpt = (dir / "run" / "checkpoints" / "step_2.ckpt").string();

    // a tiny gray PPM
    {
        std::ofstream f(dir / "img.ppm", std::ios::binary);
        f << "P6\n32 32\n255\n";
        for (int i = 0; i < 32 * 32 * 3; ++i) f.put(static_cast<char>(128));
    }
    const auto cap = run("caption --checkpoint " + ckpt + " --image " + (dir / "img.ppm").string() +
                         " --max-tokens 3");
    CHECK(cap.code == 0);
    CHECK(run("caption --checkpoint " + ckpt + " --image " + (dir / "nope.ppm").string()).code == 2);
}
