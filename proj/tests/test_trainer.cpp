#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "jat/trainer.hpp"
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

std::shared_ptr<const BpeTokenizer> toy_tokenizer() {
    static auto tok = std::make_shared<const BpeTokenizer>(
        BpeTokenizer::load(asset("toy_tokenizer/vocab.json"), asset("toy_tokenizer/merges.txt")));
    return tok;
}

ModelConfig tiny_cfg() {
    ModelConfig c = ModelConfig::desk();
    c.hidden = 64;
    c.layers = 2;
    c.heads = 2;
    c.intermediate = 64;
    c.global_window = 32;
    c.local_window = 16;
    c.text_vocab = 512;
    c.env_region = 32;
    c.conv_channels = {2, 3, 4};
    return c;
}

TrainingDataset make_training_dataset(const std::string& env_name, int episodes, uint64_t seed, int max_len,
                                      double loss_weight = 1.0) {
    auto dir = jat::testutil::scratch_dir("train_" + env_name + std::to_string(seed));
    GenerateOptions opt;
    opt.random_score_episodes = 30;
    opt.loss_weight = loss_weight;
    generate_dataset(env_name, "expert", episodes, seed, dir / "ds", opt);
    return load_training_dataset(dir / "ds", max_len);
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("learning rate decays linearly from the peak to zero") {
    OptimizerConfig cfg;
    cfg.total_steps = 1000;
    CHECK(lr_at(0, cfg) == 5e-5);
    CHECK(lr_at(1000, cfg) == 0.0);
    CHECK(lr_at(500, cfg) == doctest::Approx(2.5e-5).epsilon(1e-12));
    CHECK_THROWS_AS(lr_at(1001, cfg), std::invalid_argument);
}

TEST_CASE("adamw: zero gradients leave parameters unchanged, decay scales them") {
    ParamStore<double> params;
    params.add("w", Tensor<double>({3}, {1.0, -2.0, 0.5}));
    auto adam = AdamState<double>::init(params);
    OptimizerConfig cfg;
    params.zero_grad();

    SUBCASE("no decay") {
        CHECK(adamw_step(params, adam, cfg, 0.1));
        CHECK(params.at("w").value.data == std::vector<double>{1.0, -2.0, 0.5});
    }
    SUBCASE("decoupled decay") {
        cfg.weight_decay = 0.25;
        CHECK(adamw_step(params, adam, cfg, 0.1));
        const double factor = 1.0 - 0.1 * 0.25;
        CHECK(params.at("w").value[0] == doctest::Approx(1.0 * factor).epsilon(1e-12));
        CHECK(params.at("w").value[1] == doctest::Approx(-2.0 * factor).epsilon(1e-12));
    }
}

TEST_CASE("adamw single-step scalar oracle with bias correction") {
    ParamStore<double> params;
    params.add("w", Tensor<double>({1}, {0.7}));
    auto adam = AdamState<double>::init(params);
    OptimizerConfig cfg;
    cfg.weight_decay = 0.1;
    params.at("w").grad[0] = 0.3;

    CHECK(adamw_step(params, adam, cfg, 0.01));
    // hand arithmetic: m = 0.1*0.3? no: m = (1-b1)*g = 0.03; v = (1-b2)*g^2
    const double m = (1.0 - cfg.beta1) * 0.3;
    const double v = (1.0 - cfg.beta2) * 0.09;
    const double mhat = m / (1.0 - cfg.beta1);
    const double vhat = v / (1.0 - cfg.beta2);
    const double expected = 0.7 - 0.01 * (mhat / (std::sqrt(vhat) + cfg.eps) + 0.1 * 0.7);
    CHECK(params.at("w").value[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("adamw rejects non-finite gradients without touching state") {
    ParamStore<double> params;
    params.add("w", Tensor<double>({2}, {1.0, 2.0}));
    auto adam = AdamState<double>::init(params);
    OptimizerConfig cfg;
    params.at("w").grad[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK(!adamw_step(params, adam, cfg, 0.1));
    CHECK(params.at("w").value.data == std::vector<double>{1.0, 2.0});
    CHECK(adam.step == 0);
}

TEST_CASE("dataset sampling follows the weights") {
    Rng rng(404);
    SUBCASE("equal weights split evenly") {
        int counts[2] = {0, 0};
        for (int i = 0; i < 10000; ++i) ++counts[sample_dataset({1.0, 1.0}, rng)];
        // 3 sigma for Binomial(10000, 0.5) is 150
        CHECK(std::abs(counts[0] - 5000) < 150);
    }
    SUBCASE("a 10x weight draws about ten times as often") {
        int counts[2] = {0, 0};
        for (int i = 0; i < 11000; ++i) ++counts[sample_dataset({10.0, 1.0}, rng)];
        // Binomial(11000, 10/11): 3 sigma is about 95
        CHECK(std::abs(counts[0] - 10000) < 95);
    }
    SUBCASE("a single dataset is always chosen") {
        for (int i = 0; i < 100; ++i) CHECK(sample_dataset({3.0}, rng) == 0);
    }
    CHECK_THROWS_AS(sample_dataset({1.0, 0.0}, rng), std::invalid_argument);
}

TEST_CASE("gradient accumulation equals one batch of the union") {
    auto cfg = tiny_cfg();
    auto ds = make_training_dataset("point_reach", 4, 5, cfg.global_window);
    REQUIRE(ds.pool.size() >= 4);

    auto build_model = [&] {
        Model<float> m(cfg, 99, toy_tokenizer());
        m.register_task(ds.manifest);
        return m;
    };

    // two micro-batches of two samples each
    std::vector<Sample> micro1 = {ds.pool[0], ds.pool[1]};
    std::vector<Sample> micro2 = {ds.pool[2], ds.pool[3]};
    std::vector<Sample> united = {ds.pool[0], ds.pool[1], ds.pool[2], ds.pool[3]};

    auto accumulated = build_model();
    accumulated.params().zero_grad();
    for (auto& micro : {micro1, micro2}) {
        Graph<float> g(&accumulated.params());
        auto loss = ops::scale(g, accumulated.batch_loss(g, make_batch(micro), 0.1), 0.5);
        g.backward(loss);
    }

    auto one_shot = build_model();
    one_shot.params().zero_grad();
    {
        Graph<float> g(&one_shot.params());
        g.backward(one_shot.batch_loss(g, make_batch(united), 0.1));
    }

    double worst = 0.0;
    for (size_t p = 0; p < one_shot.params().entries().size(); ++p) {
        const auto& a = accumulated.params().entries()[p].grad;
        const auto& b = one_shot.params().entries()[p].grad;
        for (int64_t i = 0; i < a.numel(); ++i) {
            const double denom = std::max({std::abs(double(a[i])), std::abs(double(b[i])), 1e-4});
            worst = std::max(worst, std::abs(double(a[i]) - double(b[i])) / denom);
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("zero-step training writes the initial checkpoint only") {
    auto cfg = tiny_cfg();
    Model<float> model(cfg, 1, toy_tokenizer());
    auto ds = make_training_dataset("point_reach", 2, 6, cfg.global_window);
    TrainOptions opt;
    opt.optimizer.total_steps = 0;
    opt.out_dir = jat::testutil::scratch_dir("train_zero");
    const auto result = train(model, {ds}, opt);
    CHECK(std::filesystem::exists(result.final_checkpoint));
    CHECK(result.final_checkpoint.filename() == "step_0.ckpt");
    int count = 0;
    for ([[maybe_unused]] const auto& e :
         std::filesystem::directory_iterator(opt.out_dir / "checkpoints")) {
        ++count;
    }
    CHECK(count == 1);
}

TEST_CASE("checkpoints round-trip bit-exactly and reject corruption") {
    auto cfg = tiny_cfg();
    Model<float> model(cfg, 7, toy_tokenizer());
    auto ds = make_training_dataset("grid_word", 2, 8, cfg.global_window);
    model.register_task(ds.manifest);
    auto adam = AdamState<float>::init(model.params());
    adam.step = 3;

    const auto dir = jat::testutil::scratch_dir("ckpt");
    checkpoint::save(dir / "a.ckpt", model, &adam, 17, Rng(5).save_state());

    AdamState<float> adam2;
    int64_t step = 0;
    std::vector<uint64_t> rng_state;
    auto back = checkpoint::load_model<float>(dir / "a.ckpt", toy_tokenizer(), &adam2, &step, &rng_state);
    CHECK(step == 17);
    CHECK(adam2.step == 3);
    CHECK(back.task_ids() == model.task_ids());
    for (size_t p = 0; p < model.params().entries().size(); ++p) {
        CHECK(back.params().entries()[p].value.data == model.params().entries()[p].value.data);
    }

    SUBCASE("truncated blob is rejected") {
        auto bytes = file_bytes(dir / "a.ckpt");
        std::ofstream f(dir / "cut.ckpt", std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 64));
        f.close();
        CHECK_THROWS_WITH_AS(checkpoint::read_file(dir / "cut.ckpt"), doctest::Contains("truncated"),
                             std::runtime_error);
    }
    SUBCASE("cross-config load names the offending parameter") {
        auto other_cfg = cfg;
        other_cfg.intermediate = 48;
        Model<float> other(other_cfg, 7, toy_tokenizer());
        other.register_task(ds.manifest);
        const auto data = checkpoint::read_file(dir / "a.ckpt");
        CHECK_THROWS_WITH_AS(checkpoint::load_into<float>(data, other, nullptr), doctest::Contains("ffn.in.weight"),
                             std::runtime_error);
    }
}

TEST_CASE("training on a 2-episode fixture overfits and resumes bit-exactly") {
    auto cfg = tiny_cfg();
    auto ds = make_training_dataset("point_reach", 2, 11, cfg.global_window, 20.0);

    TrainOptions opt;
    opt.optimizer.total_steps = 120;
    opt.optimizer.batch_size = 4;
    opt.optimizer.grad_accumulation = 2;
    opt.optimizer.peak_lr = 3e-3;
    opt.kappa = 0.0;
    opt.seed = 3;
    opt.log_every = 1;
    opt.checkpoint_every = 60;
    opt.out_dir = jat::testutil::scratch_dir("train_overfit");

    Model<float> model(cfg, 21, toy_tokenizer());
    const auto result = train(model, {ds}, opt);
    CHECK(result.steps_done == 120);
    CHECK(result.rejected_steps == 0);

    // the loss collapses on a 2-episode fixture: smoothed tail under 1% of
    // the smoothed head
    std::ifstream metrics(opt.out_dir / "metrics.csv");
    std::string line;
    std::getline(metrics, line);  // header
    std::vector<double> losses;
    while (std::getline(metrics, line)) {
        std::stringstream ss(line);
        std::string step, dataset, loss;
        std::getline(ss, step, ',');
        std::getline(ss, dataset, ',');
        std::getline(ss, loss, ',');
        if (dataset.rfind("point_reach", 0) == 0 && dataset.find("_eval") == std::string::npos) {
            losses.push_back(std::stod(loss));
        }
    }
    REQUIRE(losses.size() == 120);
    auto window_mean = [&](size_t from) {
        double acc = 0.0;
        for (size_t i = from; i < from + 10; ++i) acc += losses[i];
        return acc / 10.0;
    };
    const double head = window_mean(0);
    const double tail = window_mean(losses.size() - 10);
    CHECK(tail < 0.01 * head);
    // smoothed curve decreases monotonically
    double prev = head;
    for (size_t i = 10; i + 10 <= losses.size(); i += 10) {
        const double cur = window_mean(i);
        CHECK(cur < prev * 1.10);  // allow small plateaus window to window
        prev = cur;
    }

    // resume from the midpoint checkpoint and compare metrics bit-exactly
    TrainOptions resume_opt = opt;
    resume_opt.out_dir = jat::testutil::scratch_dir("train_resume");
    std::filesystem::create_directories(resume_opt.out_dir);
    Model<float> model2(cfg, 21, toy_tokenizer());
    model2.register_task(ds.manifest);
    const auto resumed =
        train(model2, {ds}, resume_opt, opt.out_dir / "checkpoints" / "step_60.ckpt");
    CHECK(resumed.steps_done == 60);

    // the tail of the uninterrupted metrics equals the resumed metrics
    std::ifstream full(opt.out_dir / "metrics.csv"), part(resume_opt.out_dir / "metrics.csv");
    std::vector<std::string> full_lines, part_lines;
    auto strip_wall = [](std::string s) { return s.substr(0, s.rfind(',')); };
    while (std::getline(full, line)) full_lines.push_back(line);
    while (std::getline(part, line)) part_lines.push_back(line);
    REQUIRE(part_lines.size() == 60);  // steps 61..120, no header on resume
    REQUIRE(full_lines.size() == 121);
    for (size_t i = 0; i < part_lines.size(); ++i) {
        CHECK(strip_wall(part_lines[i]) == strip_wall(full_lines[i + 61]));
    }

    // final parameters are bit-identical between the two runs
    const auto a = checkpoint::read_file(opt.out_dir / "checkpoints" / "step_120.ckpt");
    const auto b = checkpoint::read_file(resume_opt.out_dir / "checkpoints" / "step_120.ckpt");
    REQUIRE(a.blobs.size() == b.blobs.size());
    for (size_t i = 0; i < a.blobs.size(); ++i) CHECK(a.blobs[i].data == b.blobs[i].data);
}
