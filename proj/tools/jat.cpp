// Command-line entry points: dataset generation, training, evaluation,
// experiments, and text/caption demos.
//
// Exit codes: 0 success, 1 usage error, 2 data/config error, 3 runtime
// failure. JAT_SEED overrides every --seed flag.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "jat/evaluator.hpp"
#include "jat/experiments.hpp"
#include "jat/ppm.hpp"
#include "jat/runconfig.hpp"
#include "jat/toyenvs.hpp"
#include "jat/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using namespace jat;

// thrown for problems with user-supplied data or configuration
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

uint64_t effective_seed(uint64_t flag_value) {
    if (const char* env = std::getenv("JAT_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end && *end == '\0') return v;
        throw DataError("JAT_SEED is not an integer: " + std::string(env));
    }
    return flag_value;
}

// refuse to overwrite an existing non-empty output directory without --force
void claim_out_dir(const fs::path& out, bool force) {
    if (fs::exists(out) && !fs::is_empty(out)) {
        if (!force) {
            throw DataError("output directory " + out.string() + " exists and is not empty; pass --force to reuse");
        }
    }
    fs::create_directories(out);
}

std::shared_ptr<const BpeTokenizer> load_tokenizer(const std::string& vocab, const std::string& merges) {
    if (vocab.empty()) return nullptr;
    try {
        return std::make_shared<const BpeTokenizer>(BpeTokenizer::load(vocab, merges));
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
}

// tokenizer files recorded in the checkpoint, overridable from flags
std::shared_ptr<const BpeTokenizer> checkpoint_tokenizer(const nlohmann::json& header, const std::string& vocab_flag,
                                                         const std::string& merges_flag) {
    std::string vocab = vocab_flag, merges = merges_flag;
    if (vocab.empty() && header.contains("meta") && header.at("meta").contains("tokenizer")) {
        vocab = header.at("meta").at("tokenizer").value("vocab", "");
        merges = header.at("meta").at("tokenizer").value("merges", "");
    }
    if (vocab.empty()) return nullptr;
    return load_tokenizer(vocab, merges);
}

int cmd_gen_data(const std::string& env_name, const std::string& policy, int episodes, uint64_t seed,
                 const std::string& out, double noise, double sample_weight, double loss_weight,
                 const std::string& vocab, const std::string& merges, bool force) {
    claim_out_dir(out, force);
    if (env_name == "captions") {
        auto tok = load_tokenizer(vocab, merges);
        if (!tok) throw DataError("gen-data captions: --vocab and --merges are required");
        generate_caption_corpus(*tok, episodes, seed, out);
        std::cout << "wrote " << episodes << " caption records to " << out << "\n";
        return 0;
    }
    GenerateOptions opt;
    opt.noise = noise;
    opt.sample_weight = sample_weight;
    opt.loss_weight = loss_weight;
    DatasetManifest m;
    try {
        m = generate_dataset(env_name, policy, episodes, seed, out, opt);
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string(e.what()) + " (corpus option: captions)");
    }
    std::cout << "wrote " << m.episode_count << " episodes to " << out << " (expert " << m.expert_score_mean
              << " +- " << m.expert_score_std << ", random " << m.random_score << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out, const std::string& resume, bool force,
              bool verbose) {
    RunConfig cfg;
    try {
        cfg = RunConfig::load(config_path);
        cfg.check_paths();
    } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
    }
    claim_out_dir(out, force || !resume.empty());
    {
        std::ofstream echo(fs::path(out) / "resolved_config.json");
        echo << cfg.resolved_json().dump(2) << '\n';
    }
    auto tok = load_tokenizer(cfg.tokenizer_vocab, cfg.tokenizer_merges);
    Model<float> model(cfg.model, cfg.model_seed, tok);

    std::vector<TrainingDataset> datasets;
    for (const auto& ref : cfg.datasets) {
        try {
            auto ds = load_training_dataset(ref.path, cfg.model.global_window);
            if (ref.sample_weight) ds.manifest.sample_weight = *ref.sample_weight;
            if (ref.loss_weight) ds.manifest.loss_weight = *ref.loss_weight;
            datasets.push_back(std::move(ds));
        } catch (const std::exception& e) {
            throw DataError(e.what());
        }
    }

    TrainOptions opt;
    opt.optimizer = cfg.optimizer;
    opt.kappa = cfg.kappa;
    opt.seed = effective_seed(cfg.seed);
    opt.zero_rewards = cfg.zero_rewards;
    opt.checkpoint_every = cfg.checkpoint_every;
    opt.eval_every = cfg.eval_every;
    opt.eval_episodes = cfg.eval_episodes;
    opt.log_every = cfg.log_every;
    opt.out_dir = out;
    opt.quiet = !verbose;
    opt.checkpoint_meta = {{"tokenizer", {{"vocab", cfg.tokenizer_vocab}, {"merges", cfg.tokenizer_merges}}},
                           {"config", cfg.resolved_json()}};

    const auto result = train(model, datasets, opt, resume.empty() ? fs::path() : fs::path(resume));
    std::cout << "trained " << result.steps_done << " steps (" << result.rejected_steps
              << " rejected); final checkpoint " << result.final_checkpoint << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& env_name, int episodes, bool intermediate, uint64_t seed,
             const std::string& out, bool zero_rewards, const std::string& vocab, const std::string& merges,
             bool force) {
    claim_out_dir(out, force);
    checkpoint::Loaded data;
    try {
        data = checkpoint::read_file(ckpt);
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
    auto tok = checkpoint_tokenizer(data.header, vocab, merges);
    Model<float> model(checkpoint::config_from_json(data.header.at("config")), 0, tok);
    model.load_tasks_json(data.header.at("tasks"));
    checkpoint::load_into<float>(data, model, nullptr);

    auto env = make_env(env_name);
    if (!model.has_task(env->task_id())) {
        throw DataError("checkpoint has no task '" + env->task_id() + "'; trained tasks: " +
                        nlohmann::json(model.task_ids()).dump());
    }
    const int n = intermediate ? std::min(episodes, 10) : episodes;
    std::vector<double> raw;
    try {
        raw = evaluate_policy(model, *env, n, effective_seed(seed), zero_rewards);
    } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
    }
    const auto& manifest = model.task(env->task_id()).manifest;
    auto report = aggregate_by_domain(
        {make_task_eval(env->task_id(), env->domain(), raw, manifest.random_score, manifest.expert_score_mean)});
    write_report(report, out);
    const auto& t = report.tasks.front();
    std::cout << env_name << ": raw " << t.raw_mean << " +- " << t.raw_std;
    if (t.normalized) {
        std::cout << ", normalized " << t.normalized_mean << " +- " << t.normalized_std;
    } else {
        std::cout << ", normalization not applicable";
    }
    std::cout << " over " << n << " episodes\n";
    return 0;
}

int cmd_experiment(const std::string& plan_path, const std::string& out, bool force, bool verbose) {
    nlohmann::json j;
    try {
        std::ifstream f(plan_path);
        if (!f) throw std::invalid_argument("cannot open plan " + plan_path);
        f >> j;
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
    ExperimentPlan plan;
    try {
        plan = ExperimentPlan::from_json(j);
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
    if (fs::exists(fs::path(out) / "summary.json") && !force) {
        throw DataError("experiment output " + out + " already holds a summary; pass --force to redo");
    }
    fs::create_directories(out);
    std::ofstream(fs::path(out) / "plan.json") << plan.to_json().dump(2) << '\n';
    if (plan.kind == "kappa_sweep") {
        const auto result = experiments::run_kappa_sweep(plan, out, !verbose);
        for (const auto& row : result.rows) {
            std::cout << (row.control ? "control " : "kappa ") << row.kappa << ": IQM " << row.iqm_value << " ["
                      << row.iqm_ci.first << ", " << row.iqm_ci.second << "]\n";
        }
    } else {
        const auto result = experiments::run_reward_ablation(plan, out, !verbose);
        std::cout << "single " << result.single_iqm << ", with reward " << result.with_iqm << ", without reward "
                  << result.without_iqm << "; P(improvement) " << result.improvement_probability << " ["
                  << result.improvement_ci.first << ", " << result.improvement_ci.second << "]\n";
    }
    return 0;
}

int cmd_complete(const std::string& ckpt, const std::string& prompt, int max_tokens, double temperature,
                 uint64_t seed, const std::string& vocab, const std::string& merges) {
    if (prompt.empty()) throw DataError("complete: empty prompt");
    checkpoint::Loaded data;
    try {
        data = checkpoint::read_file(ckpt);
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
    auto tok = checkpoint_tokenizer(data.header, vocab, merges);
    if (!tok) throw DataError("complete: checkpoint records no tokenizer; pass --vocab/--merges");
    Model<float> model(checkpoint::config_from_json(data.header.at("config")), 0, tok);
    model.load_tasks_json(data.header.at("tasks"));
    checkpoint::load_into<float>(data, model, nullptr);

    Rng rng(effective_seed(seed));
    const auto ids = model.generate_text(nullptr, tok->encode(prompt), max_tokens, temperature,
                                         temperature > 0.0 ? &rng : nullptr);
    std::cout << prompt << tok->decode(ids) << "\n";
    return 0;
}

int cmd_caption(const std::string& ckpt, const std::string& image_path, int max_tokens, double temperature,
                uint64_t seed, const std::string& vocab, const std::string& merges) {
    checkpoint::Loaded data;
    Tensor<float> image;
    try {
        data = checkpoint::read_file(ckpt);
        image = ppm::read(image_path);
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
    auto tok = checkpoint_tokenizer(data.header, vocab, merges);
    if (!tok) throw DataError("caption: checkpoint records no tokenizer; pass --vocab/--merges");
    Model<float> model(checkpoint::config_from_json(data.header.at("config")), 0, tok);
    model.load_tasks_json(data.header.at("tasks"));
    checkpoint::load_into<float>(data, model, nullptr);

    Rng rng(effective_seed(seed));
    const auto ids = model.generate_text(&image, {}, max_tokens, temperature, temperature > 0.0 ? &rng : nullptr);
    std::cout << tok->decode(ids) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale multi-modal behavior-cloning transformer"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate an expert/random dataset or a caption corpus");
    std::string gen_env, gen_policy = "expert", gen_out, gen_vocab, gen_merges;
    int gen_episodes = 100;
    uint64_t gen_seed = 0;
    double gen_noise = 0.0, gen_sample_weight = 1.0, gen_loss_weight = 1.0;
    bool gen_force = false;
    gen->add_option("--env", gen_env, "environment name, or 'captions'")->required();
    gen->add_option("--policy", gen_policy, "expert or random");
    gen->add_option("--episodes", gen_episodes, "episode or record count");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--noise", gen_noise, "expert noise level");
    gen->add_option("--sample-weight", gen_sample_weight, "manifest sample weight");
    gen->add_option("--loss-weight", gen_loss_weight, "manifest loss weight");
    gen->add_option("--vocab", gen_vocab, "tokenizer vocab (captions)");
    gen->add_option("--merges", gen_merges, "tokenizer merges (captions)");
    gen->add_flag("--force", gen_force, "overwrite an existing output directory");

    // train
    auto* tr = app.add_subcommand("train", "behavior-cloning training from a config file");
    std::string tr_config, tr_out, tr_resume;
    bool tr_force = false, tr_verbose = false;
    tr->add_option("--config", tr_config, "run config json")->required();
    tr->add_option("--out", tr_out, "output directory")->required();
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");
    tr->add_flag("--force", tr_force, "overwrite an existing output directory");
    tr->add_flag("--verbose", tr_verbose, "log steps to stdout");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on an environment");
    std::string ev_ckpt, ev_env, ev_out, ev_vocab, ev_merges;
    int ev_episodes = 100;  // final-checkpoint protocol
    bool ev_intermediate = false, ev_zero_rewards = false, ev_force = false;
    uint64_t ev_seed = 0;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--env", ev_env)->required();
    ev->add_option("--episodes", ev_episodes, "evaluation episodes (default 100)");
    ev->add_flag("--intermediate", ev_intermediate, "intermediate-checkpoint protocol: 10 episodes");
    ev->add_option("--seed", ev_seed);
    ev->add_option("--out", ev_out, "report directory")->required();
    ev->add_flag("--zero-rewards", ev_zero_rewards, "feed zero rewards to the policy");
    ev->add_option("--vocab", ev_vocab, "tokenizer vocab override");
    ev->add_option("--merges", ev_merges, "tokenizer merges override");
    ev->add_flag("--force", ev_force, "overwrite an existing report directory");

    // experiment
    auto* ex = app.add_subcommand("experiment", "run a kappa sweep or the reward ablation from a plan file");
    std::string ex_plan, ex_out;
    bool ex_force = false, ex_verbose = false;
    ex->add_option("--plan", ex_plan)->required();
    ex->add_option("--out", ex_out)->required();
    ex->add_flag("--force", ex_force, "redo even if a summary exists");
    ex->add_flag("--verbose", ex_verbose);

    // complete
    auto* co = app.add_subcommand("complete", "greedy text completion from a checkpoint");
    std::string co_ckpt, co_prompt, co_vocab, co_merges;
    int co_max_tokens = 32;
    double co_temperature = 0.0;
    uint64_t co_seed = 0;
    co->add_option("--checkpoint", co_ckpt)->required();
    co->add_option("--prompt", co_prompt)->required();
    co->add_option("--max-tokens", co_max_tokens);
    co->add_option("--temperature", co_temperature);
    co->add_option("--seed", co_seed);
    co->add_option("--vocab", co_vocab);
    co->add_option("--merges", co_merges);

    // caption
    auto* ca = app.add_subcommand("caption", "caption a PGM/PPM image with a checkpoint");
    std::string ca_ckpt, ca_image, ca_vocab, ca_merges;
    int ca_max_tokens = 16;
    double ca_temperature = 0.0;
    uint64_t ca_seed = 0;
    ca->add_option("--checkpoint", ca_ckpt)->required();
    ca->add_option("--image", ca_image)->required();
    ca->add_option("--max-tokens", ca_max_tokens);
    ca->add_option("--temperature", ca_temperature);
    ca->add_option("--seed", ca_seed);
    ca->add_option("--vocab", ca_vocab);
    ca->add_option("--merges", ca_merges);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_data(gen_env, gen_policy, gen_episodes, effective_seed(gen_seed), gen_out, gen_noise,
                                gen_sample_weight, gen_loss_weight, gen_vocab, gen_merges, gen_force);
        }
        if (tr->parsed()) return cmd_train(tr_config, tr_out, tr_resume, tr_force, tr_verbose);
        if (ev->parsed()) {
            return cmd_eval(ev_ckpt, ev_env, ev_episodes, ev_intermediate, ev_seed, ev_out, ev_zero_rewards, ev_vocab,
                            ev_merges, ev_force);
        }
        if (ex->parsed()) return cmd_experiment(ex_plan, ex_out, ex_force, ex_verbose);
        if (co->parsed()) return cmd_complete(co_ckpt, co_prompt, co_max_tokens, co_temperature, co_seed, co_vocab,
                                              co_merges);
        if (ca->parsed()) return cmd_caption(ca_ckpt, ca_image, ca_max_tokens, ca_temperature, ca_seed, ca_vocab,
                                             ca_merges);
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
