#ifndef JAT_EXPERIMENTS_HPP_
#define JAT_EXPERIMENTS_HPP_

#include <filesystem>
#include <fstream>
#include <set>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jat/evaluator.hpp"
#include "jat/trainer.hpp"

namespace jat {

// Turn-key reproduction harnesses. Every cell (setting x seed) trains a
// fresh model, evaluates the final checkpoint and writes one json record;
// completed cells are skipped on re-runs, so an interrupted experiment
// resumes where it stopped.

struct ExperimentPlan {
    std::string kind;  // kappa_sweep | reward_ablation
    std::vector<std::string> tasks;
    std::vector<double> kappa_grid;  // sweep only
    bool include_control = true;     // adds the kappa = 0 action-only control
    std::vector<uint64_t> seeds;
    int64_t steps_per_run = 1500;
    int episodes_per_dataset = 400;
    int eval_episodes = 100;
    double peak_lr = 3e-4;
    int batch_size = 8;
    int grad_accumulation = 2;
    double continuous_loss_weight = 10.0;
    double expert_noise = 0.0;
    double kappa_for_ablation = 0.0;
    ModelConfig model = ModelConfig::desk();
    std::string tokenizer_vocab;
    std::string tokenizer_merges;

    void validate() const {
        if (kind != "kappa_sweep" && kind != "reward_ablation") {
            throw std::invalid_argument("plan: kind must be kappa_sweep or reward_ablation, got '" + kind + "'");
        }
        if (tasks.empty()) throw std::invalid_argument("plan: no tasks");
        if (seeds.size() < 2) throw std::invalid_argument("plan: at least 2 seeds required");
        if (kind == "kappa_sweep" && kappa_grid.empty() && !include_control) {
            throw std::invalid_argument("plan: empty kappa grid");
        }
        for (double k : kappa_grid) {
            if (!(k >= 0.0 && k <= 1.0)) throw std::invalid_argument("plan: kappa outside [0,1]");
        }
        if (kind == "reward_ablation" && tasks.size() < 2) {
            throw std::invalid_argument("plan: the reward ablation needs the task pair");
        }
        if (steps_per_run < 1 || episodes_per_dataset < 1 || eval_episodes < 1) {
            throw std::invalid_argument("plan: budgets must be positive");
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = kind;
        j["tasks"] = tasks;
        j["kappa_grid"] = kappa_grid;
        j["include_control"] = include_control;
        j["seeds"] = seeds;
        j["steps_per_run"] = steps_per_run;
        j["episodes_per_dataset"] = episodes_per_dataset;
        j["eval_episodes"] = eval_episodes;
        j["peak_lr"] = peak_lr;
        j["batch_size"] = batch_size;
        j["grad_accumulation"] = grad_accumulation;
        j["continuous_loss_weight"] = continuous_loss_weight;
        j["expert_noise"] = expert_noise;
        j["kappa_for_ablation"] = kappa_for_ablation;
        j["model"] = checkpoint::config_json(model);
        j["tokenizer_vocab"] = tokenizer_vocab;
        j["tokenizer_merges"] = tokenizer_merges;
        return j;
    }

    static ExperimentPlan from_json(const nlohmann::json& j) {
        static const std::set<std::string> known = {
            "kind",          "tasks",        "kappa_grid",      "include_control",
            "seeds",         "steps_per_run", "episodes_per_dataset", "eval_episodes",
            "peak_lr",       "batch_size",   "grad_accumulation", "continuous_loss_weight",
            "expert_noise",  "kappa_for_ablation", "model",   "tokenizer_vocab", "tokenizer_merges"};
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!known.count(it.key())) throw std::invalid_argument("plan: unknown key '" + it.key() + "'");
        }
        ExperimentPlan p;
        p.kind = j.at("kind").get<std::string>();
        p.tasks = j.at("tasks").get<std::vector<std::string>>();
        if (j.contains("kappa_grid")) p.kappa_grid = j.at("kappa_grid").get<std::vector<double>>();
        p.include_control = j.value("include_control", true);
        p.seeds = j.at("seeds").get<std::vector<uint64_t>>();
        p.steps_per_run = j.value("steps_per_run", p.steps_per_run);
        p.episodes_per_dataset = j.value("episodes_per_dataset", p.episodes_per_dataset);
        p.eval_episodes = j.value("eval_episodes", p.eval_episodes);
        p.peak_lr = j.value("peak_lr", p.peak_lr);
        p.batch_size = j.value("batch_size", p.batch_size);
        p.grad_accumulation = j.value("grad_accumulation", p.grad_accumulation);
        p.continuous_loss_weight = j.value("continuous_loss_weight", p.continuous_loss_weight);
        p.expert_noise = j.value("expert_noise", p.expert_noise);
        p.kappa_for_ablation = j.value("kappa_for_ablation", p.kappa_for_ablation);
        if (j.contains("model")) p.model = checkpoint::config_from_json(j.at("model"));
        p.tokenizer_vocab = j.value("tokenizer_vocab", std::string());
        p.tokenizer_merges = j.value("tokenizer_merges", std::string());
        p.validate();
        return p;
    }
};

namespace experiments {

// FNV-1a of the resolved plan for provenance
inline std::string plan_hash(const ExperimentPlan& plan) {
    const std::string s = plan.to_json().dump();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::shared_ptr<const BpeTokenizer> plan_tokenizer(const ExperimentPlan& plan) {
    if (plan.tokenizer_vocab.empty()) return nullptr;
    return std::make_shared<const BpeTokenizer>(BpeTokenizer::load(plan.tokenizer_vocab, plan.tokenizer_merges));
}

// datasets generated once per experiment directory
inline std::filesystem::path ensure_dataset(const ExperimentPlan& plan, const std::filesystem::path& out,
                                            const std::string& task) {
    const auto dir = out / "datasets" / task;
    if (!std::filesystem::exists(dir / "manifest.json")) {
        GenerateOptions opt;
        auto env = make_env(task);
        opt.loss_weight = env->action_spec().is_discrete ? 1.0 : plan.continuous_loss_weight;
        opt.noise = plan.expert_noise;
        generate_dataset(task, "expert", plan.episodes_per_dataset, derive_seed(0xD5, std::hash<std::string>{}(task)),
                         dir, opt);
    }
    return dir;
}

struct CellResult {
    std::string name;
    std::map<std::string, std::vector<double>> normalized_scores;  // per task
    double train_seconds = 0.0;
};

// one training-plus-evaluation cell; cached as json in cells/
inline CellResult run_cell(const ExperimentPlan& plan, const std::filesystem::path& out, const std::string& name,
                           const std::vector<std::string>& tasks, double kappa, bool zero_rewards, uint64_t seed,
                           bool quiet) {
    const auto cell_path = out / "cells" / (name + ".json");
    if (std::filesystem::exists(cell_path)) {
        const auto j = nlohmann::json::parse(std::ifstream(cell_path));
        CellResult r;
        r.name = name;
        for (auto it = j.at("normalized_scores").begin(); it != j.at("normalized_scores").end(); ++it) {
            r.normalized_scores[it.key()] = it.value().get<std::vector<double>>();
        }
        r.train_seconds = j.value("train_seconds", 0.0);
        return r;
    }

    std::vector<TrainingDataset> datasets;
    for (const auto& task : tasks) {
        datasets.push_back(load_training_dataset(ensure_dataset(plan, out, task), plan.model.global_window));
    }
    Model<float> model(plan.model, derive_seed(seed, 0x30DE1), plan_tokenizer(plan));

    TrainOptions opt;
    opt.optimizer.total_steps = plan.steps_per_run;
    opt.optimizer.peak_lr = plan.peak_lr;
    opt.optimizer.batch_size = plan.batch_size;
    opt.optimizer.grad_accumulation = plan.grad_accumulation;
    opt.kappa = kappa;
    opt.zero_rewards = zero_rewards;
    opt.seed = seed;
    opt.out_dir = out / "runs" / name;
    opt.quiet = quiet;

    const auto t0 = std::chrono::steady_clock::now();
    train(model, datasets, opt);
    CellResult r;
    r.name = name;
    r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    for (const auto& ds : datasets) {
        auto env = make_env(ds.manifest.task_id);
        const auto raw = evaluate_policy(model, *env, plan.eval_episodes, derive_seed(seed, 0xE7A1),
                                         zero_rewards);
        std::vector<double> normalized;
        for (double s : raw) {
            const auto n = normalize_score(s, ds.manifest.random_score, ds.manifest.expert_score_mean);
            normalized.push_back(n.value_or(0.0));
        }
        r.normalized_scores[ds.manifest.task_id] = std::move(normalized);
    }

    std::filesystem::create_directories(out / "cells");
    nlohmann::json j;
    j["name"] = name;
    j["normalized_scores"] = nlohmann::json::object();
    for (const auto& [task, scores] : r.normalized_scores) j["normalized_scores"][task] = scores;
    j["train_seconds"] = r.train_seconds;
    std::ofstream(cell_path) << j.dump(2) << '\n';
    return r;
}

// simple grouped bar chart with CI whiskers
inline void write_bar_svg(const std::filesystem::path& path, const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::vector<std::pair<double, double>>& cis,
                          const std::string& title) {
    const int w = 120 * static_cast<int>(labels.size()) + 80, h = 320;
    double top = 0.0;
    for (size_t i = 0; i < values.size(); ++i) top = std::max({top, values[i], cis[i].second});
    top = std::max(top * 1.15, 0.1);
    std::ofstream f(path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    f << "<text x='10' y='20' font-size='14'>" << title << "</text>\n";
    const int base = h - 40, avail = h - 80;
    for (size_t i = 0; i < labels.size(); ++i) {
        const int x = 60 + static_cast<int>(i) * 120;
        const int bh = static_cast<int>(values[i] / top * avail);
        f << "<rect x='" << x << "' y='" << (base - bh) << "' width='60' height='" << bh
          << "' fill='#4878a8'/>\n";
        const int lo = base - static_cast<int>(cis[i].first / top * avail);
        const int hi = base - static_cast<int>(cis[i].second / top * avail);
        f << "<line x1='" << (x + 30) << "' y1='" << lo << "' x2='" << (x + 30) << "' y2='" << hi
          << "' stroke='black' stroke-width='2'/>\n";
        f << "<line x1='" << (x + 20) << "' y1='" << lo << "' x2='" << (x + 40) << "' y2='" << lo
          << "' stroke='black'/>\n";
        f << "<line x1='" << (x + 20) << "' y1='" << hi << "' x2='" << (x + 40) << "' y2='" << hi
          << "' stroke='black'/>\n";
        f << "<text x='" << x << "' y='" << (base + 16) << "' font-size='12'>" << labels[i] << "</text>\n";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", values[i]);
        f << "<text x='" << x << "' y='" << (base - bh - 6) << "' font-size='11'>" << buf << "</text>\n";
    }
    f << "</svg>\n";
}

struct KappaRow {
    double kappa = 0.0;
    bool control = false;
    double iqm_value = 0.0;
    double mean_value = 0.0;
    std::pair<double, double> iqm_ci{0, 0};
};

struct KappaSweepResult {
    std::vector<KappaRow> rows;
    nlohmann::json report;
};

inline KappaSweepResult run_kappa_sweep(const ExperimentPlan& plan, const std::filesystem::path& out,
                                        bool quiet = true) {
    plan.validate();
    if (plan.kind != "kappa_sweep") throw std::invalid_argument("plan kind is not kappa_sweep");
    std::filesystem::create_directories(out);

    std::vector<std::pair<double, bool>> settings;  // kappa, is_control
    if (plan.include_control) settings.push_back({0.0, true});
    for (double k : plan.kappa_grid) {
        if (k == 0.0 && plan.include_control) continue;  // the control already covers it
        settings.push_back({k, false});
    }

    std::ofstream csv(out / "results.csv");
    csv << "kappa,is_control,seed,task,normalized_mean,episodes\n";

    KappaSweepResult result;
    nlohmann::json cells_json = nlohmann::json::array();
    for (const auto& [kappa, control] : settings) {
        std::map<std::string, std::vector<double>> strata;  // task x seed
        for (uint64_t seed : plan.seeds) {
            char name[96];
            std::snprintf(name, sizeof(name), "kappa_%g_seed_%llu", kappa, static_cast<unsigned long long>(seed));
            const auto cell = run_cell(plan, out, name, plan.tasks, kappa, false, seed, quiet);
            for (const auto& [task, scores] : cell.normalized_scores) {
                strata[task + "/s" + std::to_string(seed)] = scores;
                csv << kappa << ',' << control << ',' << seed << ',' << task << ',' << mean(scores) << ','
                    << scores.size() << '\n';
                nlohmann::json cj;
                cj["cell"] = name;
                cj["task"] = task;
                cj["normalized_mean"] = mean(scores);
                cells_json.push_back(std::move(cj));
            }
        }
        std::vector<double> pooled;
        for (const auto& [k2, v] : strata) pooled.insert(pooled.end(), v.begin(), v.end());
        KappaRow row;
        row.kappa = kappa;
        row.control = control;
        row.iqm_value = iqm(pooled);
        row.mean_value = mean(pooled);
        row.iqm_ci = stratified_bootstrap_ci(strata, [](const std::vector<double>& v) { return iqm(v); }, 0.95, 2000,
                                             derive_seed(0xC1, static_cast<uint64_t>(kappa * 1e6)));
        result.rows.push_back(row);
    }

    nlohmann::json summary;
    summary["plan"] = plan.to_json();
    summary["plan_hash"] = plan_hash(plan);
    summary["cells"] = cells_json;
    summary["aggregate"] = nlohmann::json::array();
    std::vector<std::string> labels;
    std::vector<double> values;
    std::vector<std::pair<double, double>> cis;
    for (const auto& row : result.rows) {
        nlohmann::json r;
        r["kappa"] = row.kappa;
        r["control"] = row.control;
        r["iqm"] = row.iqm_value;
        r["mean"] = row.mean_value;
        r["iqm_ci"] = {row.iqm_ci.first, row.iqm_ci.second};
        summary["aggregate"].push_back(std::move(r));
        labels.push_back(row.control ? "control" : ("k=" + std::to_string(row.kappa).substr(0, 6)));
        values.push_back(row.iqm_value);
        cis.push_back(row.iqm_ci);
    }
    std::filesystem::create_directories(out / "plots");
    write_bar_svg(out / "plots" / "kappa_iqm.svg", labels, values, cis, "normalized IQM per kappa");
    std::ofstream(out / "summary.json") << summary.dump(2) << '\n';
    result.report = std::move(summary);
    return result;
}

struct RewardAblationResult {
    double single_iqm = 0.0, with_iqm = 0.0, without_iqm = 0.0;
    double single_mean = 0.0, with_mean = 0.0, without_mean = 0.0;
    std::pair<double, double> single_ci{0, 0}, with_ci{0, 0}, without_ci{0, 0};
    double improvement_probability = 0.5;  // with-reward over without-reward
    std::pair<double, double> improvement_ci{0, 0};
    nlohmann::json report;
};

inline RewardAblationResult run_reward_ablation(const ExperimentPlan& plan, const std::filesystem::path& out,
                                                bool quiet = true) {
    plan.validate();
    if (plan.kind != "reward_ablation") throw std::invalid_argument("plan kind is not reward_ablation");
    std::filesystem::create_directories(out);

    const double kappa = plan.kappa_for_ablation;
    std::map<std::string, std::vector<double>> single_strata, with_strata, without_strata;
    std::map<std::string, std::vector<double>> with_by_task, without_by_task;  // pooled over seeds

    std::ofstream csv(out / "results.csv");
    csv << "setting,seed,task,normalized_mean,episodes\n";
    auto record = [&](const std::string& setting, uint64_t seed, const CellResult& cell,
                      std::map<std::string, std::vector<double>>& strata,
                      std::map<std::string, std::vector<double>>* by_task) {
        for (const auto& [task, scores] : cell.normalized_scores) {
            strata[task + "/s" + std::to_string(seed)] = scores;
            if (by_task) {
                auto& dst = (*by_task)[task];
                dst.insert(dst.end(), scores.begin(), scores.end());
            }
            csv << setting << ',' << seed << ',' << task << ',' << mean(scores) << ',' << scores.size() << '\n';
        }
    };

    for (uint64_t seed : plan.seeds) {
        // (a) one dedicated model per task
        for (const auto& task : plan.tasks) {
            const auto cell = run_cell(plan, out, "single_" + task + "_seed_" + std::to_string(seed), {task}, kappa,
                                       false, seed, quiet);
            record("single", seed, cell, single_strata, nullptr);
        }
        // (b) one joint model with rewards zeroed at the embedding
        const auto no_reward = run_cell(plan, out, "noreward_seed_" + std::to_string(seed), plan.tasks, kappa, true,
                                        seed, quiet);
        record("joint_without_reward", seed, no_reward, without_strata, &without_by_task);
        // (c) the full joint model with true rewards
        const auto with_reward = run_cell(plan, out, "withreward_seed_" + std::to_string(seed), plan.tasks, kappa,
                                          false, seed, quiet);
        record("joint_with_reward", seed, with_reward, with_strata, &with_by_task);
    }

    auto pool = [](const std::map<std::string, std::vector<double>>& strata) {
        std::vector<double> all;
        for (const auto& [k, v] : strata) all.insert(all.end(), v.begin(), v.end());
        return all;
    };
    auto iqm_stat = [](const std::vector<double>& v) { return iqm(v); };

    RewardAblationResult r;
    r.single_iqm = iqm(pool(single_strata));
    r.with_iqm = iqm(pool(with_strata));
    r.without_iqm = iqm(pool(without_strata));
    r.single_mean = mean(pool(single_strata));
    r.with_mean = mean(pool(with_strata));
    r.without_mean = mean(pool(without_strata));
    r.single_ci = stratified_bootstrap_ci(single_strata, iqm_stat, 0.95, 2000, 11);
    r.with_ci = stratified_bootstrap_ci(with_strata, iqm_stat, 0.95, 2000, 12);
    r.without_ci = stratified_bootstrap_ci(without_strata, iqm_stat, 0.95, 2000, 13);
    r.improvement_probability = probability_of_improvement(with_by_task, without_by_task);
    r.improvement_ci = probability_of_improvement_ci(with_by_task, without_by_task, 0.95, 2000, 14);

    nlohmann::json summary;
    summary["plan"] = plan.to_json();
    summary["plan_hash"] = plan_hash(plan);
    summary["aggregate"] = {
        {"single", {{"iqm", r.single_iqm}, {"mean", r.single_mean}, {"iqm_ci", {r.single_ci.first, r.single_ci.second}}}},
        {"joint_with_reward",
         {{"iqm", r.with_iqm}, {"mean", r.with_mean}, {"iqm_ci", {r.with_ci.first, r.with_ci.second}}}},
        {"joint_without_reward",
         {{"iqm", r.without_iqm}, {"mean", r.without_mean}, {"iqm_ci", {r.without_ci.first, r.without_ci.second}}}},
    };
    summary["probability_of_improvement"] = {
        {"with_over_without", r.improvement_probability},
        {"ci", {r.improvement_ci.first, r.improvement_ci.second}},
    };
    std::filesystem::create_directories(out / "plots");
    write_bar_svg(out / "plots" / "reward_ablation_iqm.svg", {"single", "with_reward", "without_reward"},
                  {r.single_iqm, r.with_iqm, r.without_iqm}, {r.single_ci, r.with_ci, r.without_ci},
                  "normalized IQM per setting");
    write_bar_svg(out / "plots" / "improvement_probability.svg", {"with_over_without"}, {r.improvement_probability},
                  {r.improvement_ci}, "probability of improvement");
    std::ofstream(out / "summary.json") << summary.dump(2) << '\n';
    r.report = std::move(summary);
    return r;
}

}  // namespace experiments

}  // namespace jat

#endif  // JAT_EXPERIMENTS_HPP_
