#ifndef JAT_RUNCONFIG_HPP_
#define JAT_RUNCONFIG_HPP_

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "jat/trainer.hpp"

namespace jat {

// Training run configuration file: json, schema-validated, unknown keys
// rejected. A resolved copy is written next to every run's outputs.
struct RunConfig {
    ModelConfig model = ModelConfig::desk();
    uint64_t model_seed = 0;
    std::string tokenizer_vocab;
    std::string tokenizer_merges;
    OptimizerConfig optimizer;
    double kappa = 0.0;
    struct DatasetRef {
        std::string path;
        std::optional<double> sample_weight;  // overrides the manifest
        std::optional<double> loss_weight;
    };
    std::vector<DatasetRef> datasets;
    uint64_t seed = 0;
    bool zero_rewards = false;
    int64_t checkpoint_every = 0;
    int64_t eval_every = 0;
    int eval_episodes = 10;
    int64_t log_every = 10;

    static void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                               const std::string& where) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!known.count(it.key())) {
                throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
            }
        }
    }

    static ModelConfig model_from_json(const nlohmann::json& j) {
        reject_unknown(j,
                       {"preset", "hidden", "layers", "heads", "intermediate", "global_window", "local_window",
                        "text_vocab", "env_region", "max_discrete_obs", "conv_channels", "norm_eps", "init_std"},
                       "model");
        ModelConfig c = ModelConfig::desk();
        if (j.contains("preset")) {
            const auto preset = j.at("preset").get<std::string>();
            if (preset == "desk") {
                c = ModelConfig::desk();
            } else if (preset == "paper") {
                c = ModelConfig::paper_default();
            } else {
                throw std::invalid_argument("config: unknown model preset '" + preset + "'");
            }
        }
        if (j.contains("hidden")) c.hidden = j.at("hidden").get<int>();
        if (j.contains("layers")) c.layers = j.at("layers").get<int>();
        if (j.contains("heads")) c.heads = j.at("heads").get<int>();
        if (j.contains("intermediate")) c.intermediate = j.at("intermediate").get<int>();
        if (j.contains("global_window")) c.global_window = j.at("global_window").get<int>();
        if (j.contains("local_window")) c.local_window = j.at("local_window").get<int>();
        if (j.contains("text_vocab")) c.text_vocab = j.at("text_vocab").get<int>();
        if (j.contains("env_region")) c.env_region = j.at("env_region").get<int>();
        if (j.contains("max_discrete_obs")) c.max_discrete_obs = j.at("max_discrete_obs").get<int>();
        if (j.contains("conv_channels")) {
            for (int i = 0; i < 3; ++i) {
                c.conv_channels[static_cast<size_t>(i)] = j.at("conv_channels").at(static_cast<size_t>(i)).get<int>();
            }
        }
        if (j.contains("norm_eps")) c.norm_eps = j.at("norm_eps").get<double>();
        if (j.contains("init_std")) c.init_std = j.at("init_std").get<double>();
        c.validate();
        return c;
    }

    static RunConfig load(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw std::invalid_argument("config: cannot open " + path.string());
        nlohmann::json j;
        try {
            f >> j;
        } catch (const std::exception& e) {
            throw std::invalid_argument("config: malformed json in " + path.string() + ": " + e.what());
        }
        reject_unknown(j, {"model", "model_seed", "tokenizer", "optimizer", "loss", "data", "train"}, "config root");

        RunConfig c;
        if (j.contains("model")) c.model = model_from_json(j.at("model"));
        c.model_seed = j.value("model_seed", 0ull);
        if (j.contains("tokenizer")) {
            reject_unknown(j.at("tokenizer"), {"vocab", "merges"}, "tokenizer");
            c.tokenizer_vocab = j.at("tokenizer").at("vocab").get<std::string>();
            c.tokenizer_merges = j.at("tokenizer").at("merges").get<std::string>();
        }
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            reject_unknown(o,
                           {"beta1", "beta2", "eps", "peak_lr", "total_steps", "weight_decay", "grad_accumulation",
                            "batch_size", "clip_norm"},
                           "optimizer");
            c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
            c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
            c.optimizer.eps = o.value("eps", c.optimizer.eps);
            c.optimizer.peak_lr = o.value("peak_lr", c.optimizer.peak_lr);
            c.optimizer.total_steps = o.value("total_steps", c.optimizer.total_steps);
            c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
            c.optimizer.grad_accumulation = o.value("grad_accumulation", c.optimizer.grad_accumulation);
            c.optimizer.batch_size = o.value("batch_size", c.optimizer.batch_size);
            c.optimizer.clip_norm = o.value("clip_norm", c.optimizer.clip_norm);
            c.optimizer.validate();
        }
        if (j.contains("loss")) {
            reject_unknown(j.at("loss"), {"kappa"}, "loss");
            c.kappa = j.at("loss").value("kappa", 0.0);
            if (!(c.kappa >= 0.0 && c.kappa <= 1.0)) throw std::invalid_argument("config: kappa outside [0,1]");
        }
        if (!j.contains("data")) throw std::invalid_argument("config: missing 'data' section");
        reject_unknown(j.at("data"), {"datasets"}, "data");
        for (const auto& d : j.at("data").at("datasets")) {
            reject_unknown(d, {"path", "sample_weight", "loss_weight"}, "dataset entry");
            DatasetRef ref;
            ref.path = d.at("path").get<std::string>();
            if (d.contains("sample_weight")) ref.sample_weight = d.at("sample_weight").get<double>();
            if (d.contains("loss_weight")) ref.loss_weight = d.at("loss_weight").get<double>();
            c.datasets.push_back(std::move(ref));
        }
        if (c.datasets.empty()) throw std::invalid_argument("config: no datasets listed");
        if (j.contains("train")) {
            const auto& t = j.at("train");
            reject_unknown(t, {"seed", "zero_rewards", "checkpoint_every", "eval_every", "eval_episodes", "log_every"},
                           "train");
            c.seed = t.value("seed", 0ull);
            c.zero_rewards = t.value("zero_rewards", false);
            c.checkpoint_every = t.value("checkpoint_every", c.checkpoint_every);
            c.eval_every = t.value("eval_every", c.eval_every);
            c.eval_episodes = t.value("eval_episodes", c.eval_episodes);
            c.log_every = t.value("log_every", c.log_every);
        }
        return c;
    }

    // every referenced path must exist before the run starts
    void check_paths() const {
        for (const auto& d : datasets) {
            if (!std::filesystem::exists(std::filesystem::path(d.path) / "manifest.json")) {
                throw std::invalid_argument("config: dataset path missing or not a dataset: " + d.path);
            }
        }
        if (!tokenizer_vocab.empty() && !std::filesystem::exists(tokenizer_vocab)) {
            throw std::invalid_argument("config: tokenizer vocab missing: " + tokenizer_vocab);
        }
        if (!tokenizer_merges.empty() && !std::filesystem::exists(tokenizer_merges)) {
            throw std::invalid_argument("config: tokenizer merges missing: " + tokenizer_merges);
        }
    }

    nlohmann::json resolved_json() const {
        nlohmann::json j;
        j["model"] = checkpoint::config_json(model);
        j["model_seed"] = model_seed;
        j["tokenizer"] = {{"vocab", tokenizer_vocab}, {"merges", tokenizer_merges}};
        j["optimizer"] = {{"beta1", optimizer.beta1},
                          {"beta2", optimizer.beta2},
                          {"eps", optimizer.eps},
                          {"peak_lr", optimizer.peak_lr},
                          {"total_steps", optimizer.total_steps},
                          {"weight_decay", optimizer.weight_decay},
                          {"grad_accumulation", optimizer.grad_accumulation},
                          {"batch_size", optimizer.batch_size},
                          {"clip_norm", optimizer.clip_norm}};
        j["loss"] = {{"kappa", kappa}};
        j["data"]["datasets"] = nlohmann::json::array();
        for (const auto& d : datasets) {
            nlohmann::json dj;
            dj["path"] = d.path;
            if (d.sample_weight) dj["sample_weight"] = *d.sample_weight;
            if (d.loss_weight) dj["loss_weight"] = *d.loss_weight;
            j["data"]["datasets"].push_back(std::move(dj));
        }
        j["train"] = {{"seed", seed},
                      {"zero_rewards", zero_rewards},
                      {"checkpoint_every", checkpoint_every},
                      {"eval_every", eval_every},
                      {"eval_episodes", eval_episodes},
                      {"log_every", log_every}};
        return j;
    }
};

}  // namespace jat

#endif  // JAT_RUNCONFIG_HPP_
