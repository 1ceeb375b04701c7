#ifndef JAT_TRAINER_HPP_
#define JAT_TRAINER_HPP_

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "jat/evaluator.hpp"
#include "jat/model.hpp"
#include "jat/sequencer.hpp"
#include "jat/trajectory.hpp"

namespace jat {

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double peak_lr = 5e-5;
    int64_t total_steps = 0;
    double weight_decay = 0.0;
    int grad_accumulation = 2;
    int batch_size = 20;
    double clip_norm = 1.0;  // 0 disables clipping

    void validate() const {
        if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
            throw std::invalid_argument("optimizer: betas must lie in (0,1)");
        }
        if (!(eps > 0.0) || peak_lr < 0.0 || total_steps < 0 || weight_decay < 0.0 || clip_norm < 0.0) {
            throw std::invalid_argument("optimizer: negative hyperparameter");
        }
        if (grad_accumulation < 1 || batch_size < 1) {
            throw std::invalid_argument("optimizer: batch size and accumulation must be >= 1");
        }
    }
};

// linear decay from the peak to zero across training
inline double lr_at(int64_t step, const OptimizerConfig& cfg) {
    if (step < 0 || step > cfg.total_steps) throw std::invalid_argument("lr_at: step outside [0, total]");
    if (cfg.total_steps == 0) return cfg.peak_lr;
    return cfg.peak_lr * (1.0 - static_cast<double>(step) / static_cast<double>(cfg.total_steps));
}

// first/second moment accumulators aligned with the parameter store
template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    int64_t step = 0;

    static AdamState init(const ParamStore<T>& params) {
        AdamState s;
        for (const auto& e : params.entries()) {
            s.m.push_back(Tensor<T>::zeros(e.value.shape));
            s.v.push_back(Tensor<T>::zeros(e.value.shape));
        }
        return s;
    }
};

// Decoupled-weight-decay update with bias correction. Returns false and
// leaves everything untouched when any gradient is non-finite.
template <typename T>
bool adamw_step(ParamStore<T>& params, AdamState<T>& state, const OptimizerConfig& cfg, double lr) {
    auto& entries = params.entries();
    if (state.m.size() != entries.size()) throw std::invalid_argument("adamw: state/store mismatch");
    for (const auto& e : entries) {
        if (e.trainable && !e.grad.all_finite()) return false;
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t p = 0; p < entries.size(); ++p) {
        auto& e = entries[p];
        if (!e.trainable) continue;
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (int64_t i = 0; i < e.value.numel(); ++i) {
            const double g = static_cast<double>(e.grad[i]);
            const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
            const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps) +
                                  cfg.weight_decay * static_cast<double>(e.value[i]);
            e.value[i] = static_cast<T>(static_cast<double>(e.value[i]) - lr * update);
        }
    }
    return true;
}

// global-norm gradient clipping; returns the pre-clip norm
template <typename T>
double clip_gradients(ParamStore<T>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& e : params.entries()) {
        if (!e.trainable) continue;
        for (int64_t i = 0; i < e.grad.numel(); ++i) sq += static_cast<double>(e.grad[i]) * e.grad[i];
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm && norm > 0.0) {
        const T scale = static_cast<T>(max_norm / norm);
        for (auto& e : params.entries()) {
            if (!e.trainable) continue;
            for (auto& g : e.grad.data) g *= scale;
        }
    }
    return norm;
}

// categorical draw proportional to sample weights; the whole batch then
// comes from the selected dataset
inline int sample_dataset(const std::vector<double>& weights, Rng& rng) { return rng.categorical(weights); }

// ---------------------------------------------------------------------------
// training datasets: episodes packed into a sample pool
// ---------------------------------------------------------------------------
struct TrainingDataset {
    DatasetManifest manifest;
    std::vector<Sample> pool;
};

inline TrainingDataset load_training_dataset(const std::filesystem::path& dir, int max_len) {
    TrainingDataset ds;
    EpisodeReader reader(dir);
    ds.manifest = reader.manifest();
    while (auto e = reader.next()) {
        auto ep = std::make_shared<Episode>(std::move(*e));
        for (auto& chunk : pack(interleave_episode(ep, ds.manifest.task_id), max_len)) {
            ds.pool.push_back(std::move(chunk));
        }
    }
    if (ds.pool.empty()) throw std::runtime_error("dataset " + dir.string() + " produced no samples");
    return ds;
}

// ---------------------------------------------------------------------------
// checkpoints: one header json plus raw 32-bit blobs, bit-exact round trip
// ---------------------------------------------------------------------------
namespace checkpoint {

constexpr char kMagic[8] = {'J', 'A', 'T', 'C', 'K', 'P', 'T', '1'};

inline nlohmann::json config_json(const ModelConfig& c) {
    return {{"hidden", c.hidden},
            {"layers", c.layers},
            {"heads", c.heads},
            {"intermediate", c.intermediate},
            {"global_window", c.global_window},
            {"local_window", c.local_window},
            {"text_vocab", c.text_vocab},
            {"env_region", c.env_region},
            {"max_discrete_obs", c.max_discrete_obs},
            {"conv_channels", {c.conv_channels[0], c.conv_channels[1], c.conv_channels[2]}},
            {"norm_eps", c.norm_eps},
            {"init_std", c.init_std}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.hidden = j.at("hidden").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.intermediate = j.at("intermediate").get<int>();
    c.global_window = j.at("global_window").get<int>();
    c.local_window = j.at("local_window").get<int>();
    c.text_vocab = j.at("text_vocab").get<int>();
    c.env_region = j.at("env_region").get<int>();
    c.max_discrete_obs = j.at("max_discrete_obs").get<int>();
    for (int i = 0; i < 3; ++i) c.conv_channels[static_cast<size_t>(i)] = j.at("conv_channels").at(static_cast<size_t>(i)).get<int>();
    c.norm_eps = j.at("norm_eps").get<double>();
    c.init_std = j.at("init_std").get<double>();
    return c;
}

template <typename T>
void save(const std::filesystem::path& path, const Model<T>& model, const AdamState<T>* adam, int64_t train_step,
          const std::vector<uint64_t>& rng_state, const nlohmann::json& meta = {}) {
    nlohmann::json header;
    header["version"] = 1;
    header["meta"] = meta;
    header["config"] = config_json(model.config());
    header["tasks"] = model.tasks_json();
    header["train_step"] = train_step;
    header["rng_state"] = rng_state;
    header["adam_step"] = adam ? adam->step : -1;
    header["params"] = nlohmann::json::array();
    for (const auto& e : model.params().entries()) {
        header["params"].push_back({{"name", e.name}, {"shape", e.value.shape}});
    }
    const std::string head = header.dump();

    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + path.string());
    f.write(kMagic, sizeof(kMagic));
    const uint64_t head_len = head.size();
    f.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
    f.write(head.data(), static_cast<std::streamsize>(head.size()));
    auto write_blob = [&](const Tensor<T>& t) {
        std::vector<float> as32(t.data.size());
        for (size_t i = 0; i < t.data.size(); ++i) as32[i] = static_cast<float>(t.data[i]);
        f.write(reinterpret_cast<const char*>(as32.data()), static_cast<std::streamsize>(as32.size() * 4));
    };
    for (const auto& e : model.params().entries()) write_blob(e.value);
    if (adam) {
        for (const auto& t : adam->m) write_blob(t);
        for (const auto& t : adam->v) write_blob(t);
    }
}

struct Loaded {
    nlohmann::json header;
    std::vector<Tensor<float>> blobs;  // params, then adam m/v when present
};

inline Loaded read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    }
    uint64_t head_len = 0;
    f.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
    std::string head(head_len, '\0');
    f.read(head.data(), static_cast<std::streamsize>(head_len));
    if (!f) throw std::runtime_error("checkpoint: truncated header in " + path.string());
    Loaded out;
    out.header = nlohmann::json::parse(head);
    if (out.header.value("version", 0) != 1) throw std::runtime_error("checkpoint: unsupported version");

    const bool has_adam = out.header.at("adam_step").get<int64_t>() >= 0;
    std::vector<std::pair<std::string, Shape>> plan;
    for (const auto& p : out.header.at("params")) {
        plan.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<Shape>());
    }
    const int copies = has_adam ? 3 : 1;
    for (int c = 0; c < copies; ++c) {
        for (const auto& [name, shape] : plan) {
            Tensor<float> t(shape);
            f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4));
            if (!f) {
                throw std::runtime_error("checkpoint: blob for '" + name + "' truncated in " + path.string());
            }
            out.blobs.push_back(std::move(t));
        }
    }
    f.peek();
    if (!f.eof()) throw std::runtime_error("checkpoint: trailing bytes in " + path.string());
    return out;
}

// load parameter values into an existing model, verifying names and shapes
template <typename T>
void load_into(const Loaded& data, Model<T>& model, AdamState<T>* adam) {
    auto& entries = model.params().entries();
    const auto& plan = data.header.at("params");
    if (plan.size() != entries.size()) {
        throw std::runtime_error("checkpoint: parameter count mismatch (" + std::to_string(plan.size()) + " vs " +
                                 std::to_string(entries.size()) + ")");
    }
    for (size_t i = 0; i < entries.size(); ++i) {
        const auto name = plan.at(i).at("name").get<std::string>();
        const auto shape = plan.at(i).at("shape").get<Shape>();
        if (name != entries[i].name || shape != entries[i].value.shape) {
            throw std::runtime_error("checkpoint: parameter '" + entries[i].name + "' expects shape " +
                                     shape_str(entries[i].value.shape) + ", file has '" + name + "' with " +
                                     shape_str(shape));
        }
        for (size_t k = 0; k < entries[i].value.data.size(); ++k) {
            entries[i].value.data[k] = static_cast<T>(data.blobs[i].data[k]);
        }
    }
    if (adam) {
        if (data.header.at("adam_step").get<int64_t>() < 0) {
            throw std::runtime_error("checkpoint: no optimizer state stored");
        }
        adam->step = data.header.at("adam_step").get<int64_t>();
        adam->m.clear();
        adam->v.clear();
        const size_t n = entries.size();
        for (size_t i = 0; i < n; ++i) adam->m.push_back(data.blobs[n + i].template cast<T>());
        for (size_t i = 0; i < n; ++i) adam->v.push_back(data.blobs[2 * n + i].template cast<T>());
    }
}

// build a model (and optionally optimizer state) from a checkpoint file
template <typename T>
Model<T> load_model(const std::filesystem::path& path, std::shared_ptr<const BpeTokenizer> tokenizer,
                    AdamState<T>* adam = nullptr, int64_t* train_step = nullptr,
                    std::vector<uint64_t>* rng_state = nullptr) {
    const auto data = read_file(path);
    Model<T> model(config_from_json(data.header.at("config")), 0, std::move(tokenizer));
    model.load_tasks_json(data.header.at("tasks"));
    load_into(data, model, adam);
    if (train_step) *train_step = data.header.at("train_step").get<int64_t>();
    if (rng_state) *rng_state = data.header.at("rng_state").get<std::vector<uint64_t>>();
    return model;
}

}  // namespace checkpoint

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct TrainOptions {
    OptimizerConfig optimizer;
    double kappa = 0.0;
    uint64_t seed = 0;
    bool zero_rewards = false;
    int64_t checkpoint_every = 0;  // 0: only the final checkpoint
    int64_t eval_every = 0;        // 0: no interleaved evaluation
    int eval_episodes = 10;        // per checkpoint evaluation
    int64_t log_every = 10;
    std::filesystem::path out_dir;
    bool quiet = true;
    nlohmann::json checkpoint_meta;  // carried verbatim in every checkpoint
};

struct TrainResult {
    int64_t steps_done = 0;
    int64_t rejected_steps = 0;
    double final_loss = 0.0;
    std::filesystem::path final_checkpoint;
};

inline bool env_exists(const std::string& name) {
    for (const auto& n : env_catalogue()) {
        if (n == name) return true;
    }
    return false;
}

// Behavior cloning over one or more datasets. Single-writer state; fully
// deterministic under (seed, thread count). Resume continues bit-exactly
// from a saved checkpoint.
template <typename T>
TrainResult train(Model<T>& model, const std::vector<TrainingDataset>& datasets, const TrainOptions& opt,
                  const std::filesystem::path& resume_from = {}) {
    opt.optimizer.validate();
    if (datasets.empty()) throw std::invalid_argument("train: no datasets");
    for (const auto& ds : datasets) model.register_task(ds.manifest);

    std::vector<double> weights;
    for (const auto& ds : datasets) weights.push_back(ds.manifest.sample_weight);

    AdamState<T> adam = AdamState<T>::init(model.params());
    Rng rng(derive_seed(opt.seed, 0xDA7A));
    int64_t start_step = 0;
    if (!resume_from.empty()) {
        std::vector<uint64_t> rng_state;
        const auto data = checkpoint::read_file(resume_from);
        checkpoint::load_into(data, model, &adam);
        start_step = data.header.at("train_step").get<int64_t>();
        rng.load_state(data.header.at("rng_state").get<std::vector<uint64_t>>());
    }

    std::filesystem::create_directories(opt.out_dir / "checkpoints");
    const auto metrics_path = opt.out_dir / "metrics.csv";
    std::ofstream metrics(metrics_path, start_step > 0 ? std::ios::app : std::ios::trunc);
    if (start_step == 0) metrics << "step,dataset,loss,lr,grad_norm,wall_ms\n";

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result;
    double last_loss = 0.0;

    auto save_at = [&](int64_t step) {
        const auto path = opt.out_dir / "checkpoints" / ("step_" + std::to_string(step) + ".ckpt");
        checkpoint::save(path, model, &adam, step, rng.save_state(), opt.checkpoint_meta);
        return path;
    };

    if (opt.optimizer.total_steps == 0) {
        result.final_checkpoint = save_at(0);
        return result;
    }

    for (int64_t step = start_step; step < opt.optimizer.total_steps; ++step) {
        const double lr = lr_at(step, opt.optimizer);
        model.params().zero_grad();
        double step_loss = 0.0;
        std::string step_dataset;
        for (int micro = 0; micro < opt.optimizer.grad_accumulation; ++micro) {
            const int ds_index = sample_dataset(weights, rng);
            const auto& ds = datasets[static_cast<size_t>(ds_index)];
            if (!step_dataset.empty()) step_dataset += '+';
            step_dataset += ds.manifest.task_id;
            std::vector<Sample> picked;
            for (int b = 0; b < opt.optimizer.batch_size; ++b) {
                picked.push_back(ds.pool[rng.below(ds.pool.size())]);
            }
            Graph<T> g(&model.params());
            auto loss = model.batch_loss(g, make_batch(std::move(picked)), opt.kappa, opt.zero_rewards);
            auto scaled = ops::scale(g, loss, 1.0 / opt.optimizer.grad_accumulation);
            step_loss += static_cast<double>(g.value(scaled)[0]);
            g.backward(scaled);
        }
        const double grad_norm = clip_gradients(model.params(), opt.optimizer.clip_norm);
        if (!adamw_step(model.params(), adam, opt.optimizer, lr)) {
            ++result.rejected_steps;
            metrics << (step + 1) << ',' << step_dataset << ",rejected," << lr << ',' << grad_norm << ','
                    << std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()
                    << '\n';
            continue;
        }
        last_loss = step_loss;
        if ((step + 1) % opt.log_every == 0 || step + 1 == opt.optimizer.total_steps) {
            metrics << (step + 1) << ',' << step_dataset << ',' << step_loss << ',' << lr << ',' << grad_norm << ','
                    << std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()
                    << '\n';
            metrics.flush();
            if (!opt.quiet) {
                std::cout << "step " << (step + 1) << " loss " << step_loss << " lr " << lr << "\n";
            }
        }
        if (opt.checkpoint_every > 0 && (step + 1) % opt.checkpoint_every == 0 &&
            step + 1 != opt.optimizer.total_steps) {
            save_at(step + 1);
        }
        if (opt.eval_every > 0 && (step + 1) % opt.eval_every == 0) {
            for (const auto& ds : datasets) {
                if (!env_exists(ds.manifest.task_id)) continue;
                auto env = make_env(ds.manifest.task_id);
                const auto scores =
                    evaluate_policy(model, *env, opt.eval_episodes, derive_seed(opt.seed, 0xE7A1 + static_cast<uint64_t>(step)),
                                    opt.zero_rewards);
                const auto n = normalize_score(mean(scores), ds.manifest.random_score, ds.manifest.expert_score_mean);
                metrics << (step + 1) << ',' << ds.manifest.task_id << "_eval," << (n ? *n : mean(scores)) << ','
                        << lr << ",," << '\n';
            }
        }
    }
    result.steps_done = opt.optimizer.total_steps - start_step;
    result.final_loss = last_loss;
    result.final_checkpoint = save_at(opt.optimizer.total_steps);
    return result;
}

}  // namespace jat

#endif  // JAT_TRAINER_HPP_
