#ifndef JAT_MODEL_HPP_
#define JAT_MODEL_HPP_

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "jat/embedding.hpp"
#include "jat/heads.hpp"
#include "jat/sequencer.hpp"
#include "jat/tokenizer.hpp"
#include "jat/toyenvs.hpp"
#include "jat/transformer.hpp"

namespace jat {

// A registered task owns a contiguous slice of the env-discrete region:
// first its observation symbol alphabet, then its action ids.
struct TaskInfo {
    DatasetManifest manifest;
    int region_offset = 0;

    int region_size() const {
        const int symbols = manifest.observation.kind == Modality::kDiscrete ? manifest.observation.alphabet : 0;
        const int actions = manifest.action.is_discrete ? manifest.action.count : 0;
        return symbols + actions;
    }
};

template <typename T>
class Model {
public:
    Model(ModelConfig cfg, uint64_t seed, std::shared_ptr<const BpeTokenizer> tokenizer)
        : cfg_(cfg), tokenizer_(std::move(tokenizer)) {
        cfg_.validate();
        if (tokenizer_ && static_cast<int>(tokenizer_->vocab_size()) > cfg_.text_vocab) {
            throw std::invalid_argument("model: tokenizer vocabulary " + std::to_string(tokenizer_->vocab_size()) +
                                        " exceeds configured text region " + std::to_string(cfg_.text_vocab));
        }
        Rng rng(seed);
        register_encoder_params(params_, cfg_, rng);
        core::register_params(params_, cfg_, rng);
        heads::register_params(params_, cfg_, rng);
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }
    const BpeTokenizer* tokenizer() const { return tokenizer_.get(); }

    // ---------------------------------------------------------------------
    // task registry
    // ---------------------------------------------------------------------
    void register_task(const DatasetManifest& m) {
        auto it = tasks_.find(m.task_id);
        if (it != tasks_.end()) {
            if (!(it->second.manifest.observation == m.observation) || !(it->second.manifest.action == m.action)) {
                throw std::invalid_argument("model: task '" + m.task_id + "' re-registered with different specs");
            }
            return;
        }
        TaskInfo info;
        info.manifest = m;
        info.region_offset = next_region_;
        if (m.observation.kind == Modality::kDiscrete && m.mission_budget + m.observation.length > cfg_.max_discrete_obs) {
            throw std::invalid_argument("model: task '" + m.task_id + "' needs " +
                                        std::to_string(m.mission_budget + m.observation.length) +
                                        " symbol slots, config allows " + std::to_string(cfg_.max_discrete_obs));
        }
        if (next_region_ + info.region_size() > cfg_.env_region) {
            throw std::invalid_argument("model: env-discrete region of " + std::to_string(cfg_.env_region) +
                                        " rows cannot fit task '" + m.task_id + "'");
        }
        next_region_ += info.region_size();
        task_order_.push_back(m.task_id);
        tasks_.emplace(m.task_id, std::move(info));
    }

    bool has_task(const std::string& id) const { return tasks_.count(id) > 0; }

    const TaskInfo& task(const std::string& id) const {
        auto it = tasks_.find(id);
        if (it == tasks_.end()) throw std::out_of_range("model: unregistered task '" + id + "'");
        return it->second;
    }

    const std::vector<std::string>& task_ids() const { return task_order_; }

    // ids in the shared table: text tokens keep their ids, task symbols and
    // actions live after the text region
    int symbol_id(const TaskInfo& t, int symbol) const {
        if (symbol < 0 || symbol >= t.manifest.observation.alphabet) {
            throw std::invalid_argument("model: symbol " + std::to_string(symbol) + " outside alphabet of " +
                                        std::to_string(t.manifest.observation.alphabet));
        }
        return cfg_.text_vocab + t.region_offset + symbol;
    }

    int action_id(const TaskInfo& t, int action) const {
        if (action < 0 || action >= t.manifest.action.count) {
            throw std::invalid_argument("model: action " + std::to_string(action) + " outside [0," +
                                        std::to_string(t.manifest.action.count) + ")");
        }
        const int symbols = t.manifest.observation.kind == Modality::kDiscrete ? t.manifest.observation.alphabet : 0;
        return cfg_.text_vocab + t.region_offset + symbols + action;
    }

    int action_base(const TaskInfo& t) const {
        const int symbols = t.manifest.observation.kind == Modality::kDiscrete ? t.manifest.observation.alphabet : 0;
        return cfg_.text_vocab + t.region_offset + symbols;
    }

    // mission tokens padded/truncated to the task's budget
    std::vector<int> mission_ids(const TaskInfo& t, const std::string& mission) const {
        const int budget = t.manifest.mission_budget;
        if (budget == 0) return {};
        auto it = mission_cache_.find(mission);
        if (it == mission_cache_.end()) {
            if (!tokenizer_) throw std::logic_error("model: mission text present but no tokenizer attached");
            auto ids = tokenizer_->encode(mission);
            const int pad_id = tokenizer_->end_of_text_id() >= 0 ? tokenizer_->end_of_text_id() : 0;
            ids.resize(static_cast<size_t>(budget), pad_id);
            it = mission_cache_.emplace(mission, std::move(ids)).first;
        }
        auto ids = it->second;
        ids.resize(static_cast<size_t>(budget),
                   tokenizer_ && tokenizer_->end_of_text_id() >= 0 ? tokenizer_->end_of_text_id() : 0);
        return ids;
    }

    // global id vector for one discrete observation (mission first)
    std::vector<int> observation_ids(const TaskInfo& t, const Observation& obs, const std::string& mission) const {
        std::vector<int> ids = mission_ids(t, mission);
        ids.reserve(ids.size() + obs.discrete.size());
        for (int v : obs.discrete) ids.push_back(symbol_id(t, v));
        return ids;
    }

    // ---------------------------------------------------------------------
    // batched embedding of samples: [B, L, H] with zero rows at padding
    // ---------------------------------------------------------------------
    struct EmbeddedBatch {
        ops::Var<T> rows;  // [B * L, H]
        int batch = 0;
        int max_len = 0;
    };

    EmbeddedBatch embed_batch(Graph<T>& g, const Batch& batch, bool zero_rewards = false) {
        const int b = static_cast<int>(batch.samples.size());
        const int max_len = batch.max_len;

        std::vector<Tensor<T>> cont_rows_data;     // continuous obs/action rows
        std::vector<int> cont_dest;
        std::vector<std::vector<int>> disc_obs_ids;
        std::vector<float> disc_obs_rewards;
        std::vector<int> disc_obs_dest;
        std::vector<Tensor<T>> image_data;         // preprocessed 4x84x84
        std::vector<int> image_dest;
        std::vector<int> lookup_ids;               // discrete actions and text tokens
        std::vector<int> lookup_dest;
        std::vector<Tensor<T>> patch_data;         // preprocessed 3x224x224
        std::vector<int> patch_dest_start;

        for (int s = 0; s < b; ++s) {
            const Sample& sample = batch.samples[static_cast<size_t>(s)];
            const TaskInfo* info = sample.is_decision() ? &task(sample.episode->task_id) : nullptr;
            for (int i = 0; i < sample.length(); ++i) {
                const auto& pos = sample.positions[static_cast<size_t>(i)];
                const int dest = s * max_len + i;
                switch (pos.role) {
                    case Role::kObsContinuous: {
                        const auto& obs = sample.episode->observations[static_cast<size_t>(pos.index)];
                        const float reward =
                            zero_rewards ? 0.0f : observation_reward(*sample.episode, pos.timestep);
                        cont_rows_data.push_back(encode::augment_continuous<T>(obs.continuous, reward, true));
                        cont_dest.push_back(dest);
                        break;
                    }
                    case Role::kObsDiscrete: {
                        const auto& obs = sample.episode->observations[static_cast<size_t>(pos.index)];
                        disc_obs_ids.push_back(observation_ids(*info, obs, sample.episode->text_mission));
                        disc_obs_rewards.push_back(zero_rewards ? 0.0f
                                                                : observation_reward(*sample.episode, pos.timestep));
                        disc_obs_dest.push_back(dest);
                        break;
                    }
                    case Role::kObsImage: {
                        const auto& obs = sample.episode->observations[static_cast<size_t>(pos.index)];
                        image_data.push_back(imageops::preprocess_observation_image(obs.image.template cast<T>()));
                        image_dest.push_back(dest);
                        break;
                    }
                    case Role::kActContinuous: {
                        const auto& act = sample.episode->actions[static_cast<size_t>(pos.index)];
                        cont_rows_data.push_back(encode::augment_continuous<T>(act.continuous, 0.0f, false));
                        cont_dest.push_back(dest);
                        break;
                    }
                    case Role::kActDiscrete: {
                        const auto& act = sample.episode->actions[static_cast<size_t>(pos.index)];
                        lookup_ids.push_back(action_id(*info, act.discrete));
                        lookup_dest.push_back(dest);
                        break;
                    }
                    case Role::kText: {
                        const int tok = sample.tokens.at(static_cast<size_t>(pos.index));
                        if (tok < 0 || tok >= cfg_.text_vocab) {
                            throw std::invalid_argument("model: text id " + std::to_string(tok) +
                                                        " outside the text region");
                        }
                        lookup_ids.push_back(tok);
                        lookup_dest.push_back(dest);
                        break;
                    }
                    case Role::kImagePatch: {
                        if (pos.index == 0) {  // one scatter block per image
                            patch_data.push_back(sample.image->template cast<T>());
                            patch_dest_start.push_back(dest);
                        }
                        break;
                    }
                    case Role::kPad:
                        break;
                }
            }
        }

        std::vector<ops::Var<T>> row_blocks;
        std::vector<int> destinations;
        auto push_block = [&](ops::Var<T> rows, const std::vector<int>& dest) {
            row_blocks.push_back(rows);
            destinations.insert(destinations.end(), dest.begin(), dest.end());
        };

        if (!cont_rows_data.empty()) {
            Tensor<T> stacked({static_cast<int>(cont_rows_data.size()), kMaxContinuous});
            for (size_t r = 0; r < cont_rows_data.size(); ++r) {
                std::memcpy(stacked.data.data() + r * kMaxContinuous, cont_rows_data[r].data.data(),
                            sizeof(T) * kMaxContinuous);
            }
            push_block(encode::continuous_rows(g, g.constant(std::move(stacked))), cont_dest);
        }
        if (!disc_obs_ids.empty()) {
            push_block(encode::discrete_observation_rows(g, cfg_, disc_obs_ids, disc_obs_rewards), disc_obs_dest);
        }
        if (!image_data.empty()) {
            Tensor<T> stacked({static_cast<int>(image_data.size()), ModelConfig::kImageChannels,
                               ModelConfig::kImageSide, ModelConfig::kImageSide});
            const int64_t plane = image_data.front().numel();
            for (size_t r = 0; r < image_data.size(); ++r) {
                std::memcpy(stacked.data.data() + static_cast<int64_t>(r) * plane, image_data[r].data.data(),
                            sizeof(T) * static_cast<size_t>(plane));
            }
            push_block(encode::image_observation_rows(g, cfg_, g.constant(std::move(stacked))), image_dest);
        }
        if (!lookup_ids.empty()) {
            push_block(encode::table_rows(g, lookup_ids), lookup_dest);
        }
        if (!patch_data.empty()) {
            const int n_patch_rows = (ModelConfig::kPatchSide / ModelConfig::kPatch) *
                                     (ModelConfig::kPatchSide / ModelConfig::kPatch);
            Tensor<T> stacked({static_cast<int>(patch_data.size()), 3, ModelConfig::kPatchSide,
                               ModelConfig::kPatchSide});
            const int64_t plane = patch_data.front().numel();
            for (size_t r = 0; r < patch_data.size(); ++r) {
                std::memcpy(stacked.data.data() + static_cast<int64_t>(r) * plane, patch_data[r].data.data(),
                            sizeof(T) * static_cast<size_t>(plane));
            }
            auto rows = encode::patch_rows(g, cfg_, g.constant(std::move(stacked)));
            std::vector<int> dest;
            for (int img = 0; img < static_cast<int>(patch_data.size()); ++img) {
                for (int p = 0; p < n_patch_rows; ++p) dest.push_back(patch_dest_start[static_cast<size_t>(img)] + p);
            }
            push_block(rows, dest);
        }

        if (row_blocks.empty()) throw std::invalid_argument("model: batch produced no embeddings");
        auto all_rows = row_blocks.size() == 1 ? row_blocks[0] : ops::concat(g, 0, row_blocks);
        EmbeddedBatch out;
        out.rows = ops::scatter_rows(g, all_rows, destinations, b * max_len);
        out.batch = b;
        out.max_len = max_len;
        return out;
    }

    // ---------------------------------------------------------------------
    // sequence loss over a batch (mean of per-sample losses)
    // ---------------------------------------------------------------------
    ops::Var<T> batch_loss(Graph<T>& g, const Batch& batch, double kappa, bool zero_rewards = false) {
        const int b = static_cast<int>(batch.samples.size());
        auto embedded = embed_batch(g, batch, zero_rewards);
        auto core_out = core::forward(g, cfg_, ops::reshape(g, embedded.rows, {b, batch.max_len, cfg_.hidden}));
        auto flat = ops::reshape(g, core_out, {b * batch.max_len, cfg_.hidden});

        std::vector<ops::Var<T>> sample_losses;
        for (int s = 0; s < b; ++s) {
            const Sample& sample = batch.samples[static_cast<size_t>(s)];
            const MaskSet masks = build_masks(sample);
            const int base = s * batch.max_len;
            if (sample.is_decision()) {
                const TaskInfo& info = task(sample.episode->task_id);
                LossSpec spec{kappa, info.manifest.loss_weight};
                if (masks.act_positions.empty()) {
                    throw std::invalid_argument("loss: decision sample with an empty action mask (degenerate chunk)");
                }
                auto l_act = action_loss(g, flat, sample, info, masks, base);
                std::optional<ops::Var<T>> l_obs;
                if (kappa != 0.0) l_obs = observation_loss(g, flat, sample, info, masks, base, zero_rewards);
                sample_losses.push_back(heads::kappa_mix(g, l_obs, l_act, spec));
            } else {
                if (masks.text_positions.empty()) {
                    throw std::invalid_argument("loss: text sample with no text targets");
                }
                sample_losses.push_back(text_loss(g, flat, sample, masks, base));
            }
        }
        auto stacked = sample_losses.size() == 1 ? sample_losses[0] : ops::concat(g, 0, sample_losses);
        return ops::mean_all(g, stacked);
    }

    // ---------------------------------------------------------------------
    // greedy evaluation policy with a sliding context
    // ---------------------------------------------------------------------
    class PolicyRunner {
    public:
        PolicyRunner(Model& model, const std::string& task_id, bool zero_rewards = false)
            : model_(model), info_(model.task(task_id)), zero_rewards_(zero_rewards) {}

        void begin_episode(const Observation& obs, const std::string& mission) {
            context_.clear();
            mission_ = mission;
            push_observation(obs, 0.0f);
        }

        // greedy action from the current context
        Action act() {
            Graph<T> g(&model_.params_);
            const int l = static_cast<int>(context_.size());
            Tensor<T> ctx({1, l, model_.cfg_.hidden});
            for (int i = 0; i < l; ++i) {
                std::memcpy(ctx.data.data() + static_cast<int64_t>(i) * model_.cfg_.hidden,
                            context_[static_cast<size_t>(i)].data.data(),
                            sizeof(T) * static_cast<size_t>(model_.cfg_.hidden));
            }
            auto out = core::forward(g, model_.cfg_, g.constant(std::move(ctx)));
            auto last = ops::slice(g, out, {0, l - 1, 0}, {1, 1, model_.cfg_.hidden});
            auto row = ops::reshape(g, last, {1, model_.cfg_.hidden});
            if (info_.manifest.action.is_discrete) {
                auto logits = heads::decode_discrete(g, row);
                Tensor<T> lrow({model_.cfg_.table_rows()});
                std::memcpy(lrow.data.data(), g.value(logits).data.data(),
                            sizeof(T) * static_cast<size_t>(model_.cfg_.table_rows()));
                const int base = model_.action_base(info_);
                const int id = heads::restricted_argmax(lrow, base, base + info_.manifest.action.count);
                last_action_ = Action::make_discrete(id - base);
            } else {
                auto pred = heads::decode_continuous(g, row);
                std::vector<float> v(static_cast<size_t>(info_.manifest.action.length));
                for (size_t i = 0; i < v.size(); ++i) {
                    v[i] = static_cast<float>(g.value(pred)[static_cast<int64_t>(i)]);
                }
                last_action_ = Action::make_continuous(std::move(v));
            }
            push_action(last_action_);
            return last_action_;
        }

        // feed the transition produced by the action
        void observe(const Observation& obs, float reward) {
            push_observation(obs, zero_rewards_ ? 0.0f : reward);
            // drop oldest timesteps (two positions) once the window is full
            while (static_cast<int>(context_.size()) > model_.cfg_.global_window - 1) {
                context_.pop_front();
                context_.pop_front();
            }
        }

    private:
        void push_observation(const Observation& obs, float reward) {
            Graph<T> g(&model_.params_);
            ops::Var<T> row;
            switch (obs.kind) {
                case Modality::kContinuous:
                    row = encode::continuous_rows(
                        g, g.constant(encode::augment_continuous<T>(obs.continuous, reward, true)));
                    break;
                case Modality::kDiscrete:
                    row = encode::discrete_observation_rows(
                        g, model_.cfg_, {model_.observation_ids(info_, obs, mission_)}, {reward});
                    break;
                case Modality::kImage: {
                    auto img = imageops::preprocess_observation_image(obs.image.template cast<T>());
                    Tensor<T> batch({1, ModelConfig::kImageChannels, ModelConfig::kImageSide, ModelConfig::kImageSide},
                                    std::move(img.data));
                    row = encode::image_observation_rows(g, model_.cfg_, g.constant(std::move(batch)));
                    break;
                }
            }
            Tensor<T> h({model_.cfg_.hidden});
            std::memcpy(h.data.data(), g.value(row).data.data(), sizeof(T) * static_cast<size_t>(model_.cfg_.hidden));
            context_.push_back(std::move(h));
        }

        void push_action(const Action& a) {
            Graph<T> g(&model_.params_);
            ops::Var<T> row;
            if (a.is_discrete) {
                row = encode::table_rows(g, std::vector<int>{model_.action_id(info_, a.discrete)});
            } else {
                row = encode::continuous_rows(g, g.constant(encode::augment_continuous<T>(a.continuous, 0.0f, false)));
            }
            Tensor<T> h({model_.cfg_.hidden});
            std::memcpy(h.data.data(), g.value(row).data.data(), sizeof(T) * static_cast<size_t>(model_.cfg_.hidden));
            context_.push_back(std::move(h));
        }

        Model& model_;
        TaskInfo info_;
        bool zero_rewards_;
        std::string mission_;
        std::deque<Tensor<T>> context_;
        Action last_action_;
    };

    // ---------------------------------------------------------------------
    // greedy/temperature text generation, optionally image-conditioned
    // ---------------------------------------------------------------------
    std::vector<int> generate_text(const Tensor<float>* image, const std::vector<int>& prompt, int max_tokens,
                                   double temperature = 0.0, Rng* sample_rng = nullptr) {
        std::vector<Tensor<T>> context;
        if (image) {
            Graph<T> g(&params_);
            auto pre = imageops::preprocess_patch_image(image->template cast<T>());
            Tensor<T> batch({1, 3, ModelConfig::kPatchSide, ModelConfig::kPatchSide}, std::move(pre.data));
            auto rows = encode::patch_rows(g, cfg_, g.constant(std::move(batch)));
            const auto& rv = g.value(rows);
            for (int p = 0; p < rv.size(0); ++p) {
                Tensor<T> h({cfg_.hidden});
                std::memcpy(h.data.data(), rv.data.data() + static_cast<int64_t>(p) * cfg_.hidden,
                            sizeof(T) * static_cast<size_t>(cfg_.hidden));
                context.push_back(std::move(h));
            }
        }
        std::vector<int> tokens = prompt;
        auto append_token_row = [&](int tok) {
            Graph<T> g(&params_);
            auto row = encode::table_rows(g, std::vector<int>{tok});
            Tensor<T> h({cfg_.hidden});
            std::memcpy(h.data.data(), g.value(row).data.data(), sizeof(T) * static_cast<size_t>(cfg_.hidden));
            context.push_back(std::move(h));
        };
        for (int tok : prompt) append_token_row(tok);
        if (context.empty()) throw std::invalid_argument("generate: need an image or a non-empty prompt");

        std::vector<int> generated;
        const int eot = tokenizer_ ? tokenizer_->end_of_text_id() : -1;
        for (int step = 0; step < max_tokens; ++step) {
            if (static_cast<int>(context.size()) >= cfg_.global_window) break;
            Graph<T> g(&params_);
            const int l = static_cast<int>(context.size());
            Tensor<T> ctx({1, l, cfg_.hidden});
            for (int i = 0; i < l; ++i) {
                std::memcpy(ctx.data.data() + static_cast<int64_t>(i) * cfg_.hidden,
                            context[static_cast<size_t>(i)].data.data(), sizeof(T) * static_cast<size_t>(cfg_.hidden));
            }
            auto out = core::forward(g, cfg_, g.constant(std::move(ctx)));
            auto row = ops::reshape(g, ops::slice(g, out, {0, l - 1, 0}, {1, 1, cfg_.hidden}), {1, cfg_.hidden});
            auto logits = heads::decode_discrete(g, row);
            const auto& lv = g.value(logits);
            int tok;
            if (temperature > 0.0 && sample_rng) {
                // softmax sampling restricted to the text region
                std::vector<double> p(static_cast<size_t>(cfg_.text_vocab));
                double m = -1e300;
                for (int j = 0; j < cfg_.text_vocab; ++j) m = std::max(m, static_cast<double>(lv[j]));
                double z = 0.0;
                for (int j = 0; j < cfg_.text_vocab; ++j) {
                    p[static_cast<size_t>(j)] = std::exp((static_cast<double>(lv[j]) - m) / temperature);
                    z += p[static_cast<size_t>(j)];
                }
                double r = sample_rng->uniform() * z, acc = 0.0;
                tok = cfg_.text_vocab - 1;
                for (int j = 0; j < cfg_.text_vocab; ++j) {
                    acc += p[static_cast<size_t>(j)];
                    if (r < acc) {
                        tok = j;
                        break;
                    }
                }
            } else {
                Tensor<T> lrow({cfg_.table_rows()});
                std::memcpy(lrow.data.data(), lv.data.data(), sizeof(T) * static_cast<size_t>(cfg_.table_rows()));
                tok = heads::restricted_argmax(lrow, 0, cfg_.text_vocab);
            }
            if (tok == eot) break;
            generated.push_back(tok);
            append_token_row(tok);
        }
        return generated;
    }

    // registry serialization for checkpoints
    nlohmann::json tasks_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& id : task_order_) {
            const auto& t = tasks_.at(id);
            nlohmann::json j;
            j["manifest"] = dataset_io::manifest_json(t.manifest);
            j["region_offset"] = t.region_offset;
            arr.push_back(std::move(j));
        }
        return arr;
    }

    void load_tasks_json(const nlohmann::json& arr) {
        tasks_.clear();
        task_order_.clear();
        next_region_ = 0;
        for (const auto& j : arr) {
            register_task(dataset_io::manifest_from_json(j.at("manifest")));
            const int expect = j.at("region_offset").get<int>();
            if (tasks_.at(task_order_.back()).region_offset != expect) {
                throw std::runtime_error("model: task region layout mismatch on load");
            }
        }
    }

private:
    // mean action-prediction loss over the sample's action mask
    ops::Var<T> action_loss(Graph<T>& g, ops::Var<T> flat, const Sample& sample, const TaskInfo& info,
                            const MaskSet& masks, int base) {
        std::vector<int> rows;
        for (int i : masks.act_positions) rows.push_back(base + i);
        auto h = ops::gather_rows(g, flat, rows);
        if (info.manifest.action.is_discrete) {
            std::vector<int> targets;
            for (int i : masks.act_positions) {
                const auto& pos = sample.positions[static_cast<size_t>(i) + 1];
                targets.push_back(action_id(info, sample.episode->actions[static_cast<size_t>(pos.index)].discrete));
            }
            return ops::mean_all(g, ops::cross_entropy_rows(g, heads::decode_discrete(g, h), targets));
        }
        Tensor<T> target({static_cast<int>(masks.act_positions.size()), kMaxContinuous});
        for (size_t r = 0; r < masks.act_positions.size(); ++r) {
            const auto& pos = sample.positions[static_cast<size_t>(masks.act_positions[r]) + 1];
            const auto& act = sample.episode->actions[static_cast<size_t>(pos.index)];
            for (size_t i = 0; i < act.continuous.size(); ++i) {
                target[static_cast<int64_t>(r) * kMaxContinuous + static_cast<int64_t>(i)] =
                    static_cast<T>(act.continuous[i]);
            }
        }
        return ops::mean_all(g, ops::mse_rows(g, heads::decode_continuous(g, h), target));
    }

    // mean observation-prediction loss over the sample's observation mask
    ops::Var<T> observation_loss(Graph<T>& g, ops::Var<T> flat, const Sample& sample, const TaskInfo& info,
                                 const MaskSet& masks, int base, bool zero_rewards) {
        if (masks.obs_positions.empty()) {
            // single-timestep chunk: no successor observation inside it
            return g.constant(Tensor<T>::scalar(T(0)));
        }
        std::vector<int> rows;
        for (int i : masks.obs_positions) rows.push_back(base + i);
        auto h = ops::gather_rows(g, flat, rows);
        const Episode& e = *sample.episode;
        switch (info.manifest.observation.kind) {
            case Modality::kContinuous: {
                Tensor<T> target({static_cast<int>(rows.size()), kMaxContinuous});
                for (size_t r = 0; r < masks.obs_positions.size(); ++r) {
                    const auto& pos = sample.positions[static_cast<size_t>(masks.obs_positions[r]) + 1];
                    const auto& obs = e.observations[static_cast<size_t>(pos.index)];
                    for (size_t i = 0; i < obs.continuous.size(); ++i) {
                        target[static_cast<int64_t>(r) * kMaxContinuous + static_cast<int64_t>(i)] =
                            static_cast<T>(obs.continuous[i]);
                    }
                    target[static_cast<int64_t>(r) * kMaxContinuous +
                           static_cast<int64_t>(obs.continuous.size())] =
                        static_cast<T>(zero_rewards ? 0.0f : observation_reward(e, pos.timestep));
                }
                return ops::mean_all(g, ops::mse_rows(g, heads::decode_continuous(g, h), target));
            }
            case Modality::kDiscrete: {
                const int n_symbols = info.manifest.mission_budget + info.manifest.observation.length;
                auto symbol_rows = heads::decode_symbol_rows(g, cfg_, h, n_symbols);
                std::vector<int> targets;
                targets.reserve(rows.size() * static_cast<size_t>(n_symbols));
                for (int i : masks.obs_positions) {
                    const auto& pos = sample.positions[static_cast<size_t>(i) + 1];
                    const auto ids =
                        observation_ids(info, e.observations[static_cast<size_t>(pos.index)], e.text_mission);
                    targets.insert(targets.end(), ids.begin(), ids.end());
                }
                return ops::mean_all(g, ops::cross_entropy_rows(g, heads::decode_discrete(g, symbol_rows), targets));
            }
            case Modality::kImage: {
                const int64_t plane = static_cast<int64_t>(ModelConfig::kImageChannels) * ModelConfig::kImageSide *
                                      ModelConfig::kImageSide;
                Tensor<T> target({static_cast<int>(rows.size()), static_cast<int>(plane)});
                for (size_t r = 0; r < masks.obs_positions.size(); ++r) {
                    const auto& pos = sample.positions[static_cast<size_t>(masks.obs_positions[r]) + 1];
                    auto pre =
                        imageops::preprocess_observation_image(e.observations[static_cast<size_t>(pos.index)].image.template cast<T>());
                    std::memcpy(target.data.data() + static_cast<int64_t>(r) * plane, pre.data.data(),
                                sizeof(T) * static_cast<size_t>(plane));
                }
                auto pred = heads::decode_image(g, cfg_, h);
                auto pred_rows = ops::reshape(g, pred, {static_cast<int>(rows.size()), static_cast<int>(plane)});
                return ops::mean_all(g, ops::mse_rows(g, pred_rows, target));
            }
        }
        throw std::logic_error("observation_loss: unreachable");
    }

    ops::Var<T> text_loss(Graph<T>& g, ops::Var<T> flat, const Sample& sample, const MaskSet& masks, int base) {
        std::vector<int> rows;
        std::vector<int> targets;
        for (int i : masks.text_positions) {
            rows.push_back(base + i);
            const auto& pos = sample.positions[static_cast<size_t>(i) + 1];
            targets.push_back(sample.tokens.at(static_cast<size_t>(pos.index)));
        }
        auto h = ops::gather_rows(g, flat, rows);
        return ops::mean_all(g, ops::cross_entropy_rows(g, heads::decode_discrete(g, h), targets));
    }

    ModelConfig cfg_;
    ParamStore<T> params_;
    std::shared_ptr<const BpeTokenizer> tokenizer_;
    std::map<std::string, TaskInfo> tasks_;
    std::vector<std::string> task_order_;
    int next_region_ = 0;
    mutable std::map<std::string, std::vector<int>> mission_cache_;
};

}  // namespace jat

#endif  // JAT_MODEL_HPP_
