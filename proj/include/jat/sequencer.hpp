#ifndef JAT_SEQUENCER_HPP_
#define JAT_SEQUENCER_HPP_

#include <memory>
#include <string>
#include <vector>

#include "jat/trajectory.hpp"

namespace jat {

enum class Role : uint8_t {
    kObsContinuous,
    kObsDiscrete,
    kObsImage,
    kActContinuous,
    kActDiscrete,
    kText,
    kImagePatch,
    kPad,
};

inline bool is_observation_role(Role r) {
    return r == Role::kObsContinuous || r == Role::kObsDiscrete || r == Role::kObsImage;
}
inline bool is_action_role(Role r) { return r == Role::kActContinuous || r == Role::kActDiscrete; }

struct SamplePosition {
    Role role = Role::kPad;
    int timestep = 0;  // environment timestep, or token index for text
    int index = 0;     // observation/action index in the episode, token index, or patch index
};

// One model-ready sample: an interleaved slice of a decision episode, or an
// image+text sequence. Embeddings are materialized later; this layer owns
// ordering, boundaries and loss-mask structure only.
struct Sample {
    std::string dataset_id;
    std::shared_ptr<const Episode> episode;  // decision samples
    std::vector<int> tokens;                 // text-centric samples
    std::shared_ptr<const Tensor<float>> image;  // preprocessed patch image, if any
    std::vector<SamplePosition> positions;

    int length() const { return static_cast<int>(positions.size()); }
    bool is_decision() const { return episode != nullptr; }
};

// reward paired with observation t: 0.0 at t=0, else the stored reward of
// the previous action
inline float observation_reward(const Episode& e, int t) {
    return t == 0 ? 0.0f : e.rewards[static_cast<size_t>(t) - 1];
}

inline Role observation_role(Modality m) {
    switch (m) {
        case Modality::kContinuous: return Role::kObsContinuous;
        case Modality::kDiscrete: return Role::kObsDiscrete;
        case Modality::kImage: return Role::kObsImage;
    }
    return Role::kPad;
}

// [obs_0, act_0, obs_1, act_1, ...]: two positions per timestep, every
// modality combination alike
inline Sample interleave_episode(std::shared_ptr<const Episode> episode, const std::string& dataset_id) {
    const Episode& e = *episode;
    if (e.observations.size() != e.actions.size()) {
        throw std::invalid_argument("interleave: episode with unequal observation/action counts");
    }
    Sample s;
    s.dataset_id = dataset_id;
    s.episode = std::move(episode);
    s.positions.reserve(e.observations.size() * 2);
    for (int t = 0; t < static_cast<int>(e.observations.size()); ++t) {
        s.positions.push_back({observation_role(e.observations[static_cast<size_t>(t)].kind), t, t});
        s.positions.push_back(
            {e.actions[static_cast<size_t>(t)].is_discrete ? Role::kActDiscrete : Role::kActContinuous, t, t});
    }
    return s;
}

// Greedy split into chunks of at most max_len positions, each chunk starting
// on a timestep boundary (an observation position). Nothing is discarded;
// concatenating the chunks restores the sequence.
inline std::vector<Sample> pack(const Sample& sample, int max_len) {
    if (max_len < 2 || max_len % 2 != 0) {
        throw std::invalid_argument("pack: max_len must be even and >= 2, got " + std::to_string(max_len));
    }
    std::vector<Sample> chunks;
    const int n = sample.length();
    for (int begin = 0; begin < n; begin += max_len) {
        const int end = std::min(n, begin + max_len);
        Sample c;
        c.dataset_id = sample.dataset_id;
        c.episode = sample.episode;
        c.tokens = sample.tokens;
        c.image = sample.image;
        c.positions.assign(sample.positions.begin() + begin, sample.positions.begin() + end);
        if (c.is_decision() && !is_observation_role(c.positions.front().role)) {
            throw std::logic_error("pack: chunk does not start on an observation");
        }
        chunks.push_back(std::move(c));
    }
    return chunks;
}

// image patches precede text; patch positions are never prediction targets
inline Sample assemble_text_image(std::shared_ptr<const Tensor<float>> patch_image, std::vector<int> token_ids,
                                  const std::string& dataset_id, int n_patches) {
    Sample s;
    s.dataset_id = dataset_id;
    s.image = std::move(patch_image);
    s.tokens = std::move(token_ids);
    if (s.image) {
        for (int p = 0; p < n_patches; ++p) s.positions.push_back({Role::kImagePatch, 0, p});
    }
    for (int t = 0; t < static_cast<int>(s.tokens.size()); ++t) s.positions.push_back({Role::kText, t, t});
    return s;
}

// text-centric packing: the patch block stays intact and is repeated in
// front of every continuation chunk of the token stream
inline std::vector<Sample> pack_text_image(const Sample& sample, int max_len) {
    if (sample.length() <= max_len) return {sample};
    int n_patches = 0;
    for (const auto& p : sample.positions) {
        if (p.role == Role::kImagePatch) ++n_patches;
    }
    const int text_budget = max_len - n_patches;
    if (text_budget < 1) {
        throw std::invalid_argument("pack: patch block of " + std::to_string(n_patches) +
                                    " positions leaves no room for text in " + std::to_string(max_len));
    }
    std::vector<Sample> chunks;
    for (int begin = 0; begin < static_cast<int>(sample.tokens.size()); begin += text_budget) {
        const int end = std::min<int>(static_cast<int>(sample.tokens.size()), begin + text_budget);
        Sample c;
        c.dataset_id = sample.dataset_id;
        c.image = sample.image;
        c.tokens.assign(sample.tokens.begin() + begin, sample.tokens.begin() + end);
        for (int p = 0; p < n_patches; ++p) c.positions.push_back({Role::kImagePatch, 0, p});
        for (int t = 0; t < end - begin; ++t) c.positions.push_back({Role::kText, begin + t, t});
        chunks.push_back(std::move(c));
    }
    return chunks;
}

// Loss masks list predictor positions: output i predicts element i+1, so a
// position joins the act/obs/text mask when its successor is an
// action/observation/text token. The final position has no successor.
struct MaskSet {
    int length = 0;
    std::vector<int> act_positions;
    std::vector<int> obs_positions;
    std::vector<int> text_positions;
};

inline MaskSet build_masks(const Sample& sample) {
    MaskSet m;
    m.length = sample.length();
    for (int i = 0; i + 1 < sample.length(); ++i) {
        const Role next = sample.positions[static_cast<size_t>(i) + 1].role;
        if (is_action_role(next)) {
            m.act_positions.push_back(i);
        } else if (is_observation_role(next)) {
            m.obs_positions.push_back(i);
        } else if (next == Role::kText) {
            m.text_positions.push_back(i);
        }
    }
    return m;
}

// single-dataset batches only; padding happens at embedding time
struct Batch {
    std::vector<Sample> samples;
    int max_len = 0;
};

inline Batch make_batch(std::vector<Sample> samples) {
    if (samples.empty()) throw std::invalid_argument("batch: empty");
    Batch b;
    for (const auto& s : samples) {
        if (s.dataset_id != samples.front().dataset_id) {
            throw std::invalid_argument("batch: mixed datasets '" + samples.front().dataset_id + "' and '" +
                                        s.dataset_id + "'");
        }
        b.max_len = std::max(b.max_len, s.length());
    }
    b.samples = std::move(samples);
    return b;
}

// timesteps that fit one context window: two positions per timestep
inline int window_capacity_timesteps(int max_len) { return max_len / 2; }

// capacity under a per-dimension reference tokenization that spends
// d_obs + d_act + 1 positions per timestep
inline int reference_capacity_timesteps(int max_len, int d_obs, int d_act) {
    return max_len / (d_obs + d_act + 1);
}

}  // namespace jat

#endif  // JAT_SEQUENCER_HPP_
