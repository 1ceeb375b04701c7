#ifndef JAT_TOYENVS_HPP_
#define JAT_TOYENVS_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "jat/tokenizer.hpp"
#include "jat/trajectory.hpp"
#include "jat/util.hpp"

// Bundled synthetic environments and their scripted experts. Everything is
// deterministic under the reset seed: an episode is a pure function of
// (seed, action sequence).
namespace jat {

struct StepResult {
    Observation observation;
    float reward = 0.0f;
    bool done = false;
};

class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string task_id() const = 0;
    virtual std::string domain() const = 0;
    virtual ObservationSpec observation_spec() const = 0;
    virtual ActionSpec action_spec() const = 0;
    virtual int episode_cap() const = 0;
    virtual int mission_budget() const { return 0; }

    virtual Observation reset(uint64_t seed) = 0;
    virtual StepResult step(const Action& action) = 0;
    // mission for the current episode; empty when the task has none
    virtual std::string mission() const { return ""; }

    Action random_action(Rng& rng) const {
        const auto spec = action_spec();
        if (spec.is_discrete) return Action::make_discrete(rng.index(static_cast<size_t>(spec.count)));
        std::vector<float> v(static_cast<size_t>(spec.length));
        for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
        return Action::make_continuous(std::move(v));
    }
};

// expert policy: observation (+ mission) -> action, with an optional noise
// level used to produce deliberately sub-optimal datasets
class ScriptedExpert {
public:
    using Policy = std::function<Action(const Observation&, const std::string& mission)>;

    ScriptedExpert(std::string name, Policy policy, ActionSpec spec, double noise = 0.0)
        : name_(std::move(name)), policy_(std::move(policy)), action_spec_(spec), noise_(noise) {}

    const std::string& name() const { return name_; }
    void set_noise(double noise) { noise_ = noise; }

    Action act(const Observation& obs, const std::string& mission, Rng& rng) const {
        Action a = policy_(obs, mission);
        if (noise_ > 0.0) {
            if (action_spec_.is_discrete) {
                if (rng.uniform() < noise_) a.discrete = rng.index(static_cast<size_t>(action_spec_.count));
            } else {
                for (auto& v : a.continuous) v += static_cast<float>(rng.gauss() * noise_);
            }
        }
        return a;
    }

private:
    std::string name_;
    Policy policy_;
    ActionSpec action_spec_;
    double noise_;
};

namespace envs {

// ---------------------------------------------------------------------------
// point_reach: 4-d continuous observation [agent, goal], 2-d continuous
// action clipped to +-0.2, reward = -distance to goal, done within 0.05
// ---------------------------------------------------------------------------
class PointReach : public Environment {
public:
    std::string task_id() const override { return "point_reach"; }
    std::string domain() const override { return "toy_control"; }
    ObservationSpec observation_spec() const override {
        ObservationSpec s;
        s.kind = Modality::kContinuous;
        s.length = 4;
        return s;
    }
    ActionSpec action_spec() const override {
        ActionSpec s;
        s.is_discrete = false;
        s.length = 2;
        return s;
    }
    int episode_cap() const override { return 50; }

    Observation reset(uint64_t seed) override {
        rng_.reseed(seed);
        t_ = 0;
        for (int i = 0; i < 2; ++i) pos_[i] = static_cast<float>(rng_.uniform(-1.0, 1.0));
        do {
            for (int i = 0; i < 2; ++i) goal_[i] = static_cast<float>(rng_.uniform(-1.0, 1.0));
        } while (dist() < 0.3f);
        return observe();
    }

    StepResult step(const Action& action) override {
        ++t_;
        for (int i = 0; i < 2; ++i) {
            const float a = std::clamp(action.continuous.at(static_cast<size_t>(i)), -kMaxStep, kMaxStep);
            pos_[i] = std::clamp(pos_[i] + a, -1.0f, 1.0f);
        }
        const float d = dist();
        return {observe(), -d, d < 0.05f || t_ >= episode_cap()};
    }

    static constexpr float kMaxStep = 0.2f;

private:
    float dist() const { return std::hypot(pos_[0] - goal_[0], pos_[1] - goal_[1]); }
    Observation observe() const { return Observation::make_continuous({pos_[0], pos_[1], goal_[0], goal_[1]}); }

    Rng rng_;
    float pos_[2] = {}, goal_[2] = {};
    int t_ = 0;
};

// ---------------------------------------------------------------------------
// grid_word: 5x5 grid with 3 colored cells, mission "go to the <color>
// cell", 4 move actions, terminal reward 1 - 0.9 * t / cap
// ---------------------------------------------------------------------------
class GridWord : public Environment {
public:
    static constexpr int kSize = 5;
    static constexpr int kColors = 6;  // color plane values 1..6, 0 = none
    static const char* color_name(int c) {
        static const char* names[] = {"red", "green", "blue", "yellow", "purple", "orange"};
        return names[c - 1];
    }

    std::string task_id() const override { return "grid_word"; }
    std::string domain() const override { return "toy_grid"; }
    ObservationSpec observation_spec() const override {
        ObservationSpec s;
        s.kind = Modality::kDiscrete;
        s.length = kSize * kSize * 2;
        s.alphabet = kColors + 1;  // covers both planes: types 0..2, colors 0..6
        return s;
    }
    ActionSpec action_spec() const override {
        ActionSpec s;
        s.is_discrete = true;
        s.count = 4;
        return s;
    }
    int episode_cap() const override { return 64; }
    int mission_budget() const override { return 12; }
    std::string mission() const override {
        return std::string("go to the ") + color_name(target_color_) + " cell";
    }

    static constexpr int kColoredCells = 1;

    Observation reset(uint64_t seed) override {
        rng_.reseed(seed);
        t_ = 0;
        // one colored cell on a random square; the mission names its color
        colored_pos_[0] = rng_.index(static_cast<size_t>(kSize * kSize));
        colored_color_[0] = 1 + rng_.index(static_cast<size_t>(kColors));
        do {
            agent_ = rng_.index(static_cast<size_t>(kSize * kSize));
        } while (agent_ == colored_pos_[0]);
        target_color_ = colored_color_[0];
        return observe();
    }

    StepResult step(const Action& action) override {
        ++t_;
        int r = agent_ / kSize, c = agent_ % kSize;
        switch (action.discrete) {
            case 0: r = std::max(0, r - 1); break;
            case 1: r = std::min(kSize - 1, r + 1); break;
            case 2: c = std::max(0, c - 1); break;
            case 3: c = std::min(kSize - 1, c + 1); break;
            default: throw std::invalid_argument("grid_word: action outside [0,4)");
        }
        agent_ = r * kSize + c;
        const bool reached = agent_ == target_pos();
        if (reached) {
            const float reward = 1.0f - 0.9f * static_cast<float>(t_) / static_cast<float>(episode_cap());
            return {observe(), reward, true};
        }
        return {observe(), 0.0f, t_ >= episode_cap()};
    }

    int target_pos() const {
        for (int i = 0; i < kColoredCells; ++i) {
            if (colored_color_[i] == target_color_) return colored_pos_[i];
        }
        return -1;
    }

private:
    Observation observe() const {
        std::vector<int> grid(kSize * kSize * 2, 0);
        for (int i = 0; i < kColoredCells; ++i) grid[static_cast<size_t>(colored_pos_[i])] = 2;
        grid[static_cast<size_t>(agent_)] = 1;  // agent covers cell contents
        for (int i = 0; i < kColoredCells; ++i) {
            grid[static_cast<size_t>(kSize * kSize + colored_pos_[i])] = colored_color_[i];
        }
        return Observation::make_discrete(std::move(grid));
    }

    Rng rng_;
    int agent_ = 0;
    int colored_pos_[kColoredCells] = {}, colored_color_[kColoredCells] = {};
    int target_color_ = 1;
    int t_ = 0;
};

// ---------------------------------------------------------------------------
// pixel_catch: 1x24x24 image, a block falls one row per step, 3 actions
// move a 3-pixel paddle, +1 per catch, fixed 100-step episodes
// ---------------------------------------------------------------------------
class PixelCatch : public Environment {
public:
    static constexpr int kSize = 24;

    std::string task_id() const override { return "pixel_catch"; }
    std::string domain() const override { return "toy_pixels"; }
    ObservationSpec observation_spec() const override {
        ObservationSpec s;
        s.kind = Modality::kImage;
        s.channels = 1;
        s.height = kSize;
        s.width = kSize;
        return s;
    }
    ActionSpec action_spec() const override {
        ActionSpec s;
        s.is_discrete = true;
        s.count = 3;  // left, stay, right
        return s;
    }
    int episode_cap() const override { return 100; }

    Observation reset(uint64_t seed) override {
        rng_.reseed(seed);
        t_ = 0;
        paddle_ = kSize / 2;
        spawn();
        return observe();
    }

    StepResult step(const Action& action) override {
        ++t_;
        switch (action.discrete) {
            case 0: paddle_ = std::max(1, paddle_ - 1); break;
            case 1: break;
            case 2: paddle_ = std::min(kSize - 2, paddle_ + 1); break;
            default: throw std::invalid_argument("pixel_catch: action outside [0,3)");
        }
        float reward = 0.0f;
        ++obj_row_;
        if (obj_row_ == kSize - 1) {
            if (std::abs(obj_col_ - paddle_) <= 1) reward = 1.0f;
            spawn();
        }
        return {observe(), reward, t_ >= episode_cap()};
    }

    int object_column() const { return obj_col_; }

private:
    void spawn() {
        obj_row_ = 0;
        obj_col_ = rng_.index(kSize);
    }

    Observation observe() const {
        Tensor<float> img({1, kSize, kSize});
        img[static_cast<int64_t>(obj_row_) * kSize + obj_col_] = 1.0f;
        for (int dc = -1; dc <= 1; ++dc) {
            const int c = std::clamp(paddle_ + dc, 0, kSize - 1);
            img[static_cast<int64_t>(kSize - 1) * kSize + c] = 0.6f;
        }
        return Observation::make_image(std::move(img));
    }

    Rng rng_;
    int paddle_ = kSize / 2;
    int obj_row_ = 0, obj_col_ = 0;
    int t_ = 0;
};

// ---------------------------------------------------------------------------
// alias_pair: identical dynamics and observations, opposite goal corners.
// The observation never reveals the goal; only the reward stream differs.
// ---------------------------------------------------------------------------
class AliasPair : public Environment {
public:
    explicit AliasPair(bool variant_b) : variant_b_(variant_b) {
        goal_[0] = goal_[1] = variant_b_ ? -0.8f : 0.8f;
    }

    std::string task_id() const override { return variant_b_ ? "alias_pair_b" : "alias_pair_a"; }
    std::string domain() const override { return "toy_alias"; }
    ObservationSpec observation_spec() const override {
        ObservationSpec s;
        s.kind = Modality::kContinuous;
        s.length = 4;  // position and previous action; goal deliberately absent
        return s;
    }
    ActionSpec action_spec() const override {
        ActionSpec s;
        s.is_discrete = false;
        s.length = 2;
        return s;
    }
    int episode_cap() const override { return 50; }

    Observation reset(uint64_t seed) override {
        rng_.reseed(seed);
        t_ = 0;
        for (int i = 0; i < 2; ++i) pos_[i] = static_cast<float>(rng_.uniform(-1.0, 1.0));
        prev_a_[0] = prev_a_[1] = 0.0f;
        return observe();
    }

    StepResult step(const Action& action) override {
        ++t_;
        for (int i = 0; i < 2; ++i) {
            const float a = std::clamp(action.continuous.at(static_cast<size_t>(i)), -kMaxStep, kMaxStep);
            prev_a_[i] = a;
            pos_[i] = std::clamp(pos_[i] + a, -1.0f, 1.0f);
        }
        const float d = std::hypot(pos_[0] - goal_[0], pos_[1] - goal_[1]);
        // fixed-length episodes: early termination would leak the task
        return {observe(), -d, t_ >= episode_cap()};
    }

    const float* goal() const { return goal_; }

    static constexpr float kMaxStep = 0.2f;

private:
    Observation observe() const {
        return Observation::make_continuous({pos_[0], pos_[1], prev_a_[0], prev_a_[1]});
    }

    bool variant_b_;
    Rng rng_;
    float pos_[2] = {}, goal_[2] = {}, prev_a_[2] = {};
    int t_ = 0;
};

}  // namespace envs

// ---------------------------------------------------------------------------
// catalogue
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& env_catalogue() {
    static const std::vector<std::string> names = {"point_reach", "grid_word", "pixel_catch", "alias_pair_a",
                                                   "alias_pair_b"};
    return names;
}

inline std::unique_ptr<Environment> make_env(const std::string& name) {
    if (name == "point_reach") return std::make_unique<envs::PointReach>();
    if (name == "grid_word") return std::make_unique<envs::GridWord>();
    if (name == "pixel_catch") return std::make_unique<envs::PixelCatch>();
    if (name == "alias_pair_a") return std::make_unique<envs::AliasPair>(false);
    if (name == "alias_pair_b") return std::make_unique<envs::AliasPair>(true);
    std::string known;
    for (const auto& n : env_catalogue()) known += (known.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown environment '" + name + "'; catalogue: " + known);
}

inline ScriptedExpert scripted_expert(const std::string& name, double noise = 0.0) {
    if (name == "point_reach") {
        return ScriptedExpert(
            name,
            [](const Observation& o, const std::string&) {
                return Action::make_continuous({o.continuous[2] - o.continuous[0], o.continuous[3] - o.continuous[1]});
            },
            envs::PointReach().action_spec(), noise);
    }
    if (name == "grid_word") {
        return ScriptedExpert(
            name,
            [](const Observation& o, const std::string& mission) {
                constexpr int n = envs::GridWord::kSize;
                int agent = -1, target = -1;
                int target_color = 0;
                for (int c = 1; c <= envs::GridWord::kColors; ++c) {
                    if (mission.find(envs::GridWord::color_name(c)) != std::string::npos) target_color = c;
                }
                for (int i = 0; i < n * n; ++i) {
                    if (o.discrete[static_cast<size_t>(i)] == 1) agent = i;
                    if (o.discrete[static_cast<size_t>(n * n + i)] == target_color) target = i;
                }
                if (agent < 0 || target < 0) return Action::make_discrete(0);
                const int ar = agent / n, ac = agent % n, tr = target / n, tc = target % n;
                if (ar != tr) return Action::make_discrete(ar > tr ? 0 : 1);
                return Action::make_discrete(ac > tc ? 2 : 3);
            },
            envs::GridWord().action_spec(), noise);
    }
    if (name == "pixel_catch") {
        return ScriptedExpert(
            name,
            [](const Observation& o, const std::string&) {
                constexpr int n = envs::PixelCatch::kSize;
                int obj_col = -1, paddle_col = n / 2;
                for (int r = 0; r < n - 1 && obj_col < 0; ++r) {
                    for (int c = 0; c < n; ++c) {
                        if (o.image[static_cast<int64_t>(r) * n + c] == 1.0f) {
                            obj_col = c;
                            break;
                        }
                    }
                }
                int lo = -1, hi = -1;
                for (int c = 0; c < n; ++c) {
                    if (o.image[static_cast<int64_t>(n - 1) * n + c] > 0.0f) {
                        if (lo < 0) lo = c;
                        hi = c;
                    }
                }
                if (lo >= 0) paddle_col = (lo + hi) / 2;
                if (obj_col < 0 || obj_col == paddle_col) return Action::make_discrete(1);
                return Action::make_discrete(obj_col < paddle_col ? 0 : 2);
            },
            envs::PixelCatch().action_spec(), noise);
    }
    if (name == "alias_pair_a" || name == "alias_pair_b") {
        const float g = name == "alias_pair_b" ? -0.8f : 0.8f;
        return ScriptedExpert(
            name,
            [g](const Observation& o, const std::string&) {
                return Action::make_continuous({g - o.continuous[0], g - o.continuous[1]});
            },
            envs::AliasPair(false).action_spec(), noise);
    }
    std::string known;
    for (const auto& n : env_catalogue()) known += (known.empty() ? "" : ", ") + n;
    throw std::invalid_argument("no scripted expert for '" + name + "'; catalogue: " + known);
}

// ---------------------------------------------------------------------------
// rollouts and dataset generation
// ---------------------------------------------------------------------------

// one episode under a policy closure; returns the episode and its return
template <typename PolicyFn>
std::pair<Episode, double> rollout(Environment& env, PolicyFn&& policy, uint64_t seed) {
    Episode e;
    e.task_id = env.task_id();
    Observation obs = env.reset(seed);
    e.text_mission = env.mission();
    double ret = 0.0;
    for (;;) {
        const Action a = policy(obs);
        StepResult r = env.step(a);
        e.observations.push_back(std::move(obs));
        e.actions.push_back(a);
        e.rewards.push_back(r.reward);
        ret += static_cast<double>(r.reward);
        if (r.done) break;
        obs = std::move(r.observation);
    }
    return {std::move(e), ret};
}

// mean return of the uniform-random policy over n episodes
inline double random_policy_mean_return(Environment& env, int n, uint64_t seed) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        Rng arng(derive_seed(seed, 2 * static_cast<uint64_t>(i)));
        auto [e, ret] = rollout(
            env, [&](const Observation&) { return env.random_action(arng); },
            derive_seed(seed, 2 * static_cast<uint64_t>(i) + 1));
        total += ret;
    }
    return total / static_cast<double>(n);
}

struct GenerateOptions {
    double noise = 0.0;
    double sample_weight = 1.0;
    double loss_weight = 1.0;
    int random_score_episodes = 1000;
};

// writes a dataset directory with the measured expert and random scores
inline DatasetManifest generate_dataset(const std::string& env_name, const std::string& policy_name, int n_episodes,
                                        uint64_t seed, const std::filesystem::path& out,
                                        const GenerateOptions& opt = {}) {
    if (n_episodes < 1) throw std::invalid_argument("generate_dataset: n_episodes must be >= 1");
    auto env = make_env(env_name);

    std::vector<Episode> episodes;
    episodes.reserve(static_cast<size_t>(n_episodes));
    double sum = 0.0, sum_sq = 0.0;
    if (policy_name == "expert") {
        ScriptedExpert expert = scripted_expert(env_name, opt.noise);
        for (int i = 0; i < n_episodes; ++i) {
            Rng noise_rng(derive_seed(seed, 1000000 + static_cast<uint64_t>(i)));
            auto [e, ret] = rollout(
                *env, [&](const Observation& o) { return expert.act(o, env->mission(), noise_rng); },
                derive_seed(seed, static_cast<uint64_t>(i)));
            sum += ret;
            sum_sq += ret * ret;
            episodes.push_back(std::move(e));
        }
    } else if (policy_name == "random") {
        for (int i = 0; i < n_episodes; ++i) {
            Rng arng(derive_seed(seed, 1000000 + static_cast<uint64_t>(i)));
            auto [e, ret] = rollout(
                *env, [&](const Observation&) { return env->random_action(arng); },
                derive_seed(seed, static_cast<uint64_t>(i)));
            sum += ret;
            sum_sq += ret * ret;
            episodes.push_back(std::move(e));
        }
    } else {
        throw std::invalid_argument("generate_dataset: policy must be 'expert' or 'random', got '" + policy_name +
                                    "'");
    }

    DatasetManifest m;
    m.task_id = env->task_id();
    m.domain = env->domain();
    m.observation = env->observation_spec();
    m.action = env->action_spec();
    m.mission_budget = env->mission_budget();
    m.expert_score_mean = sum / n_episodes;
    m.expert_score_std = std::sqrt(std::max(0.0, sum_sq / n_episodes - m.expert_score_mean * m.expert_score_mean));
    m.random_score = random_policy_mean_return(*env, opt.random_score_episodes, derive_seed(seed, 0xA11CE));
    m.episode_count = n_episodes;
    m.sample_weight = opt.sample_weight;
    m.loss_weight = opt.loss_weight;
    write_episodes(out, episodes, m);
    return m;
}

// ---------------------------------------------------------------------------
// caption corpus: 224x224 images of one colored shape, caption "a <color>
// <shape>", stored in the dataset container as image + token list records
// ---------------------------------------------------------------------------

struct CaptionPalette {
    std::vector<std::pair<std::string, std::array<float, 3>>> colors;
    std::vector<std::string> shapes;
};

inline const CaptionPalette& caption_palette() {
    static const CaptionPalette p = {
        {{"red", {0.85f, 0.10f, 0.10f}},   {"green", {0.10f, 0.70f, 0.15f}}, {"blue", {0.15f, 0.25f, 0.85f}},
         {"yellow", {0.90f, 0.85f, 0.10f}}, {"purple", {0.55f, 0.15f, 0.70f}}, {"orange", {0.95f, 0.55f, 0.05f}},
         {"cyan", {0.10f, 0.80f, 0.85f}},  {"pink", {0.95f, 0.55f, 0.70f}},  {"brown", {0.55f, 0.35f, 0.15f}},
         {"white", {0.98f, 0.98f, 0.98f}}, {"gray", {0.50f, 0.50f, 0.50f}},  {"olive", {0.50f, 0.50f, 0.15f}},
         {"teal", {0.10f, 0.50f, 0.50f}}},
        {"square", "circle"}};
    return p;
}

struct CaptionSample {
    Tensor<float> image;  // 3 x 224 x 224
    std::string caption;
    std::vector<int> tokens;
};

inline CaptionSample make_caption_sample(const BpeTokenizer& tok, uint64_t seed) {
    const auto& pal = caption_palette();
    Rng rng(seed);
    const auto& [color_name, rgb] = pal.colors[static_cast<size_t>(rng.index(pal.colors.size()))];
    const auto& shape = pal.shapes[static_cast<size_t>(rng.index(pal.shapes.size()))];
    constexpr int s = 224;
    Tensor<float> img({3, s, s});
    const float bg = 0.92f;
    std::fill(img.data.begin(), img.data.end(), bg);
    const int half = 30 + rng.index(31);                    // half extent 30..60
    const int cx = s / 2 + rng.index(61) - 30;              // center jitter +-30
    const int cy = s / 2 + rng.index(61) - 30;
    for (int y = cy - half; y <= cy + half; ++y) {
        for (int x = cx - half; x <= cx + half; ++x) {
            if (y < 0 || y >= s || x < 0 || x >= s) continue;
            const bool inside = shape == "square"
                                    ? true
                                    : (static_cast<int64_t>(y - cy) * (y - cy) + static_cast<int64_t>(x - cx) * (x - cx)) <=
                                          static_cast<int64_t>(half) * half;
            if (!inside) continue;
            for (int c = 0; c < 3; ++c) img[(static_cast<int64_t>(c) * s + y) * s + x] = rgb[static_cast<size_t>(c)];
        }
    }
    CaptionSample sample;
    sample.image = std::move(img);
    sample.caption = "a " + color_name + " " + shape;
    sample.tokens = tok.encode(sample.caption);
    return sample;
}

inline void generate_caption_corpus(const BpeTokenizer& tok, int n, uint64_t seed, const std::filesystem::path& dir) {
    if (n < 1) throw std::invalid_argument("generate_caption_corpus: n must be >= 1");
    std::filesystem::create_directories(dir);
    nlohmann::json meta;
    meta["format_version"] = 1;
    meta["kind"] = "caption_corpus";
    meta["count"] = n;
    meta["image"] = {{"channels", 3}, {"height", 224}, {"width", 224}};
    {
        std::ofstream mf(dir / "manifest.json");
        mf << meta.dump(2) << '\n';
    }
    std::ofstream rf(dir / "records.jsonl");
    for (int i = 0; i < n; ++i) {
        const auto sample = make_caption_sample(tok, derive_seed(seed, static_cast<uint64_t>(i)));
        nlohmann::json j;
        j["image"] = dataset_io::image_json(sample.image);
        j["caption"] = sample.caption;
        j["tokens"] = sample.tokens;
        rf << j.dump() << '\n';
    }
}

struct CaptionRecord {
    Tensor<float> image;
    std::string caption;
    std::vector<int> tokens;
};

inline std::vector<CaptionRecord> read_caption_corpus(const std::filesystem::path& dir) {
    std::ifstream rf(dir / "records.jsonl");
    if (!rf) throw std::runtime_error("caption corpus: cannot open " + (dir / "records.jsonl").string());
    std::vector<CaptionRecord> out;
    std::string line;
    while (std::getline(rf, line)) {
        const auto j = nlohmann::json::parse(line);
        CaptionRecord r;
        r.image = dataset_io::image_from_json(j.at("image"));
        r.caption = j.value("caption", std::string());
        r.tokens = j.at("tokens").get<std::vector<int>>();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace jat

#endif  // JAT_TOYENVS_HPP_
