#ifndef JAT_TRAJECTORY_HPP_
#define JAT_TRAJECTORY_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jat/tensor.hpp"
#include "jat/util.hpp"

namespace jat {

// the augmented continuous length is 377 = 376 observation values + reward
constexpr int kMaxContinuousObs = 376;
constexpr int kMaxContinuous = 377;

enum class Modality { kContinuous, kDiscrete, kImage };

inline const char* modality_name(Modality m) {
    switch (m) {
        case Modality::kContinuous: return "continuous";
        case Modality::kDiscrete: return "discrete";
        case Modality::kImage: return "image";
    }
    return "?";
}

// exactly one payload is populated, selected by kind
struct Observation {
    Modality kind = Modality::kContinuous;
    std::vector<float> continuous;
    std::vector<int> discrete;
    Tensor<float> image;  // C x H x W, values in [0, 1]

    static Observation make_continuous(std::vector<float> v) {
        Observation o;
        o.kind = Modality::kContinuous;
        o.continuous = std::move(v);
        return o;
    }
    static Observation make_discrete(std::vector<int> v) {
        Observation o;
        o.kind = Modality::kDiscrete;
        o.discrete = std::move(v);
        return o;
    }
    static Observation make_image(Tensor<float> img) {
        Observation o;
        o.kind = Modality::kImage;
        o.image = std::move(img);
        return o;
    }
};

struct Action {
    bool is_discrete = true;
    int discrete = 0;
    std::vector<float> continuous;

    static Action make_discrete(int id) {
        Action a;
        a.is_discrete = true;
        a.discrete = id;
        return a;
    }
    static Action make_continuous(std::vector<float> v) {
        Action a;
        a.is_discrete = false;
        a.continuous = std::move(v);
        return a;
    }
};

// One trajectory. rewards[t] is the environment reward returned by step t;
// the 0.0 paired with the first observation is injected downstream, never
// stored.
struct Episode {
    std::string task_id;
    std::vector<Observation> observations;
    std::vector<Action> actions;
    std::vector<float> rewards;
    std::string text_mission;  // empty when the task has no mission

    size_t length() const { return observations.size(); }
};

struct ObservationSpec {
    Modality kind = Modality::kContinuous;
    int length = 0;    // continuous values or discrete symbols per observation
    int alphabet = 0;  // discrete: symbol values are in [0, alphabet)
    int channels = 0, height = 0, width = 0;  // image

    bool operator==(const ObservationSpec&) const = default;
};

struct ActionSpec {
    bool is_discrete = true;
    int count = 0;   // discrete action ids are in [0, count)
    int length = 0;  // continuous action dimension

    bool operator==(const ActionSpec&) const = default;
};

struct DatasetManifest {
    std::string task_id;
    std::string domain;
    ObservationSpec observation;
    ActionSpec action;
    int mission_budget = 0;  // mission token positions prepended to discrete observations
    double expert_score_mean = 0.0;
    double expert_score_std = 0.0;
    double random_score = 0.0;
    int64_t episode_count = 0;
    double sample_weight = 1.0;
    double loss_weight = 1.0;
};

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

inline std::vector<std::string> validate_episode(const Episode& e, const DatasetManifest& m) {
    std::vector<std::string> violations;
    auto fail = [&](const std::string& s) { violations.push_back(s); };

    if (e.observations.size() != e.actions.size()) {
        fail("actions length " + std::to_string(e.actions.size()) + " != observations length " +
             std::to_string(e.observations.size()));
    }
    if (e.observations.size() != e.rewards.size()) {
        fail("rewards length " + std::to_string(e.rewards.size()) + " != observations length " +
             std::to_string(e.observations.size()));
    }
    if (e.observations.empty()) fail("episode is empty");
    for (size_t t = 0; t < e.rewards.size(); ++t) {
        if (!std::isfinite(e.rewards[t])) fail("reward not finite at t=" + std::to_string(t));
    }
    for (size_t t = 0; t < e.observations.size(); ++t) {
        const auto& o = e.observations[t];
        const std::string at = " at t=" + std::to_string(t);
        if (o.kind != m.observation.kind) {
            fail(std::string("observation modality ") + modality_name(o.kind) + " != spec " +
                 modality_name(m.observation.kind) + at);
            continue;
        }
        switch (o.kind) {
            case Modality::kContinuous:
                if (static_cast<int>(o.continuous.size()) != m.observation.length) {
                    fail("continuous observation length " + std::to_string(o.continuous.size()) + " != spec " +
                         std::to_string(m.observation.length) + at);
                }
                if (static_cast<int>(o.continuous.size()) > kMaxContinuousObs) {
                    fail("continuous observation length " + std::to_string(o.continuous.size()) + " exceeds " +
                         std::to_string(kMaxContinuousObs) + at);
                }
                for (float v : o.continuous) {
                    if (!std::isfinite(v)) {
                        fail("continuous observation not finite" + at);
                        break;
                    }
                }
                break;
            case Modality::kDiscrete:
                if (static_cast<int>(o.discrete.size()) != m.observation.length) {
                    fail("discrete observation length " + std::to_string(o.discrete.size()) + " != spec " +
                         std::to_string(m.observation.length) + at);
                }
                for (int v : o.discrete) {
                    if (v < 0 || v >= m.observation.alphabet) {
                        fail("discrete symbol " + std::to_string(v) + " outside alphabet of " +
                             std::to_string(m.observation.alphabet) + at);
                        break;
                    }
                }
                break;
            case Modality::kImage: {
                const Shape want{m.observation.channels, m.observation.height, m.observation.width};
                if (o.image.shape != want) {
                    fail("image shape " + shape_str(o.image.shape) + " != spec " + shape_str(want) + at);
                }
                for (float v : o.image.data) {
                    if (!(v >= 0.0f && v <= 1.0f)) {
                        fail("image value outside [0,1]" + at);
                        break;
                    }
                }
                break;
            }
        }
    }
    for (size_t t = 0; t < e.actions.size(); ++t) {
        const auto& a = e.actions[t];
        const std::string at = " at t=" + std::to_string(t);
        if (a.is_discrete != m.action.is_discrete) {
            fail("action modality mismatch" + at);
            continue;
        }
        if (a.is_discrete) {
            if (a.discrete < 0 || a.discrete >= m.action.count) {
                fail("discrete action " + std::to_string(a.discrete) + " outside [0," +
                     std::to_string(m.action.count) + ")" + at);
            }
        } else {
            if (static_cast<int>(a.continuous.size()) != m.action.length) {
                fail("continuous action length " + std::to_string(a.continuous.size()) + " != spec " +
                     std::to_string(m.action.length) + at);
            }
            if (static_cast<int>(a.continuous.size()) > kMaxContinuous) {
                fail("continuous action length exceeds " + std::to_string(kMaxContinuous) + at);
            }
            for (float v : a.continuous) {
                if (!std::isfinite(v)) {
                    fail("continuous action not finite" + at);
                    break;
                }
            }
        }
    }
    return violations;
}

// ---------------------------------------------------------------------------
// json encoding (manifest.json + episodes.jsonl in a dataset directory)
// ---------------------------------------------------------------------------
namespace dataset_io {

inline nlohmann::json obs_spec_json(const ObservationSpec& s) {
    nlohmann::json j;
    j["kind"] = modality_name(s.kind);
    switch (s.kind) {
        case Modality::kContinuous: j["length"] = s.length; break;
        case Modality::kDiscrete:
            j["length"] = s.length;
            j["alphabet"] = s.alphabet;
            break;
        case Modality::kImage:
            j["channels"] = s.channels;
            j["height"] = s.height;
            j["width"] = s.width;
            break;
    }
    return j;
}

inline ObservationSpec obs_spec_from_json(const nlohmann::json& j) {
    ObservationSpec s;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "continuous") {
        s.kind = Modality::kContinuous;
        s.length = j.at("length").get<int>();
    } else if (kind == "discrete") {
        s.kind = Modality::kDiscrete;
        s.length = j.at("length").get<int>();
        s.alphabet = j.at("alphabet").get<int>();
    } else if (kind == "image") {
        s.kind = Modality::kImage;
        s.channels = j.at("channels").get<int>();
        s.height = j.at("height").get<int>();
        s.width = j.at("width").get<int>();
    } else {
        throw std::runtime_error("dataset: unknown observation kind '" + kind + "'");
    }
    return s;
}

inline nlohmann::json action_spec_json(const ActionSpec& s) {
    nlohmann::json j;
    if (s.is_discrete) {
        j["kind"] = "discrete";
        j["count"] = s.count;
    } else {
        j["kind"] = "continuous";
        j["length"] = s.length;
    }
    return j;
}

inline ActionSpec action_spec_from_json(const nlohmann::json& j) {
    ActionSpec s;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "discrete") {
        s.is_discrete = true;
        s.count = j.at("count").get<int>();
    } else if (kind == "continuous") {
        s.is_discrete = false;
        s.length = j.at("length").get<int>();
    } else {
        throw std::runtime_error("dataset: unknown action kind '" + kind + "'");
    }
    return s;
}

inline nlohmann::json manifest_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["task_id"] = m.task_id;
    j["domain"] = m.domain;
    j["observation"] = obs_spec_json(m.observation);
    j["action"] = action_spec_json(m.action);
    j["mission_budget"] = m.mission_budget;
    j["expert_score"] = {{"mean", m.expert_score_mean}, {"std", m.expert_score_std}};
    j["random_score"] = m.random_score;
    j["episode_count"] = m.episode_count;
    j["sample_weight"] = m.sample_weight;
    j["loss_weight"] = m.loss_weight;
    return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    if (j.value("format_version", 0) != 1) throw std::runtime_error("dataset: unsupported format_version");
    DatasetManifest m;
    m.task_id = j.at("task_id").get<std::string>();
    m.domain = j.at("domain").get<std::string>();
    m.observation = obs_spec_from_json(j.at("observation"));
    m.action = action_spec_from_json(j.at("action"));
    m.mission_budget = j.value("mission_budget", 0);
    m.expert_score_mean = j.at("expert_score").at("mean").get<double>();
    m.expert_score_std = j.at("expert_score").at("std").get<double>();
    m.random_score = j.at("random_score").get<double>();
    m.episode_count = j.at("episode_count").get<int64_t>();
    m.sample_weight = j.at("sample_weight").get<double>();
    m.loss_weight = j.at("loss_weight").get<double>();
    if (m.episode_count <= 0) throw std::runtime_error("dataset: episode count > 0 violated");
    if (!(m.sample_weight > 0.0) || !(m.loss_weight > 0.0)) {
        throw std::runtime_error("dataset: weights must be positive");
    }
    return m;
}

// floats travel as doubles so the shortest-round-trip printer restores them
// bit-exactly; images as base64 of row-major little-endian 32-bit values
inline nlohmann::json image_json(const Tensor<float>& img) {
    nlohmann::json j;
    j["shape"] = img.shape;
    j["data"] = base64_encode(reinterpret_cast<const uint8_t*>(img.data.data()), img.data.size() * sizeof(float));
    return j;
}

inline Tensor<float> image_from_json(const nlohmann::json& j) {
    const Shape shape = j.at("shape").get<Shape>();
    const auto bytes = base64_decode(j.at("data").get<std::string>());
    if (bytes.size() != static_cast<size_t>(shape_numel(shape)) * sizeof(float)) {
        throw std::runtime_error("dataset: image payload size does not match shape");
    }
    Tensor<float> img(shape);
    std::memcpy(img.data.data(), bytes.data(), bytes.size());
    return img;
}

inline nlohmann::json episode_json(const Episode& e) {
    nlohmann::json j;
    j["task_id"] = e.task_id;
    if (!e.text_mission.empty()) j["mission"] = e.text_mission;
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : e.observations) {
        switch (o.kind) {
            case Modality::kContinuous: {
                nlohmann::json v = nlohmann::json::array();
                for (float x : o.continuous) v.push_back(static_cast<double>(x));
                obs.push_back(std::move(v));
                break;
            }
            case Modality::kDiscrete: obs.push_back(o.discrete); break;
            case Modality::kImage: obs.push_back(image_json(o.image)); break;
        }
    }
    j["observations"] = std::move(obs);
    nlohmann::json acts = nlohmann::json::array();
    for (const auto& a : e.actions) {
        if (a.is_discrete) {
            acts.push_back(a.discrete);
        } else {
            nlohmann::json v = nlohmann::json::array();
            for (float x : a.continuous) v.push_back(static_cast<double>(x));
            acts.push_back(std::move(v));
        }
    }
    j["actions"] = std::move(acts);
    nlohmann::json rw = nlohmann::json::array();
    for (float r : e.rewards) rw.push_back(static_cast<double>(r));
    j["rewards"] = std::move(rw);
    return j;
}

inline Episode episode_from_json(const nlohmann::json& j, const DatasetManifest& m) {
    Episode e;
    e.task_id = j.at("task_id").get<std::string>();
    e.text_mission = j.value("mission", std::string());
    for (const auto& o : j.at("observations")) {
        switch (m.observation.kind) {
            case Modality::kContinuous: {
                std::vector<float> v;
                for (const auto& x : o) v.push_back(static_cast<float>(x.get<double>()));
                e.observations.push_back(Observation::make_continuous(std::move(v)));
                break;
            }
            case Modality::kDiscrete: e.observations.push_back(Observation::make_discrete(o.get<std::vector<int>>())); break;
            case Modality::kImage: e.observations.push_back(Observation::make_image(image_from_json(o))); break;
        }
    }
    for (const auto& a : j.at("actions")) {
        if (m.action.is_discrete) {
            e.actions.push_back(Action::make_discrete(a.get<int>()));
        } else {
            std::vector<float> v;
            for (const auto& x : a) v.push_back(static_cast<float>(x.get<double>()));
            e.actions.push_back(Action::make_continuous(std::move(v)));
        }
    }
    for (const auto& r : j.at("rewards")) e.rewards.push_back(static_cast<float>(r.get<double>()));
    return e;
}

}  // namespace dataset_io

// ---------------------------------------------------------------------------
// dataset directory: manifest.json + episodes.jsonl
// ---------------------------------------------------------------------------

inline void write_episodes(const std::filesystem::path& dir, const std::vector<Episode>& episodes,
                           DatasetManifest manifest) {
    for (size_t i = 0; i < episodes.size(); ++i) {
        const auto violations = validate_episode(episodes[i], manifest);
        if (!violations.empty()) {
            throw std::invalid_argument("write_episodes: episode " + std::to_string(i) + ": " + violations.front());
        }
    }
    if (episodes.empty()) throw std::invalid_argument("write_episodes: episode count > 0 violated");
    manifest.episode_count = static_cast<int64_t>(episodes.size());
    std::filesystem::create_directories(dir);
    {
        std::ofstream mf(dir / "manifest.json");
        if (!mf) throw std::runtime_error("write_episodes: cannot write " + (dir / "manifest.json").string());
        mf << dataset_io::manifest_json(manifest).dump(2) << '\n';
    }
    std::ofstream ef(dir / "episodes.jsonl");
    if (!ef) throw std::runtime_error("write_episodes: cannot write " + (dir / "episodes.jsonl").string());
    for (const auto& e : episodes) ef << dataset_io::episode_json(e).dump() << '\n';
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("read_episodes: cannot open " + (dir / "manifest.json").string());
    nlohmann::json j;
    try {
        mf >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("read_episodes: malformed manifest: " + std::string(e.what()));
    }
    return dataset_io::manifest_from_json(j);
}

// Streams episodes.jsonl one record at a time; no full-file preload.
class EpisodeReader {
public:
    explicit EpisodeReader(const std::filesystem::path& dir) : manifest_(read_manifest(dir)) {
        file_.open(dir / "episodes.jsonl");
        if (!file_) throw std::runtime_error("read_episodes: cannot open " + (dir / "episodes.jsonl").string());
    }

    const DatasetManifest& manifest() const { return manifest_; }

    std::optional<Episode> next() {
        std::string line;
        if (!std::getline(file_, line)) return std::nullopt;
        ++record_;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("read_episodes: record " + std::to_string(record_) + ": " + e.what());
        }
        Episode e;
        try {
            e = dataset_io::episode_from_json(j, manifest_);
        } catch (const std::exception& ex) {
            throw std::runtime_error("read_episodes: record " + std::to_string(record_) + ": " + ex.what());
        }
        const auto violations = validate_episode(e, manifest_);
        if (!violations.empty()) {
            throw std::runtime_error("read_episodes: record " + std::to_string(record_) + ": " + violations.front());
        }
        return e;
    }

private:
    DatasetManifest manifest_;
    std::ifstream file_;
    int64_t record_ = 0;
};

inline std::pair<std::vector<Episode>, DatasetManifest> read_episodes(const std::filesystem::path& dir) {
    EpisodeReader reader(dir);
    std::vector<Episode> episodes;
    while (auto e = reader.next()) episodes.push_back(std::move(*e));
    if (episodes.empty()) throw std::runtime_error("read_episodes: episode count > 0 violated");
    if (static_cast<int64_t>(episodes.size()) != reader.manifest().episode_count) {
        throw std::runtime_error("read_episodes: manifest declares " + std::to_string(reader.manifest().episode_count) +
                                 " episodes, file holds " + std::to_string(episodes.size()));
    }
    return {std::move(episodes), reader.manifest()};
}

}  // namespace jat

#endif  // JAT_TRAJECTORY_HPP_
