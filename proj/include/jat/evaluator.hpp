#ifndef JAT_EVALUATOR_HPP_
#define JAT_EVALUATOR_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jat/model.hpp"
#include "jat/toyenvs.hpp"

namespace jat {

// ---------------------------------------------------------------------------
// rollout evaluation: greedy policy, sliding context, no prompt
// ---------------------------------------------------------------------------

template <typename T>
std::vector<double> evaluate_policy(Model<T>& model, Environment& env, int n_episodes, uint64_t seed,
                                    bool zero_rewards = false) {
    if (!model.has_task(env.task_id())) {
        throw std::invalid_argument("evaluate: model has no task '" + env.task_id() + "'");
    }
    const auto& info = model.task(env.task_id());
    if (!(info.manifest.observation == env.observation_spec()) || !(info.manifest.action == env.action_spec())) {
        throw std::invalid_argument(
            "evaluate: spec mismatch for '" + env.task_id() + "': model expects " +
            dataset_io::obs_spec_json(info.manifest.observation).dump() + "/" +
            dataset_io::action_spec_json(info.manifest.action).dump() + ", environment provides " +
            dataset_io::obs_spec_json(env.observation_spec()).dump() + "/" +
            dataset_io::action_spec_json(env.action_spec()).dump());
    }
    std::vector<double> returns;
    returns.reserve(static_cast<size_t>(n_episodes));
    typename Model<T>::PolicyRunner runner(model, env.task_id(), zero_rewards);
    for (int ep = 0; ep < n_episodes; ++ep) {
        auto obs = env.reset(derive_seed(seed, static_cast<uint64_t>(ep)));
        runner.begin_episode(obs, env.mission());
        double ret = 0.0;
        for (;;) {
            const Action a = runner.act();
            const auto r = env.step(a);
            ret += static_cast<double>(r.reward);
            if (r.done) break;
            runner.observe(r.observation, r.reward);
        }
        returns.push_back(ret);
    }
    return returns;
}

// mean return of the uniform-random policy over n episodes
inline double estimate_random_score(Environment& env, int n = 1000, uint64_t seed = 0) {
    if (n < 1) throw std::invalid_argument("estimate_random_score: n must be >= 1");
    return random_policy_mean_return(env, n, seed);
}

// ---------------------------------------------------------------------------
// statistics
// ---------------------------------------------------------------------------

// (score - random) / (expert - random); undefined when the expert does not
// beat the random baseline
inline std::optional<double> normalize_score(double score, double random_score, double expert_score) {
    if (!(expert_score > random_score)) return std::nullopt;
    return (score - random_score) / (expert_score - random_score);
}

// interquartile mean with fractional trimming: exactly 25% of total weight
// drops from each tail, boundary values keep their partial weight
inline double iqm(std::vector<double> scores) {
    if (scores.empty()) throw std::invalid_argument("iqm: empty input");
    std::sort(scores.begin(), scores.end());
    const double n = static_cast<double>(scores.size());
    const double lo = 0.25 * n, hi = 0.75 * n;
    double acc = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        const double left = std::max(static_cast<double>(i), lo);
        const double right = std::min(static_cast<double>(i) + 1.0, hi);
        if (right > left) acc += (right - left) * scores[i];
    }
    return acc / (0.5 * n);
}

inline double mean(const std::vector<double>& scores) {
    if (scores.empty()) throw std::invalid_argument("mean: empty input");
    return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

// P(a > b) + 0.5 P(a == b) over score pairs, averaged over tasks
inline double probability_of_improvement(const std::map<std::string, std::vector<double>>& a,
                                         const std::map<std::string, std::vector<double>>& b) {
    if (a.empty() || a.size() != b.size()) {
        throw std::invalid_argument("probability_of_improvement: task sets must match and be non-empty");
    }
    double total = 0.0;
    for (const auto& [task, sa] : a) {
        const auto it = b.find(task);
        if (it == b.end()) throw std::invalid_argument("probability_of_improvement: task '" + task + "' missing");
        const auto& sb = it->second;
        if (sa.empty() || sb.empty()) throw std::invalid_argument("probability_of_improvement: empty scores");
        double wins = 0.0;
        for (double x : sa) {
            for (double y : sb) wins += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
        }
        total += wins / (static_cast<double>(sa.size()) * static_cast<double>(sb.size()));
    }
    return total / static_cast<double>(a.size());
}

// Stratified bootstrap: resample scores within each task independently,
// recompute the statistic on the pooled resample, take the percentile
// interval. Deterministic under seed.
inline std::pair<double, double> stratified_bootstrap_ci(
    const std::map<std::string, std::vector<double>>& per_task,
    const std::function<double(const std::vector<double>&)>& statistic, double level = 0.95, int resamples = 2000,
    uint64_t seed = 0) {
    if (per_task.empty()) throw std::invalid_argument("bootstrap: no tasks");
    for (const auto& [task, scores] : per_task) {
        if (scores.empty()) throw std::invalid_argument("bootstrap: task '" + task + "' has no scores");
    }
    Rng rng(seed);
    std::vector<double> stats;
    stats.reserve(static_cast<size_t>(resamples));
    std::vector<double> pooled;
    for (int r = 0; r < resamples; ++r) {
        pooled.clear();
        for (const auto& [task, scores] : per_task) {
            for (size_t i = 0; i < scores.size(); ++i) {
                pooled.push_back(scores[rng.below(scores.size())]);
            }
        }
        stats.push_back(statistic(pooled));
    }
    std::sort(stats.begin(), stats.end());
    auto quantile = [&](double q) {
        const double pos = q * (static_cast<double>(stats.size()) - 1.0);
        const size_t base = static_cast<size_t>(pos);
        const double frac = pos - static_cast<double>(base);
        if (base + 1 >= stats.size()) return stats.back();
        return stats[base] * (1.0 - frac) + stats[base + 1] * frac;
    };
    const double alpha = 1.0 - level;
    return {quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0)};
}

// bootstrap over the pairwise statistic itself
inline std::pair<double, double> probability_of_improvement_ci(
    const std::map<std::string, std::vector<double>>& a, const std::map<std::string, std::vector<double>>& b,
    double level = 0.95, int resamples = 2000, uint64_t seed = 0) {
    Rng rng(seed);
    std::vector<double> stats;
    stats.reserve(static_cast<size_t>(resamples));
    for (int r = 0; r < resamples; ++r) {
        std::map<std::string, std::vector<double>> ra, rb;
        for (const auto& [task, scores] : a) {
            auto& dst = ra[task];
            for (size_t i = 0; i < scores.size(); ++i) dst.push_back(scores[rng.below(scores.size())]);
        }
        for (const auto& [task, scores] : b) {
            auto& dst = rb[task];
            for (size_t i = 0; i < scores.size(); ++i) dst.push_back(scores[rng.below(scores.size())]);
        }
        stats.push_back(probability_of_improvement(ra, rb));
    }
    std::sort(stats.begin(), stats.end());
    auto quantile = [&](double q) {
        const double pos = q * (static_cast<double>(stats.size()) - 1.0);
        const size_t base = static_cast<size_t>(pos);
        const double frac = pos - static_cast<double>(base);
        if (base + 1 >= stats.size()) return stats.back();
        return stats[base] * (1.0 - frac) + stats[base + 1] * frac;
    };
    const double alpha = 1.0 - level;
    return {quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0)};
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

struct TaskEval {
    std::string task_id;
    std::string domain;
    std::vector<double> raw_scores;
    double raw_mean = 0.0;
    double raw_std = 0.0;
    double random_score = 0.0;
    double expert_score = 0.0;
    bool normalized = false;  // false when normalization is not applicable
    std::vector<double> normalized_scores;
    double normalized_mean = 0.0;
    double normalized_std = 0.0;
};

struct DomainAggregate {
    std::string domain;
    int tasks = 0;
    int excluded = 0;  // tasks without a defined normalization
    double iqm_value = 0.0;
    double mean_value = 0.0;
    std::pair<double, double> iqm_ci{0.0, 0.0};
    std::pair<double, double> mean_ci{0.0, 0.0};
};

struct EvalReport {
    std::vector<TaskEval> tasks;
    std::vector<DomainAggregate> domains;
};

inline TaskEval make_task_eval(const std::string& task_id, const std::string& domain,
                               std::vector<double> raw_scores, double random_score, double expert_score) {
    TaskEval t;
    t.task_id = task_id;
    t.domain = domain;
    t.raw_scores = std::move(raw_scores);
    t.random_score = random_score;
    t.expert_score = expert_score;
    t.raw_mean = mean(t.raw_scores);
    double sq = 0.0;
    for (double s : t.raw_scores) sq += (s - t.raw_mean) * (s - t.raw_mean);
    t.raw_std = std::sqrt(sq / static_cast<double>(t.raw_scores.size()));
    if (auto n = normalize_score(t.raw_mean, random_score, expert_score)) {
        t.normalized = true;
        for (double s : t.raw_scores) t.normalized_scores.push_back(*normalize_score(s, random_score, expert_score));
        t.normalized_mean = *n;
        double nsq = 0.0;
        for (double s : t.normalized_scores) nsq += (s - t.normalized_mean) * (s - t.normalized_mean);
        t.normalized_std = std::sqrt(nsq / static_cast<double>(t.normalized_scores.size()));
    }
    return t;
}

// per-domain aggregation over pooled normalized scores; tasks without a
// defined normalization are excluded and counted
inline EvalReport aggregate_by_domain(std::vector<TaskEval> tasks, int resamples = 2000, uint64_t seed = 0) {
    EvalReport report;
    std::map<std::string, std::vector<const TaskEval*>> by_domain;
    for (const auto& t : tasks) by_domain[t.domain].push_back(&t);
    for (const auto& [domain, members] : by_domain) {
        DomainAggregate agg;
        agg.domain = domain;
        agg.tasks = static_cast<int>(members.size());
        std::map<std::string, std::vector<double>> strata;
        std::vector<double> pooled;
        for (const auto* t : members) {
            if (!t->normalized) {
                ++agg.excluded;
                continue;
            }
            strata[t->task_id] = t->normalized_scores;
            pooled.insert(pooled.end(), t->normalized_scores.begin(), t->normalized_scores.end());
        }
        if (!pooled.empty()) {
            agg.iqm_value = iqm(pooled);
            agg.mean_value = mean(pooled);
            agg.iqm_ci = stratified_bootstrap_ci(strata, [](const std::vector<double>& v) { return iqm(v); }, 0.95,
                                                 resamples, seed);
            agg.mean_ci = stratified_bootstrap_ci(strata, [](const std::vector<double>& v) { return mean(v); }, 0.95,
                                                  resamples, derive_seed(seed, 1));
        }
        report.domains.push_back(std::move(agg));
    }
    report.tasks = std::move(tasks);
    return report;
}

inline nlohmann::json report_json(const EvalReport& report) {
    nlohmann::json j;
    j["tasks"] = nlohmann::json::array();
    for (const auto& t : report.tasks) {
        nlohmann::json tj;
        tj["task_id"] = t.task_id;
        tj["domain"] = t.domain;
        tj["episodes"] = t.raw_scores.size();
        tj["raw_mean"] = t.raw_mean;
        tj["raw_std"] = t.raw_std;
        tj["random_score"] = t.random_score;
        tj["expert_score"] = t.expert_score;
        if (t.normalized) {
            tj["normalized_mean"] = t.normalized_mean;
            tj["normalized_std"] = t.normalized_std;
        } else {
            tj["normalized_mean"] = nullptr;
        }
        j["tasks"].push_back(std::move(tj));
    }
    j["domains"] = nlohmann::json::array();
    for (const auto& d : report.domains) {
        nlohmann::json dj;
        dj["domain"] = d.domain;
        dj["tasks"] = d.tasks;
        dj["excluded"] = d.excluded;
        dj["iqm"] = d.iqm_value;
        dj["mean"] = d.mean_value;
        dj["iqm_ci"] = {d.iqm_ci.first, d.iqm_ci.second};
        dj["mean_ci"] = {d.mean_ci.first, d.mean_ci.second};
        j["domains"].push_back(std::move(dj));
    }
    return j;
}

inline void write_report(const EvalReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "report.json");
        f << report_json(report).dump(2) << '\n';
    }
    std::ofstream csv(dir / "scores.csv");
    csv << "task_id,domain,episode,raw_score,normalized_score\n";
    for (const auto& t : report.tasks) {
        for (size_t i = 0; i < t.raw_scores.size(); ++i) {
            csv << t.task_id << ',' << t.domain << ',' << i << ',' << t.raw_scores[i] << ',';
            if (t.normalized) csv << t.normalized_scores[i];
            csv << '\n';
        }
    }
}

}  // namespace jat

#endif  // JAT_EVALUATOR_HPP_
