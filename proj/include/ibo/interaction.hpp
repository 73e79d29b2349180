#pragma once

#include "ibo/proposal.hpp"

#include <numeric>
#include <string_view>

namespace ibo {

enum class MetricKind { Random, Regular, Improvement };

inline std::string_view to_string(MetricKind k)
{
    switch (k) {
    case MetricKind::Random: return "Random";
    case MetricKind::Regular: return "Regular";
    case MetricKind::Improvement: return "Improvement";
    }
    return "?";
}

inline MetricKind metric_kind_from_string(std::string_view s)
{
    if (s == "Random") return MetricKind::Random;
    if (s == "Regular") return MetricKind::Regular;
    if (s == "Improvement") return MetricKind::Improvement;
    throw ContractViolation("unknown metric kind '" + std::string(s) + "'");
}

/// When to ask the human.
///
/// `epsilon` is the probability of interacting under the Random metric: a
/// uniform draw u interacts iff u > 1 - epsilon.
struct MetricConfig {
    MetricKind kind = MetricKind::Regular;
    double epsilon = 0.1;
    int interval = 25;
    int window = 10;
    double threshold = 1e-3;

    void validate() const
    {
        require(std::isfinite(epsilon) && epsilon >= 0 && epsilon <= 1, "metric.epsilon must be in [0,1]");
        require(interval >= 1, "metric.interval must be >= 1");
        require(window >= 1, "metric.window must be >= 1");
        require(std::isfinite(threshold) && threshold >= 0, "metric.threshold must be finite and >= 0");
    }
};

/// Pure decision for 0-based `episode`; `best_history` holds the best-so-far
/// value after each completed episode.
inline bool should_interact(const MetricConfig& cfg, int episode, const std::vector<double>& best_history,
                            std::uint64_t rng_seed)
{
    require(episode >= 0, "should_interact: negative episode");
    switch (cfg.kind) {
    case MetricKind::Random: {
        auto rng = seeded_stream(rng_seed, {0x726eULL, static_cast<std::uint64_t>(episode)});
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        return u > 1.0 - cfg.epsilon;
    }
    case MetricKind::Regular:
        return episode > 0 && episode % cfg.interval == 0;
    case MetricKind::Improvement: {
        const auto w = static_cast<std::size_t>(cfg.window);
        if (episode < cfg.window || best_history.size() <= w) {
            return false;
        }
        const std::size_t last = best_history.size() - 1;
        const double rate = (best_history[last] - best_history[last - w]) / static_cast<double>(cfg.window);
        return rate < cfg.threshold;
    }
    }
    return false;
}

/// One (state, action) sample of the rollout shown to the user.
struct TraceStep {
    std::vector<double> state;
    std::vector<double> action;
    double reward = 0.0;
};

struct InteractionRequest {
    int episode = 0;
    Vector x_best;
    double best_return = 0.0;
    Bounds bounds;
    std::vector<TraceStep> rollout_trace;
    ProposalDistribution proposal;
};

enum class PreferRule { None, WithinTolerance, All };

inline std::string_view to_string(PreferRule r)
{
    switch (r) {
    case PreferRule::None: return "None";
    case PreferRule::WithinTolerance: return "WithinTolerance";
    case PreferRule::All: return "All";
    }
    return "?";
}

inline PreferRule prefer_rule_from_string(std::string_view s)
{
    if (s == "None") return PreferRule::None;
    if (s == "WithinTolerance") return PreferRule::WithinTolerance;
    if (s == "All") return PreferRule::All;
    throw ContractViolation("unknown prefer rule '" + std::string(s) + "'");
}

/// Scripted stand-in for the human: walks x_best toward a known target.
struct SimulatedUserConfig {
    Vector target;
    double step_fraction = 0.5;
    PreferRule prefer_rule = PreferRule::WithinTolerance;
    double tolerance = 0.1;
    int max_dims_per_interaction = 2;
    bool zero_delta = false;  // Preference variant: flags only, no edits

    void validate() const
    {
        require(std::isfinite(step_fraction) && step_fraction > 0 && step_fraction <= 1,
                "simulated_user.step_fraction must be in (0,1]");
        require(std::isfinite(tolerance) && tolerance >= 0, "simulated_user.tolerance must be >= 0");
        require(max_dims_per_interaction >= 1, "simulated_user.max_dims_per_interaction must be >= 1");
    }
};

/// Moves the `max_dims_per_interaction` dimensions farthest from the target a
/// `step_fraction` of the way there (ties: lower index first). Flags follow
/// `prefer_rule`: WithinTolerance checks every dimension of the edited point
/// against the target, All flags exactly the edited dimensions.
inline PreferenceInput simulated_user(const InteractionRequest& req, const SimulatedUserConfig& cfg,
                                      std::uint64_t /*rng_seed*/ = 0)
{
    const auto d = req.x_best.size();
    require(cfg.target.size() == d, "simulated_user: target dimension mismatch");
    require(req.bounds.dim() == static_cast<std::size_t>(d), "simulated_user: bounds dimension mismatch");

    const Vector gap = cfg.target - req.x_best;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return std::abs(gap[a]) > std::abs(gap[b]); });
    const auto touched = std::min<std::size_t>(static_cast<std::size_t>(cfg.max_dims_per_interaction), order.size());

    PreferenceInput in;
    in.delta = Vector::Zero(d);
    in.preferred.assign(static_cast<std::size_t>(d), false);
    if (!cfg.zero_delta) {
        for (std::size_t k = 0; k < touched; ++k) {
            in.delta[order[k]] = cfg.step_fraction * gap[order[k]];
        }
        // Keep x_best + delta inside the box.
        in.delta = req.bounds.clip(req.x_best + in.delta) - req.x_best;
    }

    switch (cfg.prefer_rule) {
    case PreferRule::None:
        break;
    case PreferRule::WithinTolerance:
        for (Eigen::Index i = 0; i < d; ++i) {
            in.preferred[static_cast<std::size_t>(i)] =
                std::abs(req.x_best[i] + in.delta[i] - cfg.target[i]) <= cfg.tolerance;
        }
        break;
    case PreferRule::All:
        for (std::size_t k = 0; k < touched; ++k) {
            in.preferred[static_cast<std::size_t>(order[k])] = true;
        }
        break;
    }
    return in;
}

} // namespace ibo
