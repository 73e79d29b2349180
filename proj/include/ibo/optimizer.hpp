#pragma once

// The interactive Bayesian-optimization episode loop.

#include "ibo/acquisition.hpp"
#include "ibo/environments.hpp"
#include "ibo/interaction.hpp"
#include "ibo/proposal.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <optional>

namespace ibo {

/// Validation failure for a named configuration field.
class ConfigError : public ContractViolation {
public:
    ConfigError(std::string field, const std::string& message)
        : ContractViolation(field + ": " + message), field_(std::move(field))
    {
    }
    [[nodiscard]] const std::string& field() const { return field_; }

private:
    std::string field_;
};

enum class UserSource { None, Simulated, Live };
enum class Variant { Preference, Shaping, Mixture };

inline std::string_view to_string(UserSource u)
{
    switch (u) {
    case UserSource::None: return "None";
    case UserSource::Simulated: return "Simulated";
    case UserSource::Live: return "Live";
    }
    return "?";
}

inline UserSource user_source_from_string(std::string_view s)
{
    if (s == "None") return UserSource::None;
    if (s == "Simulated") return UserSource::Simulated;
    if (s == "Live") return UserSource::Live;
    throw ContractViolation("unknown user source '" + std::string(s) + "'");
}

inline std::string_view to_string(Variant v)
{
    switch (v) {
    case Variant::Preference: return "Preference";
    case Variant::Shaping: return "Shaping";
    case Variant::Mixture: return "Mixture";
    }
    return "?";
}

inline Variant variant_from_string(std::string_view s)
{
    if (s == "Preference") return Variant::Preference;
    if (s == "Shaping") return Variant::Shaping;
    if (s == "Mixture") return Variant::Mixture;
    throw ContractViolation("unknown variant '" + std::string(s) + "'");
}

struct RunConfig {
    EnvSpec env = make_env_spec(EnvName::Cartpole);
    AcquisitionConfig acquisition;
    std::optional<MetricConfig> metric;
    PreferenceScales preference;
    int episodes = 150;
    int init_observations = 5;
    std::uint64_t seed = 0;
    UserSource user_source = UserSource::None;
    SimulatedUserConfig simulated_user;
    // Offline random search that picks the simulated user's target when none is given.
    int target_search_evals = 5000;
    std::uint64_t target_search_seed = 0;
    Variant variant = Variant::Mixture;
    HyperparamSearchSpace gp;
    double user_timeout_s = 300.0;

    [[nodiscard]] bool baseline() const { return !metric && user_source == UserSource::None; }

    /// Throws ConfigError naming the offending field.
    void validate() const
    {
        auto check = [](bool ok, const char* field, const std::string& msg) {
            if (!ok) {
                throw ConfigError(field, msg);
            }
        };
        auto wrap = [](const char* field, auto&& fn) {
            try {
                fn();
            } catch (const ConfigError&) {
                throw;
            } catch (const ContractViolation& e) {
                throw ConfigError(field, e.what());
            }
        };
        check(episodes >= 1, "episodes", "must be >= 1");
        check(init_observations >= 1, "init_observations", "must be >= 1");
        check(episodes > init_observations, "episodes", "must be greater than init_observations");
        check(static_cast<bool>(metric) == (user_source != UserSource::None), metric ? "user_source" : "metric",
              "baseline mode requires both metric and user_source to be unset; interactive mode requires both");
        wrap("env", [&] { env.validate(); });
        wrap("acquisition", [&] { acquisition.validate(); });
        if (metric) {
            wrap("metric", [&] { metric->validate(); });
        }
        check(preference.sigma0_scale > 0 && std::isfinite(preference.sigma0_scale), "preference.sigma0_scale", "must be > 0");
        check(preference.sigma_pref_scale > 0 && preference.sigma_pref_scale < preference.sigma0_scale,
              "preference.sigma_pref_scale", "must be in (0, sigma0_scale)");
        check(gp.starts >= 1, "gp.starts", "must be >= 1");
        check(gp.max_evals_per_start >= 4, "gp.max_evals_per_start", "must be >= 4");
        check(user_timeout_s > 0, "user_timeout_s", "must be > 0");
        if (user_source == UserSource::Simulated) {
            wrap("simulated_user", [&] { simulated_user.validate(); });
            const Bounds pb = param_bounds(env);
            if (simulated_user.target.size() == 0) {
                check(target_search_evals >= 1, "simulated_user.target", "no target and no target search budget");
            } else {
                check(static_cast<std::size_t>(simulated_user.target.size()) == pb.dim(), "simulated_user.target",
                      "has " + std::to_string(simulated_user.target.size()) + " entries, expected " +
                          std::to_string(pb.dim()));
                check(pb.contains(simulated_user.target), "simulated_user.target", "outside parameter bounds");
            }
        }
    }
};

/// Best theta among `evals` uniform draws (first index wins ties).
inline std::pair<Vector, double> random_search(const EnvSpec& env, int evals, std::uint64_t seed)
{
    const Bounds pb = param_bounds(env);
    auto rng = seeded_stream(seed, {0x7273ULL, 0x6561ULL});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector best;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < evals; ++i) {
        Vector u(static_cast<Eigen::Index>(pb.dim()));
        for (Eigen::Index j = 0; j < u.size(); ++j) {
            u[j] = unit(rng);
        }
        const Vector theta = pb.from_unit(u);
        const double v = evaluate_return(env, theta);
        if (v > best_value) {
            best_value = v;
            best = theta;
        }
    }
    return {best, best_value};
}

/// Fills in anything derived rather than configured (the simulated target).
inline RunConfig resolve_config(RunConfig cfg)
{
    cfg.validate();
    if (cfg.user_source == UserSource::Simulated && cfg.simulated_user.target.size() == 0) {
        EnvSpec env = cfg.env;
        env.seed = cfg.seed;
        cfg.simulated_user.target = random_search(env, cfg.target_search_evals, cfg.target_search_seed).first;
    }
    return cfg;
}

/// Maps an experiment variant onto the scripted user: Preference flags
/// without edits, Shaping edits without flags, Mixture both.
inline SimulatedUserConfig simulated_user_for_variant(SimulatedUserConfig cfg, Variant v)
{
    switch (v) {
    case Variant::Preference:
        cfg.zero_delta = true;
        cfg.prefer_rule = PreferRule::WithinTolerance;
        break;
    case Variant::Shaping:
        cfg.zero_delta = false;
        cfg.prefer_rule = PreferRule::None;
        break;
    case Variant::Mixture:
        cfg.zero_delta = false;
        if (cfg.prefer_rule == PreferRule::None) {
            cfg.prefer_rule = PreferRule::WithinTolerance;
        }
        break;
    }
    return cfg;
}

/// Where interaction requests go. Returning nullopt means "no answer in time".
class UserChannel {
public:
    virtual ~UserChannel() = default;
    virtual std::optional<PreferenceInput> request(const InteractionRequest& req) = 0;
};

class SimulatedUserChannel final : public UserChannel {
public:
    SimulatedUserChannel(SimulatedUserConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {}

    std::optional<PreferenceInput> request(const InteractionRequest& req) override
    {
        return simulated_user(req, cfg_, seed_ + static_cast<std::uint64_t>(req.episode));
    }

private:
    SimulatedUserConfig cfg_;
    std::uint64_t seed_;
};

/// Answers with prerecorded inputs keyed by episode; silence elsewhere.
class ScriptedUserChannel final : public UserChannel {
public:
    explicit ScriptedUserChannel(std::map<int, PreferenceInput> inputs) : inputs_(std::move(inputs)) {}

    std::optional<PreferenceInput> request(const InteractionRequest& req) override
    {
        const auto it = inputs_.find(req.episode);
        if (it == inputs_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

private:
    std::map<int, PreferenceInput> inputs_;
};

struct Observation {
    Vector theta;
    double value = 0.0;
};

struct EpisodeRecord {
    int episode = 0;
    Vector theta;
    double value = 0.0;
    double best_so_far = 0.0;
    bool interacted = false;
    bool timed_out = false;
    Vector x_best;                         // interacted episodes only
    std::optional<PreferenceInput> input;  // interacted episodes only
    ProposalDistribution proposal;         // after this episode
    KernelHyperparams hyperparams;         // used to pick theta
    double acquisition_score = 0.0;        // non-interactive episodes
    double wall_seconds = 0.0;
};

struct RunLog {
    RunConfig config;
    std::vector<Observation> initial;
    std::vector<EpisodeRecord> records;
    bool aborted = false;
    std::string abort_reason;

    [[nodiscard]] std::vector<double> best_curve() const
    {
        std::vector<double> c;
        c.reserve(records.size());
        for (const auto& r : records) {
            c.push_back(r.best_so_far);
        }
        return c;
    }
};

/// First-index argmax over every observed return (initial design first).
inline std::pair<Vector, double> best_so_far(const RunLog& log)
{
    require(!log.initial.empty() || !log.records.empty(), "best_so_far: empty log");
    Vector best;
    double value = -std::numeric_limits<double>::infinity();
    bool any = false;
    auto consider = [&](const Vector& t, double v) {
        if (!any || v > value) {
            best = t;
            value = v;
            any = true;
        }
    };
    for (const auto& o : log.initial) {
        consider(o.theta, o.value);
    }
    for (const auto& r : log.records) {
        consider(r.theta, r.value);
    }
    return {best, value};
}

/// Optional hooks for live monitoring.
struct RunObserver {
    std::function<void(const std::vector<Observation>&)> on_initial;
    std::function<void(const EpisodeRecord&)> on_episode;
    std::function<void(const RunLog&)> on_finish;
};

namespace detail {
enum StreamTag : std::uint64_t { kInitTag = 0x696e, kCandidateTag = 0x6361, kFitTag = 0x6669 };

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t tag, std::uint64_t episode)
{
    auto rng = seeded_stream(seed, {tag, episode});
    return rng();
}
} // namespace detail

/// Runs the interactive loop.
///
/// Non-interactive episode: sample candidates from the current proposal, pick
/// the acquisition argmax, evaluate, add to the GP. Interactive episode: show
/// x_best = argmax_y(D), evaluate x_best + delta (clipped), add to the GP, then
/// fuse the user's preference likelihood into the proposal. A missing answer
/// degrades to a non-interactive episode and re-queues the request for the
/// next episode. Hyperparameters are refit after every observation.
inline RunLog run(const RunConfig& raw_config, UserChannel* channel = nullptr, const RunObserver& observer = {})
{
    const RunConfig cfg = resolve_config(raw_config);
    EnvSpec env = cfg.env;
    env.seed = cfg.seed;
    const Bounds bounds = param_bounds(env);

    RunLog log;
    log.config = cfg;

    std::optional<SimulatedUserChannel> simulated;
    if (cfg.user_source == UserSource::Simulated && channel == nullptr) {
        simulated.emplace(simulated_user_for_variant(cfg.simulated_user, cfg.variant), cfg.seed);
        channel = &*simulated;
    }

    ProposalDistribution proposal = init_proposal(bounds, cfg.preference.sigma0_scale);
    TrainingSet data(bounds);
    KernelHyperparams hyper;
    std::optional<KernelHyperparams> warm;
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> best_history;

    auto refit = [&](int episode) {
        if (data.size() < 2) {
            return;
        }
        const auto fit = fit_hyperparams(data, cfg.gp,
                                         detail::mix(cfg.seed, detail::kFitTag, static_cast<std::uint64_t>(episode + 1)),
                                         warm);
        hyper = fit.hyperparams;
        if (!fit.used_fallback) {
            warm = hyper;
        }
    };

    try {
        const auto init = rejection_sample(proposal, bounds, static_cast<std::size_t>(cfg.init_observations),
                                           detail::mix(cfg.seed, detail::kInitTag, 0));
        for (const auto& theta : init) {
            const double v = evaluate_return(env, theta);
            data.add(theta, v);
            log.initial.push_back({theta, v});
            best = std::max(best, v);
        }
        refit(-1);
        if (observer.on_initial) {
            observer.on_initial(log.initial);
        }

        bool requeue = false;
        for (int e = 0; e < cfg.episodes; ++e) {
            const auto t0 = std::chrono::steady_clock::now();
            EpisodeRecord rec;
            rec.episode = e;
            rec.hyperparams = hyper;

            const bool wants_user = cfg.metric && channel != nullptr &&
                                    (requeue || should_interact(*cfg.metric, e, best_history, cfg.seed));
            std::optional<PreferenceInput> input;
            Vector x_best;
            if (wants_user) {
                const std::size_t ib = data.argmax();
                x_best = data.inputs[ib];
                InteractionRequest req;
                req.episode = e;
                req.x_best = x_best;
                req.best_return = data.outputs[ib];
                req.bounds = bounds;
                req.rollout_trace = evaluate_episode(env, x_best).trace;
                req.proposal = proposal;
                input = channel->request(req);
                if (input && (input->dim() != bounds.dim() || input->preferred.size() != bounds.dim())) {
                    throw ContractViolation("preference input dimension mismatch at episode " + std::to_string(e));
                }
                requeue = !input.has_value();
                rec.timed_out = !input.has_value();
            }

            if (input) {
                const Vector x_user = bounds.clip(x_best + input->delta);
                const double v = evaluate_return(env, x_user);
                data.add(x_user, v);
                const PreferenceLikelihood like = preference_likelihood(x_best, *input, bounds, cfg.preference);
                proposal = update_proposal(proposal, like);
                rec.theta = x_user;
                rec.value = v;
                rec.interacted = true;
                rec.x_best = x_best;
                rec.input = std::move(input);
            } else {
                const auto candidates =
                    rejection_sample(proposal, bounds, static_cast<std::size_t>(cfg.acquisition.n_candidates),
                                     detail::mix(cfg.seed, detail::kCandidateTag, static_cast<std::uint64_t>(e)));
                const GpModel model(data, hyper);
                const Selection sel = select_next(candidates, model, data.outputs[data.argmax()], cfg.acquisition);
                const double v = evaluate_return(env, sel.candidate);
                data.add(sel.candidate, v);
                rec.theta = sel.candidate;
                rec.value = v;
                rec.acquisition_score = sel.score;
            }

            best = std::max(best, rec.value);
            rec.best_so_far = best;
            rec.proposal = proposal;
            best_history.push_back(best);
            refit(e);
            rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log.records.push_back(rec);
            if (observer.on_episode) {
                observer.on_episode(log.records.back());
            }
        }
    } catch (const DegenerateProposalError& e) {
        log.aborted = true;
        log.abort_reason = e.what();
    } catch (const SingularModelError& e) {
        log.aborted = true;
        log.abort_reason = e.what();
    }
    if (observer.on_finish) {
        observer.on_finish(log);
    }
    return log;
}

inline RunLog run(const RunConfig& cfg, UserChannel& channel, const RunObserver& observer = {})
{
    return run(cfg, &channel, observer);
}

} // namespace ibo
