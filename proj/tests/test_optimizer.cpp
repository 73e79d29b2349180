#include "ibo/io.hpp"
#include "ibo/optimizer.hpp"

#include <gtest/gtest.h>

using namespace ibo;

namespace {

RunConfig sphere_config(int dim, int episodes)
{
    RunConfig c;
    c.env = make_sphere_spec(dim);
    c.episodes = episodes;
    c.init_observations = 2;
    c.acquisition.n_candidates = 200;
    c.gp.starts = 3;
    c.gp.max_evals_per_start = 30;
    return c;
}

RunConfig interactive_sphere(int dim, int episodes, int interval)
{
    RunConfig c = sphere_config(dim, episodes);
    MetricConfig m;
    m.kind = MetricKind::Regular;
    m.interval = interval;
    c.metric = m;
    c.user_source = UserSource::Simulated;
    c.simulated_user.target = Vector::Zero(dim);
    c.simulated_user.step_fraction = 1.0;
    c.simulated_user.max_dims_per_interaction = dim;
    return c;
}

/// Linear scan over every observation, initial design first.
std::vector<double> running_max(const RunLog& log)
{
    double b = -std::numeric_limits<double>::infinity();
    for (const auto& o : log.initial) {
        b = std::max(b, o.value);
    }
    std::vector<double> out;
    for (const auto& r : log.records) {
        b = std::max(b, r.value);
        out.push_back(b);
    }
    return out;
}

class SilentThenAnswer final : public UserChannel {
public:
    std::vector<int> asked;

    std::optional<PreferenceInput> request(const InteractionRequest& req) override
    {
        asked.push_back(req.episode);
        if (asked.size() == 1) {
            return std::nullopt;
        }
        PreferenceInput in;
        in.delta = Vector::Zero(req.x_best.size());
        in.preferred.assign(static_cast<std::size_t>(req.x_best.size()), true);
        return in;
    }
};

} // namespace

TEST(Run, SmokeOnSphere)
{
    const auto log = run(sphere_config(3, 3));
    EXPECT_FALSE(log.aborted);
    EXPECT_EQ(log.initial.size(), 2U);
    ASSERT_EQ(log.records.size(), 3U);
    EXPECT_EQ(log.best_curve(), running_max(log));
    for (int e = 0; e < 3; ++e) {
        EXPECT_EQ(log.records[static_cast<std::size_t>(e)].episode, e);
    }
}

TEST(Run, DatasetGrowsByOnePerEpisodeAndCurveMonotone)
{
    const auto log = run(sphere_config(2, 12));
    EXPECT_EQ(log.initial.size() + log.records.size(), 2U + 12U);
    const auto curve = log.best_curve();
    EXPECT_EQ(curve, running_max(log));
    for (std::size_t i = 1; i < curve.size(); ++i) {
        EXPECT_GE(curve[i], curve[i - 1]);
    }
    const Bounds b = param_bounds(log.config.env);
    for (const auto& o : log.initial) {
        EXPECT_TRUE(b.contains(o.theta));
        EXPECT_EQ(o.value, -o.theta.squaredNorm());
    }
    for (const auto& r : log.records) {
        EXPECT_TRUE(b.contains(r.theta));
        EXPECT_EQ(r.value, -r.theta.squaredNorm());
    }
}

TEST(Run, BaselineNeverTouchesProposal)
{
    const auto log = run(sphere_config(3, 8));
    const auto initial = init_proposal(param_bounds(log.config.env));
    for (const auto& r : log.records) {
        EXPECT_EQ(r.proposal, initial);
        EXPECT_FALSE(r.interacted);
        EXPECT_FALSE(r.input.has_value());
    }
}

TEST(Run, Deterministic)
{
    const auto a = run(interactive_sphere(3, 10, 4));
    const auto b = run(interactive_sphere(3, 10, 4));
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].theta, b.records[i].theta);
        EXPECT_EQ(a.records[i].value, b.records[i].value);
    }
}

TEST(Run, OracleUserJumpsToOptimumAtFirstInteraction)
{
    const auto log = run(interactive_sphere(4, 4, 1));
    ASSERT_FALSE(log.aborted);
    EXPECT_FALSE(log.records[0].interacted);
    ASSERT_TRUE(log.records[1].interacted);
    EXPECT_NEAR(log.records[1].value, 0.0, 1e-6);
    EXPECT_NEAR(log.records[1].best_so_far, 0.0, 1e-6);
}

TEST(Run, InteractiveEpisodeEvaluatesClippedEdit)
{
    RunConfig c = interactive_sphere(3, 21, 5);
    c.simulated_user.target = (Vector(3) << 0.9, -0.9, 0.3).finished();
    c.simulated_user.step_fraction = 0.5;
    c.simulated_user.max_dims_per_interaction = 2;
    const auto log = run(c);
    const Bounds b = param_bounds(c.env);
    int interactions = 0;
    std::vector<Observation> seen = log.initial;
    for (const auto& r : log.records) {
        if (r.interacted) {
            ++interactions;
            ASSERT_TRUE(r.input.has_value());
            EXPECT_EQ(r.theta, b.clip(r.x_best + r.input->delta));
            // x_best is the first argmax over everything observed so far
            std::size_t arg = 0;
            for (std::size_t i = 1; i < seen.size(); ++i) {
                if (seen[i].value > seen[arg].value) {
                    arg = i;
                }
            }
            EXPECT_EQ(r.x_best, seen[arg].theta);
            EXPECT_EQ(r.acquisition_score, 0.0);
        }
        seen.push_back({r.theta, r.value});
    }
    EXPECT_EQ(interactions, 4);
}

TEST(Run, InteractionNarrowsProposalOnPreferredDims)
{
    RunConfig c = interactive_sphere(2, 6, 2);
    c.simulated_user.prefer_rule = PreferRule::All;
    const auto log = run(c);
    const auto initial = init_proposal(param_bounds(c.env));
    EXPECT_EQ(log.records[1].proposal, initial);
    ASSERT_TRUE(log.records[2].interacted);
    for (int i = 0; i < 2; ++i) {
        EXPECT_LT(log.records[2].proposal.variances[i], initial.variances[i]);
    }
}

TEST(Run, TimeoutRequeuesToNextEpisode)
{
    RunConfig c = interactive_sphere(2, 8, 3);
    c.user_source = UserSource::Live;
    SilentThenAnswer user;
    const auto log = run(c, user);
    EXPECT_EQ(user.asked, (std::vector<int>{3, 4, 6}));
    EXPECT_TRUE(log.records[3].timed_out);
    EXPECT_FALSE(log.records[3].interacted);
    EXPECT_TRUE(log.records[4].interacted);
    EXPECT_FALSE(log.records[4].timed_out);
    EXPECT_TRUE(log.records[6].interacted);
    EXPECT_EQ(log.records.size(), 8U);
}

TEST(Run, WrongSizedAnswerRejected)
{
    class Bad final : public UserChannel {
    public:
        std::optional<PreferenceInput> request(const InteractionRequest&) override
        {
            return PreferenceInput{Vector::Zero(1), {true}};
        }
    } bad;
    RunConfig c = interactive_sphere(2, 4, 1);
    c.user_source = UserSource::Live;
    EXPECT_THROW(run(c, bad), ContractViolation);
}

TEST(Run, RequestCarriesContext)
{
    class Capture final : public UserChannel {
    public:
        std::vector<InteractionRequest> seen;
        std::optional<PreferenceInput> request(const InteractionRequest& req) override
        {
            seen.push_back(req);
            return PreferenceInput{Vector::Zero(req.x_best.size()), std::vector<bool>(static_cast<std::size_t>(req.x_best.size()), false)};
        }
    } cap;
    RunConfig c = interactive_sphere(2, 5, 2);
    c.user_source = UserSource::Live;
    const auto log = run(c, cap);
    ASSERT_EQ(cap.seen.size(), 2U);
    const auto& r = cap.seen[0];
    EXPECT_EQ(r.episode, 2);
    EXPECT_EQ(r.best_return, -r.x_best.squaredNorm());
    ASSERT_EQ(r.rollout_trace.size(), 1U);
    EXPECT_EQ(r.proposal, log.records[1].proposal);
    EXPECT_EQ(r.bounds.lower, param_bounds(c.env).lower);
}

TEST(BestSoFar, FirstIndexWinsTies)
{
    RunLog log;
    log.initial = {{Vector::Constant(1, 0.1), 1.0}, {Vector::Constant(1, 0.2), 3.0}};
    EpisodeRecord r;
    r.theta = Vector::Constant(1, 0.3);
    r.value = 3.0;
    log.records.push_back(r);
    const auto [theta, value] = best_so_far(log);
    EXPECT_EQ(value, 3.0);
    EXPECT_EQ(theta[0], 0.2);
    EXPECT_THROW(best_so_far(RunLog{}), ContractViolation);
}

TEST(BestSoFar, MatchesLinearScanOnRandomLogs)
{
    std::mt19937_64 rng(51);
    std::uniform_int_distribution<int> v(0, 5);
    for (int t = 0; t < 200; ++t) {
        RunLog log;
        std::vector<double> values;
        for (int i = 0; i < 3; ++i) {
            values.push_back(v(rng));
            log.initial.push_back({Vector::Constant(1, static_cast<double>(values.size())), values.back()});
        }
        for (int i = 0; i < 10; ++i) {
            values.push_back(v(rng));
            EpisodeRecord r;
            r.theta = Vector::Constant(1, static_cast<double>(values.size()));
            r.value = values.back();
            log.records.push_back(r);
        }
        std::size_t arg = 0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i] > values[arg]) {
                arg = i;
            }
        }
        const auto [theta, value] = best_so_far(log);
        EXPECT_EQ(value, values[arg]);
        EXPECT_EQ(theta[0], static_cast<double>(arg + 1));
    }
}

TEST(Replay, SimulatedRunReplaysBitForBit)
{
    const auto log = run(interactive_sphere(3, 10, 3));
    const auto round = [&] {
        std::istringstream in(runlog_to_jsonl(log));
        return runlog_from_jsonl(in);
    }();
    const auto v = replay(round);
    EXPECT_TRUE(v.identical) << v.message;
    EXPECT_FALSE(v.divergent_episode.has_value());
}

TEST(Replay, PerturbedLogNamesDivergentEpisode)
{
    auto log = run(sphere_config(2, 6));
    log.records[4].value = std::nextafter(log.records[4].value, 1.0);
    const auto v = replay(log);
    EXPECT_FALSE(v.identical);
    ASSERT_TRUE(v.divergent_episode.has_value());
    EXPECT_EQ(*v.divergent_episode, 4);
    EXPECT_NE(v.message.find("episode 4"), std::string::npos);
}

TEST(RunConfig, ModeConsistencyNamesField)
{
    RunConfig c = sphere_config(2, 5);
    c.metric = MetricConfig{};
    try {
        c.validate();
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "user_source");
    }
    c = interactive_sphere(2, 5, 1);
    c.simulated_user.target = Vector::Zero(3);
    try {
        c.validate();
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "simulated_user.target");
    }
    c = sphere_config(2, 5);
    c.init_observations = 5;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, ResolvesTargetBySearch)
{
    RunConfig c = interactive_sphere(2, 5, 1);
    c.simulated_user.target = Vector();
    c.target_search_evals = 50;
    const auto r = resolve_config(c);
    EXPECT_EQ(r.simulated_user.target.size(), 2);
    EXPECT_EQ(r.simulated_user.target, random_search(c.env, 50, 0).first);
}

TEST(Variants, MapOntoSimulatedUser)
{
    SimulatedUserConfig u;
    u.prefer_rule = PreferRule::None;
    const auto p = simulated_user_for_variant(u, Variant::Preference);
    EXPECT_TRUE(p.zero_delta);
    EXPECT_EQ(p.prefer_rule, PreferRule::WithinTolerance);
    const auto s = simulated_user_for_variant(u, Variant::Shaping);
    EXPECT_FALSE(s.zero_delta);
    EXPECT_EQ(s.prefer_rule, PreferRule::None);
    const auto m = simulated_user_for_variant(u, Variant::Mixture);
    EXPECT_FALSE(m.zero_delta);
    EXPECT_EQ(m.prefer_rule, PreferRule::WithinTolerance);
}
