#include "ibo/environments.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace ibo;

namespace {

Vector random_theta(const Bounds& b, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector t(static_cast<Eigen::Index>(b.dim()));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        t[i] = b.lower[i] + u(rng) * (b.upper[i] - b.lower[i]);
    }
    return t;
}

double trace_sum(const EpisodeResult& r)
{
    double s = 0.0;
    for (const auto& step : r.trace) {
        s += step.reward;
    }
    return s;
}

/// Saturated proportional controller through a list of waypoints.
struct WaypointController {
    std::vector<std::array<double, 2>> points;
    std::size_t next = 0;

    Vector operator()(const Vector& p)
    {
        if (next + 1 < points.size() && std::abs(p[0] - points[next][0]) < 1e-6 && std::abs(p[1] - points[next][1]) < 1e-6) {
            ++next;
        }
        Vector a(2);
        for (int i = 0; i < 2; ++i) {
            a[i] = std::clamp((points[next][i] - p[i]) / 0.05, -1.0, 1.0);
        }
        return a;
    }
};

} // namespace

TEST(Cartpole, ReturnIsSurvivalStepsWithinHorizon)
{
    std::mt19937_64 rng(41);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto env = make_env_spec(EnvName::Cartpole, seed);
        for (int t = 0; t < 40; ++t) {
            const auto r = evaluate_episode(env, random_theta(param_bounds(env), rng));
            EXPECT_GE(r.total_return, 1.0);
            EXPECT_LE(r.total_return, 500.0);
            EXPECT_EQ(r.total_return, static_cast<double>(r.steps));
            EXPECT_EQ(r.steps, static_cast<int>(r.trace.size()));
            EXPECT_EQ(r.terminated_early, r.steps < 500);
        }
    }
}

TEST(Cartpole, BalancingControllerSurvivesHorizon)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto env = make_env_spec(EnvName::Cartpole, seed);
        const auto r = rollout_with(env, [](const Vector& s) {
            const double u = 0.1 * s[0] + 0.5 * s[1] + 10.0 * s[2] + 2.0 * s[3];
            return Vector::Constant(1, u);
        });
        EXPECT_EQ(r.total_return, 500.0) << "seed " << seed;
        EXPECT_FALSE(r.terminated_early);
    }
}

TEST(Cartpole, InitialStateWithinNoiseBand)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto r = evaluate_episode(make_env_spec(EnvName::Cartpole, seed), Vector::Zero(15));
        for (double v : r.trace.front().state) {
            EXPECT_LE(std::abs(v), 0.05);
        }
        EXPECT_EQ(r.trace.front().action, (std::vector<double>{1.0}));
    }
}

TEST(Reacher, IdlePolicyPaysOnePerStep)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto r = evaluate_episode(make_env_spec(EnvName::Reacher, seed), Vector::Zero(16));
        EXPECT_EQ(r.total_return, -50.0);
        EXPECT_EQ(r.steps, 50);
        EXPECT_FALSE(r.reached);
    }
}

TEST(Reacher, ReturnDecomposition)
{
    std::mt19937_64 rng(42);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto env = make_env_spec(EnvName::Reacher, seed);
        for (int t = 0; t < 30; ++t) {
            const auto r = evaluate_episode(env, random_theta(param_bounds(env), rng));
            double l1 = 0.0;
            for (const auto& step : r.trace) {
                ASSERT_EQ(step.action.size(), 2U);
                l1 += std::abs(step.action[0]) + std::abs(step.action[1]);
                EXPECT_LE(std::abs(step.action[0]), 1.0);
                EXPECT_LE(std::abs(step.action[1]), 1.0);
            }
            const double expected = 10.0 * (r.reached ? 1.0 : 0.0) - r.steps - 0.1 * l1;
            EXPECT_NEAR(r.total_return, expected, 1e-9);
        }
    }
}

TEST(Reacher, TargetIsReachable)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto r = evaluate_episode(make_env_spec(EnvName::Reacher, seed), Vector::Zero(16));
        const auto& s = r.trace.front().state;
        ASSERT_EQ(s.size(), 6U);
        const double dist = std::hypot(s[4], s[5]);
        EXPECT_GE(dist, 0.2);
        EXPECT_LE(dist, 0.9);
    }
}

TEST(PointReach, DetourAroundZoneMatchesGeometry)
{
    // (0,0) -> (0.38,0.62) -> (1,1) at 0.05 per axis per step:
    // leg one 7 diagonal + 1 partial + 5 vertical steps, leg two 8 + 4.
    const auto env = make_env_spec(EnvName::PointReach);
    WaypointController ctl{{{0.38, 0.62}, {1.0, 1.0}}};
    const auto r = rollout_with(env, std::ref(ctl));
    EXPECT_TRUE(r.reached);
    EXPECT_EQ(r.steps, 25);
    EXPECT_EQ(r.total_return, 10.0 - 25.0);
    // no detour can beat the L-infinity length 0.6 + 0.55 at 0.05 per step
    EXPECT_GE(r.steps, 23);
}

TEST(PointReach, StraightLineHitsZone)
{
    const auto env = make_env_spec(EnvName::PointReach);
    const auto r = rollout_with(env, [](const Vector&) { return Vector::Constant(2, 1.0); });
    EXPECT_TRUE(r.terminated_early);
    EXPECT_FALSE(r.reached);
    EXPECT_TRUE(r.steps == 8 || r.steps == 9);
    EXPECT_EQ(r.total_return, -static_cast<double>(r.steps) - 100.0);
}

TEST(PointReach, ZoneEntryAlwaysPenalized)
{
    std::mt19937_64 rng(43);
    const auto env = make_env_spec(EnvName::PointReach);
    for (int t = 0; t < 300; ++t) {
        const auto r = evaluate_episode(env, random_theta(param_bounds(env), rng));
        bool inside = false;
        for (const auto& step : r.trace) {
            inside = inside || (step.state[0] >= 0.4 && step.state[0] <= 0.6 && step.state[1] >= 0.4 && step.state[1] <= 0.6);
        }
        EXPECT_FALSE(inside) << "trace continued inside the zone";
        if (r.total_return < -60.0) {
            EXPECT_TRUE(r.terminated_early);
            EXPECT_EQ(r.total_return, -static_cast<double>(r.steps) - 100.0);
        }
    }
}

TEST(Analytic, BraninMinimizers)
{
    const auto env = make_env_spec(EnvName::Branin);
    const std::vector<std::array<double, 2>> minima{{-std::numbers::pi, 12.275}, {std::numbers::pi, 2.275}, {9.42478, 2.475}};
    for (const auto& m : minima) {
        EXPECT_NEAR(evaluate_return(env, (Vector(2) << m[0], m[1]).finished()), -0.397887, 1e-5);
    }
    EXPECT_NEAR(evaluate_return(env, (Vector(2) << 0.0, 0.0).finished()), -55.60211, 1e-4);
}

TEST(Analytic, SphereOptimumAndTrace)
{
    const auto env = make_sphere_spec(3);
    EXPECT_EQ(evaluate_return(env, Vector::Zero(3)), 0.0);
    const Vector x = (Vector(3) << 0.5, -0.5, 1.0).finished();
    const auto r = evaluate_episode(env, x);
    EXPECT_EQ(r.total_return, -1.5);
    ASSERT_EQ(r.trace.size(), 1U);
    EXPECT_TRUE(r.trace[0].state.empty());
    EXPECT_EQ(r.trace[0].action, (std::vector<double>{0.5, -0.5, 1.0}));
    EXPECT_THROW(evaluate_return(env, Vector::Constant(3, 1.5)), ContractViolation);
}

TEST(AllEnvironments, DeterministicAndConsistent)
{
    std::mt19937_64 rng(44);
    for (auto name : {EnvName::Cartpole, EnvName::Reacher, EnvName::PointReach, EnvName::Branin, EnvName::Sphere}) {
        const auto env = make_env_spec(name, 3);
        for (int t = 0; t < 10; ++t) {
            const Vector theta = random_theta(param_bounds(env), rng);
            const auto a = evaluate_episode(env, theta);
            const auto b = evaluate_episode(env, theta);
            EXPECT_EQ(a.total_return, b.total_return);
            ASSERT_EQ(a.trace.size(), b.trace.size());
            for (std::size_t k = 0; k < a.trace.size(); ++k) {
                EXPECT_EQ(a.trace[k].state, b.trace[k].state);
                EXPECT_EQ(a.trace[k].action, b.trace[k].action);
                EXPECT_EQ(a.trace[k].reward, b.trace[k].reward);
            }
            EXPECT_NEAR(a.total_return, trace_sum(a), 1e-9);
            EXPECT_LE(a.steps, env.horizon);
            EXPECT_TRUE(std::isfinite(a.total_return));
            EXPECT_GE(a.total_return, failure_return(env));
            for (const auto& step : a.trace) {
                for (double v : step.state) {
                    EXPECT_TRUE(std::isfinite(v));
                }
            }
        }
    }
}

TEST(EnvSpec, NamesRoundTripAndValidation)
{
    for (auto name : {EnvName::Cartpole, EnvName::Reacher, EnvName::PointReach, EnvName::Branin, EnvName::Sphere}) {
        EXPECT_EQ(env_name_from_string(to_string(name)), name);
        make_env_spec(name).validate();
    }
    EXPECT_THROW(env_name_from_string("Pendulum"), ContractViolation);
    auto s = make_env_spec(EnvName::Cartpole);
    s.horizon = 0;
    EXPECT_THROW(s.validate(), ContractViolation);
    EXPECT_EQ(param_bounds(make_env_spec(EnvName::Cartpole)).dim(), 15U);
    EXPECT_EQ(param_bounds(make_env_spec(EnvName::Reacher)).dim(), 16U);
}
