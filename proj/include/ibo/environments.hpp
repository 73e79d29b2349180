#pragma once

// Deterministic evaluation targets for the optimizer.
//
// Trace layouts (state is recorded before the action is applied):
//   Cartpole   state [x, x_dot, angle, angle_dot]           action [push_right (0|1)]
//   Reacher    state [q1, q2, dq1, dq2, target_x, target_y]  action [acc1, acc2] in [-1,1]
//   PointReach state [x, y]                                 action [vx, vy] in [-1,1]
//   Branin     state []                                     action [theta1, theta2]
//   Sphere     state []                                     action theta

#include "ibo/interaction.hpp"
#include "ibo/policy.hpp"

#include <numbers>
#include <string_view>
#include <variant>

namespace ibo {

enum class EnvName { Cartpole, Reacher, PointReach, Branin, Sphere };

inline std::string_view to_string(EnvName n)
{
    switch (n) {
    case EnvName::Cartpole: return "Cartpole";
    case EnvName::Reacher: return "Reacher";
    case EnvName::PointReach: return "PointReach";
    case EnvName::Branin: return "Branin";
    case EnvName::Sphere: return "Sphere";
    }
    return "?";
}

inline EnvName env_name_from_string(std::string_view s)
{
    if (s == "Cartpole") return EnvName::Cartpole;
    if (s == "Reacher") return EnvName::Reacher;
    if (s == "PointReach") return EnvName::PointReach;
    if (s == "Branin") return EnvName::Branin;
    if (s == "Sphere") return EnvName::Sphere;
    throw ContractViolation("unknown environment '" + std::string(s) + "'");
}

struct EnvSpec {
    EnvName name = EnvName::Cartpole;
    int horizon = 500;
    std::uint64_t seed = 0;
    int state_dim = 4;
    int action_dim = 1;
    Bounds action_box;
    Bounds state_box;
    int num_centers = 15;   // RBF environments
    int sphere_dim = 5;     // Sphere only
    double width_factor = 2.0;  // RBF width / mean nearest-neighbour center distance

    [[nodiscard]] bool is_analytic() const { return name == EnvName::Branin || name == EnvName::Sphere; }

    void validate() const
    {
        require(horizon >= 1, "env.horizon must be >= 1");
        require(num_centers >= 1, "env.num_centers must be >= 1");
        require(sphere_dim >= 1, "env.sphere_dim must be >= 1");
        require(std::isfinite(width_factor) && width_factor > 0, "env.width_factor must be > 0");
        action_box.validate();
        if (!is_analytic()) {
            state_box.validate();
        }
    }
};

/// Defaults per environment: Cartpole 15 centers x 1 output, Reacher and
/// PointReach 8 centers x 2 outputs.
inline EnvSpec make_env_spec(EnvName name, std::uint64_t seed = 0)
{
    EnvSpec s;
    s.name = name;
    s.seed = seed;
    switch (name) {
    case EnvName::Cartpole: {
        const double angle_limit = 12.0 * 2.0 * std::numbers::pi / 360.0;
        s.horizon = 500;
        s.state_dim = 4;
        s.action_dim = 1;
        s.num_centers = 15;
        s.action_box = Bounds::uniform(1, -1.0, 1.0);
        s.state_box = Bounds((Vector(4) << -2.4, -3.0, -angle_limit, -3.5).finished(),
                             (Vector(4) << 2.4, 3.0, angle_limit, 3.5).finished());
        break;
    }
    case EnvName::Reacher:
        s.horizon = 50;
        s.state_dim = 4;
        s.action_dim = 2;
        s.num_centers = 8;
        s.action_box = Bounds::uniform(2, -1.0, 1.0);
        s.state_box = Bounds((Vector(4) << -1.0, -1.0, -10.0, -10.0).finished(),
                             (Vector(4) << 1.0, 1.0, 10.0, 10.0).finished());
        break;
    case EnvName::PointReach:
        s.horizon = 60;
        s.state_dim = 2;
        s.action_dim = 2;
        s.num_centers = 8;
        s.action_box = Bounds::uniform(2, -1.0, 1.0);
        s.state_box = Bounds::uniform(2, -0.25, 1.25);
        break;
    case EnvName::Branin:
        s.horizon = 1;
        s.state_dim = 1;
        s.action_dim = 2;
        s.action_box = Bounds((Vector(2) << -5.0, 0.0).finished(), (Vector(2) << 10.0, 15.0).finished());
        break;
    case EnvName::Sphere:
        s.horizon = 1;
        s.state_dim = 1;
        s.action_dim = s.sphere_dim;
        s.action_box = Bounds::uniform(static_cast<std::size_t>(s.sphere_dim), -1.0, 1.0);
        break;
    }
    return s;
}

inline EnvSpec make_sphere_spec(int dim, std::uint64_t seed = 0)
{
    EnvSpec s = make_env_spec(EnvName::Sphere, seed);
    s.sphere_dim = dim;
    s.action_dim = dim;
    s.action_box = Bounds::uniform(static_cast<std::size_t>(dim), -1.0, 1.0);
    return s;
}

/// Search box for theta.
inline Bounds param_bounds(const EnvSpec& spec)
{
    if (spec.is_analytic()) {
        return spec.action_box;
    }
    return Bounds::uniform(static_cast<std::size_t>(spec.num_centers * spec.action_dim), -1.0, 1.0);
}

inline GaussianBasisSpec basis_for(const EnvSpec& spec)
{
    require(!spec.is_analytic(), "basis_for: analytic benchmarks have no basis");
    return halton_basis(static_cast<std::size_t>(spec.num_centers), spec.state_dim, spec.action_dim, spec.width_factor);
}

/// Lowest return the environment can produce; blow-ups return one less.
inline double min_return(const EnvSpec& spec)
{
    switch (spec.name) {
    case EnvName::Cartpole: return 1.0;
    case EnvName::Reacher: return -static_cast<double>(spec.horizon) * (1.0 + 0.1 * spec.action_dim);
    case EnvName::PointReach: return -static_cast<double>(spec.horizon) - 100.0;
    case EnvName::Branin: return -310.0;
    case EnvName::Sphere: return -static_cast<double>(spec.sphere_dim);
    }
    return 0.0;
}

inline double failure_return(const EnvSpec& spec) { return min_return(spec) - 1.0; }

struct EpisodeResult {
    double total_return = 0.0;
    int steps = 0;
    std::vector<TraceStep> trace;
    bool terminated_early = false;
    bool reached = false;
};

inline double branin(double x1, double x2)
{
    constexpr double pi = std::numbers::pi;
    constexpr double a = 1.0;
    constexpr double b = 5.1 / (4.0 * pi * pi);
    constexpr double c = 5.0 / pi;
    constexpr double r = 6.0;
    constexpr double s = 10.0;
    constexpr double t = 1.0 / (8.0 * pi);
    const double q = x2 - b * x1 * x1 + c * x1 - r;
    return a * q * q + s * (1.0 - t) * std::cos(x1) + s;
}

namespace detail {

struct StepOutcome {
    double reward = 0.0;
    bool done = false;
    bool reached = false;
};

/// OpenAI-gym cartpole dynamics, explicit Euler.
class CartpoleSim {
public:
    static constexpr double gravity = 9.8;
    static constexpr double mass_cart = 1.0;
    static constexpr double mass_pole = 0.1;
    static constexpr double total_mass = mass_cart + mass_pole;
    static constexpr double half_length = 0.5;
    static constexpr double pole_mass_length = mass_pole * half_length;
    static constexpr double force_mag = 10.0;
    static constexpr double dt = 0.02;
    static constexpr double x_limit = 2.4;
    static constexpr double angle_limit = 12.0 * 2.0 * std::numbers::pi / 360.0;

    explicit CartpoleSim(std::mt19937_64& rng)
    {
        std::uniform_real_distribution<double> u(-0.05, 0.05);
        for (auto& v : s_) {
            v = u(rng);
        }
    }

    [[nodiscard]] std::vector<double> state() const { return {s_.begin(), s_.end()}; }
    [[nodiscard]] Vector observation() const { return Eigen::Map<const Vector>(s_.data(), 4); }

    StepOutcome step(const Vector& action, std::vector<double>& applied)
    {
        const int push_right = action[0] >= 0.0 ? 1 : 0;
        applied = {static_cast<double>(push_right)};
        const double force = push_right ? force_mag : -force_mag;
        const double cos_t = std::cos(s_[2]);
        const double sin_t = std::sin(s_[2]);
        const double temp = (force + pole_mass_length * s_[3] * s_[3] * sin_t) / total_mass;
        const double angle_acc = (gravity * sin_t - cos_t * temp) /
                                 (half_length * (4.0 / 3.0 - mass_pole * cos_t * cos_t / total_mass));
        const double x_acc = temp - pole_mass_length * angle_acc * cos_t / total_mass;
        s_[0] += dt * s_[1];
        s_[1] += dt * x_acc;
        s_[2] += dt * s_[3];
        s_[3] += dt * angle_acc;
        const bool fell = s_[0] < -x_limit || s_[0] > x_limit || s_[2] < -angle_limit || s_[2] > angle_limit;
        return {1.0, fell, false};
    }

private:
    std::array<double, 4> s_{};
};

/// Planar two-link arm (links 0.5 + 0.5, reach 1) driven by joint accelerations.
class ReacherSim {
public:
    static constexpr double link1 = 0.5;
    static constexpr double link2 = 0.5;
    static constexpr double dt = 0.02;
    static constexpr double damping = 0.05;
    static constexpr double accel_scale = 20.0;
    static constexpr double target_radius = 0.02;
    static constexpr double action_cost = 0.1;

    explicit ReacherSim(std::mt19937_64& rng)
    {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        q_[0] = std::numbers::pi * (2.0 * u(rng) - 1.0);
        q_[1] = 0.5 * std::numbers::pi * (2.0 * u(rng) - 1.0);
        for (;;) {
            const double r = 0.2 + 0.7 * u(rng);
            const double a = 2.0 * std::numbers::pi * u(rng);
            target_ = {r * std::cos(a), r * std::sin(a)};
            const auto tip = fingertip();
            if (std::hypot(tip[0] - target_[0], tip[1] - target_[1]) >= 0.2) {
                break;
            }
        }
    }

    [[nodiscard]] std::array<double, 2> fingertip() const
    {
        return {link1 * std::cos(q_[0]) + link2 * std::cos(q_[0] + q_[1]),
                link1 * std::sin(q_[0]) + link2 * std::sin(q_[0] + q_[1])};
    }

    [[nodiscard]] std::vector<double> state() const { return {q_[0], q_[1], dq_[0], dq_[1], target_[0], target_[1]}; }

    /// Policy input: fingertip-to-target offset and joint velocities.
    [[nodiscard]] Vector observation() const
    {
        const auto tip = fingertip();
        return (Vector(4) << target_[0] - tip[0], target_[1] - tip[1], dq_[0], dq_[1]).finished();
    }

    StepOutcome step(const Vector& action, std::vector<double>& applied)
    {
        applied = {action[0], action[1]};
        for (int j = 0; j < 2; ++j) {
            dq_[j] += dt * (accel_scale * action[j] - damping * dq_[j]);
            q_[j] += dt * dq_[j];
        }
        // |a| is the L1 norm of the commanded acceleration vector
        double reward = -1.0 - action_cost * (std::abs(action[0]) + std::abs(action[1]));
        const auto tip = fingertip();
        const bool reached = std::hypot(tip[0] - target_[0], tip[1] - target_[1]) <= target_radius;
        if (reached) {
            reward += 10.0;
        }
        return {reward, reached, reached};
    }

private:
    std::array<double, 2> q_{};
    std::array<double, 2> dq_{};
    std::array<double, 2> target_{};
};

/// Kinematic point in the plane, velocity-commanded, with a square no-go zone
/// between start and goal.
class PointReachSim {
public:
    static constexpr double dt = 0.05;
    static constexpr double max_speed = 1.0;
    static constexpr double goal_x = 1.0;
    static constexpr double goal_y = 1.0;
    static constexpr double goal_radius = 0.05;
    static constexpr double zone_lo = 0.4;
    static constexpr double zone_hi = 0.6;
    static constexpr double zone_penalty = 100.0;
    static constexpr double wall_lo = -0.25;
    static constexpr double wall_hi = 1.25;

    [[nodiscard]] std::vector<double> state() const { return {p_[0], p_[1]}; }
    [[nodiscard]] Vector observation() const { return (Vector(2) << p_[0], p_[1]).finished(); }

    /// Liang-Barsky test of the segment a->b against the closed zone square.
    static bool segment_hits_zone(const std::array<double, 2>& a, const std::array<double, 2>& b)
    {
        double t0 = 0.0;
        double t1 = 1.0;
        for (int i = 0; i < 2; ++i) {
            const double d = b[i] - a[i];
            if (d == 0.0) {
                if (a[i] < zone_lo || a[i] > zone_hi) {
                    return false;
                }
                continue;
            }
            double ta = (zone_lo - a[i]) / d;
            double tb = (zone_hi - a[i]) / d;
            if (ta > tb) {
                std::swap(ta, tb);
            }
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
            if (t0 > t1) {
                return false;
            }
        }
        return true;
    }

    StepOutcome step(const Vector& action, std::vector<double>& applied)
    {
        applied = {action[0], action[1]};
        const std::array<double, 2> prev = p_;
        for (int i = 0; i < 2; ++i) {
            p_[i] = std::clamp(p_[i] + dt * max_speed * action[i], wall_lo, wall_hi);
        }
        if (segment_hits_zone(prev, p_)) {
            return {-1.0 - zone_penalty, true, false};
        }
        if (std::hypot(p_[0] - goal_x, p_[1] - goal_y) <= goal_radius) {
            return {-1.0 + 10.0, true, true};
        }
        return {-1.0, false, false};
    }

private:
    std::array<double, 2> p_{0.0, 0.0};
};

} // namespace detail

/// Runs one episode with an arbitrary controller mapping the environment's
/// raw observation to an action. Deterministic given (spec.seed, controller).
template <class Controller>
EpisodeResult rollout_with(const EnvSpec& spec, Controller&& controller)
{
    require(!spec.is_analytic(), "rollout_with: analytic benchmarks have no dynamics");
    auto rng = seeded_stream(spec.seed, {0x656eULL, static_cast<std::uint64_t>(spec.name)});

    auto run = [&](auto sim) {
        EpisodeResult res;
        res.trace.reserve(static_cast<std::size_t>(spec.horizon));
        for (int t = 0; t < spec.horizon; ++t) {
            TraceStep step;
            step.state = sim.state();
            const Vector action = controller(sim.observation());
            const auto out = sim.step(action, step.action);
            const std::vector<double> next = sim.state();
            bool finite = std::isfinite(out.reward);
            for (double v : next) {
                finite = finite && std::isfinite(v);
            }
            if (!finite) {
                step.reward = failure_return(spec) - res.total_return;
                res.total_return += step.reward;
                res.trace.push_back(std::move(step));
                res.steps = static_cast<int>(res.trace.size());
                res.terminated_early = true;
                return res;
            }
            step.reward = out.reward;
            res.total_return += out.reward;
            res.trace.push_back(std::move(step));
            if (out.done) {
                res.reached = out.reached;
                res.terminated_early = t + 1 < spec.horizon || !out.reached;
                break;
            }
        }
        res.steps = static_cast<int>(res.trace.size());
        return res;
    };

    switch (spec.name) {
    case EnvName::Cartpole: return run(detail::CartpoleSim(rng));
    case EnvName::Reacher: return run(detail::ReacherSim(rng));
    case EnvName::PointReach: return run(detail::PointReachSim());
    default: break;
    }
    throw ContractViolation("rollout_with: unsupported environment");
}

/// Evaluates a policy; analytic benchmarks take theta as the query point.
inline EpisodeResult rollout(const EnvSpec& spec, const Policy& policy)
{
    require(!spec.is_analytic(), "rollout: analytic benchmarks take theta directly");
    require(policy.spec.state_dim == spec.state_dim && policy.spec.action_dim == spec.action_dim,
            "rollout: policy does not match environment");
    const Bounds& sbox = spec.state_box;
    const std::optional<Bounds> abox = spec.action_box;
    return rollout_with(spec, [&](const Vector& obs) { return act(policy, sbox.to_unit(obs), abox); });
}

inline EpisodeResult evaluate_episode(const EnvSpec& spec, const Vector& theta)
{
    const Bounds pb = param_bounds(spec);
    require(static_cast<std::size_t>(theta.size()) == pb.dim(), "evaluate: theta dimension mismatch");
    require(pb.contains(theta), "evaluate: theta outside bounds");
    if (spec.is_analytic()) {
        EpisodeResult res;
        const double value = spec.name == EnvName::Branin ? -branin(theta[0], theta[1]) : -theta.squaredNorm();
        res.total_return = value;
        res.steps = 1;
        res.trace.push_back({{}, to_std(theta), value});
        return res;
    }
    return rollout(spec, Policy(basis_for(spec), theta));
}

inline double evaluate_return(const EnvSpec& spec, const Vector& theta)
{
    return evaluate_episode(spec, theta).total_return;
}

} // namespace ibo
