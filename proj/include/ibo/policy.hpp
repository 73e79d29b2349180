#pragma once

// Representation model: theta -> deterministic policy through Gaussian (RBF)
// features of the normalized state.

#include "ibo/core.hpp"

#include <array>
#include <limits>
#include <optional>

namespace ibo {

struct GaussianBasisSpec {
    std::vector<Vector> centers;
    Vector widths;
    int action_dim = 1;
    int state_dim = 1;

    [[nodiscard]] std::size_t num_centers() const { return centers.size(); }
    [[nodiscard]] std::size_t param_dim() const { return centers.size() * static_cast<std::size_t>(action_dim); }

    void validate() const
    {
        require(!centers.empty(), "basis: no centers");
        require(action_dim >= 1 && state_dim >= 1, "basis: dims must be >= 1");
        require(widths.size() == static_cast<Eigen::Index>(centers.size()), "basis: one width per center");
        for (const auto& c : centers) {
            require(c.size() == state_dim, "basis: center dimension mismatch");
        }
        for (Eigen::Index j = 0; j < widths.size(); ++j) {
            require(std::isfinite(widths[j]) && widths[j] > 0, "basis: widths must be > 0");
        }
    }
};

/// Radical-inverse Halton point `index` (1-based is customary to skip the origin).
inline double radical_inverse(std::size_t index, std::size_t base)
{
    double f = 1.0;
    double r = 0.0;
    while (index > 0) {
        f /= static_cast<double>(base);
        r += f * static_cast<double>(index % base);
        index /= base;
    }
    return r;
}

/// k centers on the Halton sequence in [0,1]^state_dim with a shared width of
/// `width_factor` x the mean nearest-neighbour distance between centers.
inline GaussianBasisSpec halton_basis(std::size_t k, int state_dim, int action_dim, double width_factor = 0.5)
{
    require(std::isfinite(width_factor) && width_factor > 0, "halton_basis: width_factor must be > 0");
    static constexpr std::array<std::size_t, 10> primes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
    require(state_dim >= 1 && static_cast<std::size_t>(state_dim) <= primes.size(), "halton_basis: unsupported state_dim");
    require(k >= 1, "halton_basis: need at least one center");

    GaussianBasisSpec spec;
    spec.state_dim = state_dim;
    spec.action_dim = action_dim;
    for (std::size_t j = 0; j < k; ++j) {
        Vector c(state_dim);
        for (int i = 0; i < state_dim; ++i) {
            c[i] = radical_inverse(j + 1, primes[static_cast<std::size_t>(i)]);
        }
        spec.centers.push_back(std::move(c));
    }

    double width = 0.5;
    if (k > 1) {
        double sum = 0.0;
        for (std::size_t a = 0; a < k; ++a) {
            double nn = std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < k; ++b) {
                if (a != b) {
                    nn = std::min(nn, (spec.centers[a] - spec.centers[b]).norm());
                }
            }
            sum += nn;
        }
        width = width_factor * sum / static_cast<double>(k);
    }
    spec.widths = Vector::Constant(static_cast<Eigen::Index>(k), width);
    return spec;
}

/// phi_j(s) = exp(-|s - c_j|^2 / (2 w_j^2)).
inline Vector features(const GaussianBasisSpec& spec, const Vector& s)
{
    require(s.size() == spec.state_dim, "features: state dimension mismatch");
    const auto k = static_cast<Eigen::Index>(spec.centers.size());
    Vector phi(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double w = spec.widths[j];
        phi[j] = std::exp(-(s - spec.centers[static_cast<std::size_t>(j)]).squaredNorm() / (2.0 * w * w));
    }
    return phi;
}

struct Policy {
    GaussianBasisSpec spec;
    Vector theta;

    Policy(GaussianBasisSpec s, Vector t) : spec(std::move(s)), theta(std::move(t))
    {
        require(static_cast<std::size_t>(theta.size()) == spec.param_dim(), "policy: theta has wrong length");
        require(theta.allFinite(), "policy: non-finite theta");
    }

    /// Unclamped linear output: a_m = sum_j theta[m*k + j] * phi_j(s).
    [[nodiscard]] Vector linear_output(const Vector& s) const
    {
        const Vector phi = features(spec, s);
        const auto k = phi.size();
        Vector a(spec.action_dim);
        for (int m = 0; m < spec.action_dim; ++m) {
            a[m] = theta.segment(m * k, k).dot(phi);
        }
        return a;
    }
};

/// Continuous action, clamped to the action box when one is given.
inline Vector act(const Policy& policy, const Vector& s, const std::optional<Bounds>& action_box = std::nullopt)
{
    Vector a = policy.linear_output(s);
    if (action_box) {
        a = action_box->clip(a);
    }
    return a;
}

/// Two-action discrete mapping of a scalar policy: 1 ("right") iff output >= 0.
inline int act_discrete(const Policy& policy, const Vector& s)
{
    return policy.linear_output(s)[0] >= 0.0 ? 1 : 0;
}

} // namespace ibo
