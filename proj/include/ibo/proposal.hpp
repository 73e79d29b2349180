#pragma once

// Preference-shaped proposal distribution.
//
// Candidates for the acquisition step are drawn from a diagonal Gaussian
// truncated to the search box. User input arrives as a Gaussian likelihood
// centred on x_best + delta whose per-dimension width depends on whether the
// user marked the dimension as preferred; the proposal is replaced by the
// product of the two Gaussians, which is again a diagonal Gaussian.

#include "ibo/core.hpp"

#include <optional>

namespace ibo {

struct ProposalDistribution {
    Vector mean;
    Vector variances;

    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }

    void validate() const
    {
        require(mean.size() == variances.size() && mean.size() > 0, "proposal: mean/variance dimension mismatch");
        for (Eigen::Index i = 0; i < variances.size(); ++i) {
            require(std::isfinite(mean[i]), "proposal: non-finite mean");
            require(std::isfinite(variances[i]) && variances[i] > 0, "proposal: variances must be finite and > 0");
        }
    }

    friend bool operator==(const ProposalDistribution& a, const ProposalDistribution& b)
    {
        return a.mean == b.mean && a.variances == b.variances;
    }
};

/// What the user sends back: offsets from x_best and per-dimension flags
/// (true = keep this value, false = keep exploring).
struct PreferenceInput {
    Vector delta;
    std::vector<bool> preferred;

    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(delta.size()); }
};

struct PreferenceLikelihood {
    Vector mean;
    Vector variances;
    bool clipped = false;
};

/// Widths of the preference likelihood, as multiples of each dimension's range.
struct PreferenceScales {
    double sigma0_scale = 10.0;
    double sigma_pref_scale = 0.05;
};

/// Centered on the box with std = sigma0_scale * range, so the truncation is close to uniform.
inline ProposalDistribution init_proposal(const Bounds& bounds, double sigma0_scale = 10.0)
{
    bounds.validate();
    require(std::isfinite(sigma0_scale) && sigma0_scale > 0, "init_proposal: sigma0_scale must be > 0");
    const Vector sd = sigma0_scale * bounds.range();
    return {bounds.center(), sd.cwiseProduct(sd)};
}

/// Draws exactly n vectors from the box-truncated proposal.
///
/// Stream contract: one mt19937_64 seeded from `seed`; vectors are produced in
/// order, and within a vector each component is drawn from N(mean_i, var_i)
/// repeatedly until it lands in [lower_i, upper_i]. With a diagonal covariance
/// this is distributionally identical to whole-vector rejection.
///
/// Throws DegenerateProposalError when, after 1e7 raw draws, the acceptance
/// rate is below 1e-6.
inline std::vector<Vector> rejection_sample(const ProposalDistribution& dist, const Bounds& bounds, std::size_t n,
                                            std::uint64_t seed)
{
    dist.validate();
    require(dist.dim() == bounds.dim(), "rejection_sample: dimension mismatch");
    require(n >= 1, "rejection_sample: n must be >= 1");

    constexpr double draw_budget = 1e7;
    constexpr double min_rate = 1e-6;

    auto rng = seeded_stream(seed, {0x7273ULL});
    std::normal_distribution<double> normal(0.0, 1.0);
    const Vector sd = dist.variances.cwiseSqrt();
    const auto d = static_cast<Eigen::Index>(dist.dim());

    double draws = 0.0;
    double accepted = 0.0;
    std::vector<Vector> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        Vector x(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            for (;;) {
                const double v = dist.mean[i] + sd[i] * normal(rng);
                draws += 1.0;
                if (v >= bounds.lower[i] && v <= bounds.upper[i]) {
                    x[i] = v;
                    accepted += 1.0;
                    break;
                }
                if (draws >= draw_budget && accepted / draws < min_rate) {
                    throw DegenerateProposalError("rejection sampling acceptance rate below 1e-6 in dimension " +
                                                  std::to_string(i));
                }
            }
        }
        out.push_back(std::move(x));
    }
    return out;
}

/// Gaussian likelihood of the user's input: mean x_best + delta (clipped to
/// the box), variance sigma0^2 on unflagged dimensions and sigma_pref^2 on
/// preferred ones. sigma0 / sigma_pref are per-dimension standard deviations.
inline PreferenceLikelihood preference_likelihood(const Vector& x_best, const PreferenceInput& input,
                                                  const Vector& sigma0, const Vector& sigma_pref,
                                                  const std::optional<Bounds>& bounds = std::nullopt)
{
    const auto d = x_best.size();
    require(input.delta.size() == d && static_cast<Eigen::Index>(input.preferred.size()) == d,
            "preference_likelihood: input dimension mismatch");
    require(sigma0.size() == d && sigma_pref.size() == d, "preference_likelihood: width dimension mismatch");
    for (Eigen::Index i = 0; i < d; ++i) {
        require(sigma_pref[i] > 0 && sigma_pref[i] < sigma0[i], "preference_likelihood: need 0 < sigma_pref < sigma0");
    }

    PreferenceLikelihood like;
    like.mean = x_best + input.delta;
    if (bounds) {
        const Vector c = bounds->clip(like.mean);
        like.clipped = (c != like.mean);
        like.mean = c;
    }
    like.variances.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double s = input.preferred[static_cast<std::size_t>(i)] ? sigma_pref[i] : sigma0[i];
        like.variances[i] = s * s;
    }
    return like;
}

inline PreferenceLikelihood preference_likelihood(const Vector& x_best, const PreferenceInput& input, double sigma0,
                                                  double sigma_pref,
                                                  const std::optional<Bounds>& bounds = std::nullopt)
{
    const auto d = x_best.size();
    return preference_likelihood(x_best, input, Vector::Constant(d, sigma0), Vector::Constant(d, sigma_pref), bounds);
}

/// Widths scaled by each dimension's range.
inline PreferenceLikelihood preference_likelihood(const Vector& x_best, const PreferenceInput& input,
                                                  const Bounds& bounds, const PreferenceScales& scales)
{
    return preference_likelihood(x_best, input, scales.sigma0_scale * bounds.range(),
                                 scales.sigma_pref_scale * bounds.range(), bounds);
}

/// Product of the proposal and the likelihood, per dimension:
/// var = (1/var_prop + 1/var_pref)^-1, mean = var * (mean_prop/var_prop + mean_pref/var_pref).
inline ProposalDistribution update_proposal(const ProposalDistribution& prop, const PreferenceLikelihood& like)
{
    require(prop.mean.size() == like.mean.size() && like.mean.size() == like.variances.size(),
            "update_proposal: dimension mismatch");
    const Vector prec_prop = prop.variances.cwiseInverse();
    const Vector prec_pref = like.variances.cwiseInverse();
    ProposalDistribution post;
    post.variances = (prec_prop + prec_pref).cwiseInverse();
    post.mean = post.variances.cwiseProduct(prec_prop.cwiseProduct(prop.mean) + prec_pref.cwiseProduct(like.mean));
    return post;
}

/// Opt-in escape hatch: restore one dimension to its initial width. The
/// Gaussian product on its own can only narrow.
inline ProposalDistribution reset_dimension(const ProposalDistribution& prop, const ProposalDistribution& initial,
                                            std::size_t dim)
{
    require(dim < prop.dim() && initial.dim() == prop.dim(), "reset_dimension: bad dimension");
    ProposalDistribution out = prop;
    const auto i = static_cast<Eigen::Index>(dim);
    out.mean[i] = initial.mean[i];
    out.variances[i] = initial.variances[i];
    return out;
}

} // namespace ibo
