#pragma once

#include "ibo/gp.hpp"

#include <numbers>
#include <string_view>
#include <utility>

namespace ibo {

inline double normal_pdf(double z)
{
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Standard normal CDF through erfc, accurate in both tails.
inline double normal_cdf(double z)
{
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

enum class AcquisitionKind { EI, PI, UCB, PEI };

inline std::string_view to_string(AcquisitionKind k)
{
    switch (k) {
    case AcquisitionKind::EI: return "EI";
    case AcquisitionKind::PI: return "PI";
    case AcquisitionKind::UCB: return "UCB";
    case AcquisitionKind::PEI: return "PEI";
    }
    return "?";
}

inline AcquisitionKind acquisition_kind_from_string(std::string_view s)
{
    if (s == "EI") return AcquisitionKind::EI;
    if (s == "PI") return AcquisitionKind::PI;
    if (s == "UCB") return AcquisitionKind::UCB;
    if (s == "PEI") return AcquisitionKind::PEI;
    throw ContractViolation("unknown acquisition kind '" + std::string(s) + "'");
}

struct AcquisitionConfig {
    AcquisitionKind kind = AcquisitionKind::PEI;
    double kappa = 0.01;  // standardized-output units
    double lambda = 2.0;
    int n_candidates = 1000;

    void validate() const
    {
        require(std::isfinite(kappa) && kappa >= 0, "acquisition.kappa must be finite and >= 0");
        require(std::isfinite(lambda) && lambda >= 0, "acquisition.lambda must be finite and >= 0");
        require(n_candidates >= 1, "acquisition.n_candidates must be >= 1");
    }
};

/// E[max(y - best - kappa, 0)] for y ~ N(mu, sigma^2).
inline double expected_improvement(double mu, double sigma, double best, double kappa)
{
    const double v = mu - best - kappa;
    if (sigma <= 0.0) {
        return std::max(v, 0.0);
    }
    const double z = v / sigma;
    return std::max(v * normal_cdf(z) + sigma * normal_pdf(z), 0.0);
}

inline double probability_of_improvement(double mu, double sigma, double best, double kappa)
{
    const double v = mu - best - kappa;
    if (sigma <= 0.0) {
        return v > 0.0 ? 1.0 : 0.0;
    }
    return normal_cdf(v / sigma);
}

inline double upper_confidence_bound(double mu, double sigma, double lambda)
{
    return mu + lambda * sigma;
}

/// Scores one (mean, standard deviation) pair under the configured criterion.
/// PEI is EI: its difference lies in where the candidates come from.
inline double acquisition_score(const AcquisitionConfig& cfg, double mu, double sigma, double best)
{
    switch (cfg.kind) {
    case AcquisitionKind::EI:
    case AcquisitionKind::PEI:
        return expected_improvement(mu, sigma, best, cfg.kappa);
    case AcquisitionKind::PI:
        return probability_of_improvement(mu, sigma, best, cfg.kappa);
    case AcquisitionKind::UCB:
        return upper_confidence_bound(mu, sigma, cfg.lambda);
    }
    return 0.0;
}

struct Selection {
    Vector candidate;
    double score = 0.0;
    std::size_t index = 0;
};

/// Batch-predicts all candidates in standardized units and returns the
/// first-index argmax. The incumbent is the best observed output.
inline Selection select_next(const std::vector<Vector>& candidates, const GpModel& model, double best_observed,
                             const AcquisitionConfig& cfg)
{
    require(!candidates.empty(), "select_next: no candidates");
    const GpPosterior post = model.predict_standardized(candidates);
    const double best = (best_observed - model.output_mean()) / model.output_scale();
    Selection sel;
    sel.score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double s = acquisition_score(cfg, post.mean[ii], std::sqrt(post.variance[ii]), best);
        if (s > sel.score) {
            sel.score = s;
            sel.index = i;
        }
    }
    sel.candidate = candidates[sel.index];
    return sel;
}

inline Selection select_next(const std::vector<Vector>& candidates, const TrainingSet& train,
                             const KernelHyperparams& h, const AcquisitionConfig& cfg)
{
    require(!train.empty(), "select_next: empty training set");
    return select_next(candidates, GpModel(train, h), train.outputs[train.argmax()], cfg);
}

} // namespace ibo
