#include "ibo/acquisition.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace ibo;

TEST(NormalCdf, TableValues)
{
    EXPECT_NEAR(normal_cdf(0.0), 0.5, 1e-15);
    EXPECT_NEAR(normal_cdf(3.0), 0.9986501019683699, 1e-12);
    EXPECT_NEAR(normal_cdf(-1.0), 0.15865525393145705, 1e-12);
    EXPECT_NEAR(normal_cdf(-10.0), 7.619853024160527e-24, 1e-36);
    EXPECT_NEAR(normal_pdf(0.0), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-15);
}

TEST(ExpectedImprovement, AtIncumbent)
{
    EXPECT_NEAR(expected_improvement(0.0, 1.0, 0.0, 0.0), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(expected_improvement(0.0, 1.0, 0.0, 0.0), 0.3989422804014327, 1e-12);
}

TEST(ExpectedImprovement, ZeroSigmaLimit)
{
    EXPECT_DOUBLE_EQ(expected_improvement(2.5, 0.0, 0.5, 0.0), 2.0);
    EXPECT_DOUBLE_EQ(expected_improvement(0.2, 0.0, 0.5, 0.0), 0.0);
}

TEST(ExpectedImprovement, MatchesMonteCarlo)
{
    const auto mc = oracle::monte_carlo_normal(1.0, 0.7, 1000000, 1, [](double y) { return std::max(y - 0.5 - 0.1, 0.0); });
    EXPECT_NEAR(expected_improvement(1.0, 0.7, 0.5, 0.1), mc.mean, 3.0 * mc.std_error);
}

TEST(ExpectedImprovement, NonNegativeAndMonotoneInSigma)
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_real_distribution<double> pos(0.0, 3.0);
    for (int t = 0; t < 2000; ++t) {
        const double mu = u(rng);
        const double best = u(rng);
        const double kappa = 0.5 * pos(rng);
        const double s1 = pos(rng);
        const double s2 = s1 + pos(rng);
        const double e1 = expected_improvement(mu, s1, best, kappa);
        const double e2 = expected_improvement(mu, s2, best, kappa);
        EXPECT_GE(e1, 0.0);
        EXPECT_GE(e2, 0.0);
        if (mu - best - kappa >= 0.0) {
            EXPECT_GE(e2, e1 - 1e-12);
        }
    }
}

TEST(ProbabilityOfImprovement, Values)
{
    EXPECT_NEAR(probability_of_improvement(1.0, 1.0, 1.0, 0.0), 0.5, 1e-15);
    EXPECT_NEAR(probability_of_improvement(3.0 * 0.4 + 1.0, 0.4, 1.0, 0.0), 0.99865, 1e-5);
    EXPECT_EQ(probability_of_improvement(2.0, 0.0, 1.0, 0.0), 1.0);
    EXPECT_EQ(probability_of_improvement(1.0, 0.0, 1.0, 0.0), 0.0);
}

TEST(ProbabilityOfImprovement, BoundedAndMonotoneInMu)
{
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_real_distribution<double> pos(0.01, 3.0);
    for (int t = 0; t < 2000; ++t) {
        const double mu = u(rng);
        const double sigma = pos(rng);
        const double best = u(rng);
        const double kappa = 0.2 * pos(rng);
        const double p1 = probability_of_improvement(mu, sigma, best, kappa);
        const double p2 = probability_of_improvement(mu + pos(rng), sigma, best, kappa);
        EXPECT_GE(p1, 0.0);
        EXPECT_LE(p1, 1.0);
        EXPECT_GE(p2, p1);
    }
}

TEST(MonteCarlo, EiAndPiOnRandomParameterizations)
{
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_real_distribution<double> pos(0.05, 2.0);
    for (int t = 0; t < 10; ++t) {
        const double mu = u(rng);
        const double sigma = pos(rng);
        const double kappa = 0.1 * pos(rng);
        // keep the threshold within 2.5 sigma so the sampled tail is not empty
        const double best = mu - kappa - 1.25 * u(rng) * sigma;
        const auto ei = oracle::monte_carlo_normal(mu, sigma, 1000000, 100 + t,
                                                   [&](double y) { return std::max(y - best - kappa, 0.0); });
        const auto pi = oracle::monte_carlo_normal(mu, sigma, 1000000, 200 + t,
                                                   [&](double y) { return y > best + kappa ? 1.0 : 0.0; });
        EXPECT_NEAR(expected_improvement(mu, sigma, best, kappa), ei.mean, 3.0 * ei.std_error);
        EXPECT_NEAR(probability_of_improvement(mu, sigma, best, kappa), pi.mean, 3.0 * pi.std_error);
    }
}

TEST(UpperConfidenceBound, Arithmetic)
{
    EXPECT_DOUBLE_EQ(upper_confidence_bound(1.0, 2.0, 1.0), 3.0);
    EXPECT_DOUBLE_EQ(upper_confidence_bound(1.7, 2.0, 0.0), 1.7);
    EXPECT_NEAR(upper_confidence_bound(-0.3, 0.4, 2.5), 0.7, 1e-15);
}

TEST(UpperConfidenceBound, LinearInLambda)
{
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_real_distribution<double> pos(0.0, 3.0);
    for (int t = 0; t < 1000; ++t) {
        const double mu = u(rng);
        const double s = pos(rng);
        const double l1 = pos(rng);
        const double l2 = pos(rng);
        EXPECT_NEAR(upper_confidence_bound(mu, s, l1) + upper_confidence_bound(mu, s, l2),
                    2.0 * upper_confidence_bound(mu, s, 0.5 * (l1 + l2)), 1e-12);
    }
}

TEST(AcquisitionConfig, Validation)
{
    AcquisitionConfig c;
    c.validate();
    c.kappa = -1.0;
    EXPECT_THROW(c.validate(), ContractViolation);
    c = {};
    c.n_candidates = 0;
    EXPECT_THROW(c.validate(), ContractViolation);
    EXPECT_EQ(acquisition_kind_from_string(to_string(AcquisitionKind::UCB)), AcquisitionKind::UCB);
    EXPECT_THROW(acquisition_kind_from_string("TS"), ContractViolation);
}

namespace {

TrainingSet three_point_model()
{
    TrainingSet t(Bounds::uniform(1, 0.0, 1.0));
    t.add((Vector(1) << 0.1).finished(), 0.2);
    t.add((Vector(1) << 0.5).finished(), 1.0);
    t.add((Vector(1) << 0.9).finished(), -0.4);
    return t;
}

std::vector<Vector> seeded_candidates(std::uint64_t seed, int n)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vector> c;
    for (int i = 0; i < n; ++i) {
        c.push_back((Vector(1) << u(rng)).finished());
    }
    return c;
}

} // namespace

TEST(SelectNext, SingleCandidate)
{
    const auto t = three_point_model();
    const std::vector<Vector> c{(Vector(1) << 0.33).finished()};
    const auto sel = select_next(c, t, KernelHyperparams{1.0, 0.2, 0.0}, AcquisitionConfig{});
    EXPECT_EQ(sel.index, 0U);
    EXPECT_EQ(sel.candidate, c[0]);
}

TEST(SelectNext, MatchesExhaustiveScalarRescoring)
{
    const auto t = three_point_model();
    const KernelHyperparams h{1.0, 0.2, 1e-4};
    const GpModel model(t, h);
    for (auto kind : {AcquisitionKind::EI, AcquisitionKind::PI, AcquisitionKind::UCB, AcquisitionKind::PEI}) {
        AcquisitionConfig cfg;
        cfg.kind = kind;
        const auto cands = seeded_candidates(5, 100);
        const auto sel = select_next(cands, t, h, cfg);
        const double best = (1.0 - model.output_mean()) / model.output_scale();
        std::size_t arg = 0;
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < cands.size(); ++i) {
            const auto p = model.predict_standardized({cands[i]});
            const double s = acquisition_score(cfg, p.mean[0], std::sqrt(p.variance[0]), best);
            if (s > top) {
                top = s;
                arg = i;
            }
        }
        EXPECT_EQ(sel.index, arg) << to_string(kind);
        EXPECT_NEAR(sel.score, top, 1e-12);
    }
}

TEST(SelectNext, PeiScoresLikeEi)
{
    const auto t = three_point_model();
    const KernelHyperparams h{1.0, 0.2, 1e-4};
    AcquisitionConfig ei;
    ei.kind = AcquisitionKind::EI;
    AcquisitionConfig pei;
    pei.kind = AcquisitionKind::PEI;
    const auto cands = seeded_candidates(6, 50);
    const auto a = select_next(cands, t, h, ei);
    const auto b = select_next(cands, t, h, pei);
    EXPECT_EQ(a.index, b.index);
    EXPECT_EQ(a.score, b.score);
}

TEST(SelectNext, NoiselessTrainingPointNeverBeatsPositiveEi)
{
    const auto t = three_point_model();
    AcquisitionConfig cfg;
    cfg.kind = AcquisitionKind::EI;
    cfg.kappa = 0.05;
    const KernelHyperparams h{1.0, 0.2, 0.0};
    std::vector<Vector> cands{t.inputs[1], (Vector(1) << 0.3).finished(), (Vector(1) << 0.7).finished()};
    const auto sel = select_next(cands, t, h, cfg);
    EXPECT_NE(sel.index, 0U);
    EXPECT_GT(sel.score, 0.0);
    const GpModel model(t, h);
    const auto p = model.predict_standardized({t.inputs[1]});
    const double best = (1.0 - model.output_mean()) / model.output_scale();
    EXPECT_NEAR(acquisition_score(cfg, p.mean[0], std::sqrt(p.variance[0]), best), 0.0, 1e-6);
}

TEST(SelectNext, ScoreIsPermutationInvariant)
{
    const auto t = three_point_model();
    const KernelHyperparams h{0.8, 0.25, 1e-3};
    std::mt19937_64 rng(15);
    for (auto kind : {AcquisitionKind::EI, AcquisitionKind::PI, AcquisitionKind::UCB}) {
        AcquisitionConfig cfg;
        cfg.kind = kind;
        auto cands = seeded_candidates(7, 60);
        const double s0 = select_next(cands, t, h, cfg).score;
        for (int r = 0; r < 5; ++r) {
            std::shuffle(cands.begin(), cands.end(), rng);
            EXPECT_NEAR(select_next(cands, t, h, cfg).score, s0, 1e-12);
        }
    }
}

TEST(SelectNext, TiesGoToFirstIndex)
{
    const auto t = three_point_model();
    const Vector x = (Vector(1) << 0.37).finished();
    const auto sel = select_next({x, x, x}, t, KernelHyperparams{1.0, 0.2, 0.0}, AcquisitionConfig{});
    EXPECT_EQ(sel.index, 0U);
}

TEST(SelectNext, EmptyCandidatesRejected)
{
    const auto t = three_point_model();
    EXPECT_THROW(select_next({}, t, KernelHyperparams{}, AcquisitionConfig{}), ContractViolation);
}
