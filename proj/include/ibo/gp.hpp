#pragma once

// Gaussian-process surrogate over (theta, return) observations.
//
// Kernel: Matern nu=3/2, isotropic, on inputs mapped to the unit box of the
// declared bounds. Outputs are standardized (zero mean, unit variance) before
// the zero-mean prior is applied and de-standardized on the way out.

#include "ibo/core.hpp"
#include "ibo/nelder_mead.hpp"

#include <Eigen/Cholesky>

#include <array>
#include <limits>
#include <numbers>
#include <optional>

namespace ibo {

struct KernelHyperparams {
    double signal_variance = 1.0;
    double length_scale = 0.5;
    double noise_variance = 1e-2;

    void validate() const
    {
        require(std::isfinite(signal_variance) && signal_variance > 0, "hyperparams: signal_variance must be finite and > 0");
        require(std::isfinite(length_scale) && length_scale > 0, "hyperparams: length_scale must be finite and > 0");
        require(std::isfinite(noise_variance) && noise_variance >= 0, "hyperparams: noise_variance must be finite and >= 0");
    }

    friend bool operator==(const KernelHyperparams&, const KernelHyperparams&) = default;
};

/// Matern-3/2 covariance between two points. `same_index` switches on the
/// Kronecker noise term; it is only ever true on the Gram diagonal.
inline double matern15(const Vector& xp, const Vector& xq, const KernelHyperparams& h, bool same_index = false)
{
    require(xp.size() == xq.size(), "matern15: dimension mismatch");
    const double r = (xp - xq).norm();
    const double a = std::numbers::sqrt3 * r / h.length_scale;
    double k = h.signal_variance * (1.0 + a) * std::exp(-a);
    if (same_index) {
        k += h.noise_variance;
    }
    return k;
}

/// K(X, X) with the noise variance on the diagonal.
inline Matrix gram_matrix(const std::vector<Vector>& xs, const KernelHyperparams& h)
{
    require(!xs.empty(), "gram_matrix: empty input set");
    const auto n = static_cast<Eigen::Index>(xs.size());
    Matrix k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = matern15(xs[i], xs[i], h, true);
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = matern15(xs[i], xs[j], h);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

/// K(X, X*), one column per query.
inline Matrix cross_covariance(const std::vector<Vector>& xs, const std::vector<Vector>& queries,
                               const KernelHyperparams& h)
{
    Matrix k(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(queries.size()));
    for (std::size_t q = 0; q < queries.size(); ++q) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = matern15(xs[i], queries[q], h);
        }
    }
    return k;
}

/// Cholesky factor of a Gram matrix plus the diagonal jitter that made it succeed.
struct GramFactor {
    Eigen::LLT<Matrix> llt;
    double jitter = 0.0;
};

/// Jitter policy: try the matrix as is, then 1e-10 * sigma^2 escalating x10 up to 1e-4 * sigma^2.
inline GramFactor factorize_gram(const Matrix& k, double signal_variance)
{
    const auto n = k.rows();
    for (double rel = 0.0; rel <= 1e-4 * (1.0 + 1e-9); rel = rel == 0.0 ? 1e-10 : rel * 10.0) {
        const double jitter = rel * signal_variance;
        Matrix kj = k;
        kj.diagonal().array() += jitter;
        GramFactor f{Eigen::LLT<Matrix>(kj), jitter};
        if (f.llt.info() == Eigen::Success) {
            const auto& l = f.llt.matrixLLT();
            bool ok = true;
            for (Eigen::Index i = 0; i < n && ok; ++i) {
                ok = std::isfinite(l(i, i)) && l(i, i) > 0.0;
            }
            if (ok) {
                return f;
            }
        }
    }
    throw SingularModelError("gram matrix is not positive definite after maximum jitter");
}

/// Observed data D = {X, y} together with the box the inputs live in.
struct TrainingSet {
    Bounds bounds;
    std::vector<Vector> inputs;
    std::vector<double> outputs;

    TrainingSet() = default;
    explicit TrainingSet(Bounds b) : bounds(std::move(b)) {}

    [[nodiscard]] std::size_t size() const { return inputs.size(); }
    [[nodiscard]] bool empty() const { return inputs.empty(); }
    [[nodiscard]] std::size_t dim() const { return bounds.dim(); }

    void add(const Vector& x, double y)
    {
        require(static_cast<std::size_t>(x.size()) == dim(), "training set: input dimension mismatch");
        require(bounds.contains(x), "training set: input outside bounds");
        require(std::isfinite(y), "training set: non-finite output");
        inputs.push_back(x);
        outputs.push_back(y);
    }

    [[nodiscard]] double output_mean() const
    {
        double s = 0.0;
        for (double y : outputs) {
            s += y;
        }
        return outputs.empty() ? 0.0 : s / static_cast<double>(outputs.size());
    }

    /// Population standard deviation of the outputs; 1 when degenerate.
    [[nodiscard]] double output_scale() const
    {
        if (outputs.size() < 2) {
            return 1.0;
        }
        const double m = output_mean();
        double ss = 0.0;
        for (double y : outputs) {
            ss += (y - m) * (y - m);
        }
        const double sd = std::sqrt(ss / static_cast<double>(outputs.size()));
        return (sd > 1e-12 * std::max(1.0, std::abs(m))) ? sd : 1.0;
    }

    [[nodiscard]] std::vector<Vector> unit_inputs() const
    {
        std::vector<Vector> u;
        u.reserve(inputs.size());
        for (const auto& x : inputs) {
            u.push_back(bounds.to_unit(x));
        }
        return u;
    }

    [[nodiscard]] Vector standardized_outputs() const
    {
        const double m = output_mean();
        const double s = output_scale();
        Vector y(static_cast<Eigen::Index>(outputs.size()));
        for (std::size_t i = 0; i < outputs.size(); ++i) {
            y[static_cast<Eigen::Index>(i)] = (outputs[i] - m) / s;
        }
        return y;
    }

    /// Index of the best observation; first index wins ties.
    [[nodiscard]] std::size_t argmax() const
    {
        require(!outputs.empty(), "training set: argmax of empty set");
        std::size_t best = 0;
        for (std::size_t i = 1; i < outputs.size(); ++i) {
            if (outputs[i] > outputs[best]) {
                best = i;
            }
        }
        return best;
    }
};

/// Posterior mean and variance per query point.
struct GpPosterior {
    Vector mean;
    Vector variance;

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(mean.size()); }
};

/// A GP conditioned on a training set: the Gram factorization is computed once
/// and reused for every prediction.
class GpModel {
public:
    GpModel(const TrainingSet& train, const KernelHyperparams& h)
        : h_(h), bounds_(train.bounds), xs_(train.unit_inputs()),
          y_mean_(train.output_mean()), y_scale_(train.output_scale())
    {
        require(!train.empty(), "gp: empty training set");
        h.validate();
        factor_ = factorize_gram(gram_matrix(xs_, h_), h_.signal_variance);
        alpha_ = factor_.llt.solve(train.standardized_outputs());
        y_std_ = train.standardized_outputs();
    }

    [[nodiscard]] const KernelHyperparams& hyperparams() const { return h_; }
    [[nodiscard]] double output_mean() const { return y_mean_; }
    [[nodiscard]] double output_scale() const { return y_scale_; }

    /// Posterior in standardized output units (prior variance = signal_variance).
    [[nodiscard]] GpPosterior predict_standardized(const std::vector<Vector>& queries) const
    {
        require(!queries.empty(), "gp: empty query set");
        std::vector<Vector> uq;
        uq.reserve(queries.size());
        for (const auto& q : queries) {
            require(static_cast<std::size_t>(q.size()) == bounds_.dim(), "gp: query dimension mismatch");
            uq.push_back(bounds_.to_unit(q));
        }
        const Matrix ks = cross_covariance(xs_, uq, h_);
        GpPosterior post;
        post.mean = ks.transpose() * alpha_;
        const Matrix v = factor_.llt.matrixL().solve(ks);
        post.variance = (Vector::Constant(ks.cols(), h_.signal_variance) - v.colwise().squaredNorm().transpose())
                            .cwiseMax(0.0);
        return post;
    }

    /// Posterior in the original output units.
    [[nodiscard]] GpPosterior predict(const std::vector<Vector>& queries) const
    {
        GpPosterior post = predict_standardized(queries);
        post.mean = (post.mean.array() * y_scale_ + y_mean_).matrix();
        post.variance *= y_scale_ * y_scale_;
        return post;
    }

    /// log p(y | X, h) on the standardized outputs.
    [[nodiscard]] double log_marginal_likelihood() const
    {
        const auto& l = factor_.llt.matrixLLT();
        double log_det_half = 0.0;
        for (Eigen::Index i = 0; i < l.rows(); ++i) {
            log_det_half += std::log(l(i, i));
        }
        const double n = static_cast<double>(xs_.size());
        return -0.5 * y_std_.dot(alpha_) - log_det_half - 0.5 * n * std::log(2.0 * std::numbers::pi);
    }

private:
    KernelHyperparams h_;
    Bounds bounds_;
    std::vector<Vector> xs_;
    double y_mean_;
    double y_scale_;
    GramFactor factor_;
    Vector alpha_;
    Vector y_std_;
};

inline GpPosterior predict(const TrainingSet& train, const KernelHyperparams& h, const std::vector<Vector>& queries)
{
    return GpModel(train, h).predict(queries);
}

inline double log_marginal_likelihood(const TrainingSet& train, const KernelHyperparams& h)
{
    return GpModel(train, h).log_marginal_likelihood();
}

/// Box over log-hyperparameters searched by `fit_hyperparams`. Length scales
/// are in unit-box input coordinates; variances in standardized output units.
struct HyperparamSearchSpace {
    double min_length_scale = 1e-2;
    double max_length_scale = 10.0;
    double min_signal_variance = 1e-2;
    double max_signal_variance = 1e2;
    double min_noise_variance = 1e-6;
    double max_noise_variance = 1.0;
    int starts = 8;
    int max_evals_per_start = 60;

    [[nodiscard]] std::array<double, 3> lower() const
    {
        return {std::log(min_signal_variance), std::log(min_length_scale), std::log(min_noise_variance)};
    }
    [[nodiscard]] std::array<double, 3> upper() const
    {
        return {std::log(max_signal_variance), std::log(max_length_scale), std::log(max_noise_variance)};
    }
};

struct HyperparamFit {
    KernelHyperparams hyperparams;
    double log_likelihood = -std::numeric_limits<double>::infinity();
    bool used_fallback = false;
    int evaluations = 0;
};

/// Multi-start Nelder-Mead over log(signal_variance, length_scale, noise_variance).
/// The first start is `warm_start` (or the defaults), the second the defaults,
/// the rest are drawn uniformly in the log box from `seed`. Every evaluated
/// point competes for the result, so the answer is at least as likely as any
/// start. When every evaluation is singular the defaults come back flagged.
inline HyperparamFit fit_hyperparams(const TrainingSet& train, const HyperparamSearchSpace& space = {},
                                     std::uint64_t seed = 0,
                                     std::optional<KernelHyperparams> warm_start = std::nullopt,
                                     const KernelHyperparams& defaults = {})
{
    require(train.size() >= 2, "fit_hyperparams: need at least two observations");
    const auto lo = space.lower();
    const auto hi = space.upper();

    const std::vector<Vector> xs = train.unit_inputs();
    const Vector y = train.standardized_outputs();
    const double n = static_cast<double>(xs.size());

    // Pairwise distances do not depend on the hyperparameters.
    const auto ni = static_cast<Eigen::Index>(xs.size());
    Matrix dist(ni, ni);
    for (Eigen::Index i = 0; i < ni; ++i) {
        dist(i, i) = 0.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            dist(i, j) = dist(j, i) = (xs[static_cast<std::size_t>(i)] - xs[static_cast<std::size_t>(j)]).norm();
        }
    }

    auto to_params = [](const std::array<double, 3>& z) {
        return KernelHyperparams{std::exp(z[0]), std::exp(z[1]), std::exp(z[2])};
    };
    auto clamp_box = [&](std::array<double, 3> z) {
        for (std::size_t i = 0; i < 3; ++i) {
            z[i] = std::clamp(z[i], lo[i], hi[i]);
        }
        return z;
    };

    HyperparamFit best;
    best.hyperparams = defaults;
    const double neg_inf = -std::numeric_limits<double>::infinity();

    auto objective = [&](const std::array<double, 3>& z) -> double {
        const KernelHyperparams h = to_params(z);
        ++best.evaluations;
        Matrix k = (-std::numbers::sqrt3 / h.length_scale * dist.array()).exp() *
                   (1.0 + std::numbers::sqrt3 / h.length_scale * dist.array()) * h.signal_variance;
        k.diagonal().array() += h.noise_variance;
        try {
            const GramFactor f = factorize_gram(k, h.signal_variance);
            const Vector alpha = f.llt.solve(y);
            const auto& l = f.llt.matrixLLT();
            double log_det_half = 0.0;
            for (Eigen::Index i = 0; i < l.rows(); ++i) {
                log_det_half += std::log(l(i, i));
            }
            const double ll = -0.5 * y.dot(alpha) - log_det_half - 0.5 * n * std::log(2.0 * std::numbers::pi);
            if (!std::isfinite(ll)) {
                return neg_inf;
            }
            if (ll > best.log_likelihood) {
                best.log_likelihood = ll;
                best.hyperparams = h;
            }
            return ll;
        } catch (const SingularModelError&) {
            return neg_inf;
        }
    };

    auto to_log = [&](const KernelHyperparams& h) {
        return clamp_box({std::log(h.signal_variance), std::log(h.length_scale),
                          std::log(std::max(h.noise_variance, space.min_noise_variance))});
    };

    std::vector<std::array<double, 3>> starts;
    starts.push_back(to_log(warm_start.value_or(defaults)));
    if (warm_start) {
        starts.push_back(to_log(defaults));
    }
    auto rng = seeded_stream(seed, {0x6670ULL});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (static_cast<int>(starts.size()) < std::max(1, space.starts)) {
        std::array<double, 3> z{};
        for (std::size_t i = 0; i < 3; ++i) {
            z[i] = lo[i] + unit(rng) * (hi[i] - lo[i]);
        }
        starts.push_back(z);
    }

    NelderMeadOptions opts;
    opts.max_evaluations = space.max_evals_per_start;
    opts.initial_step = 0.5;
    for (const auto& s : starts) {
        nelder_mead_maximize<3>(
            [&](const std::array<double, 3>& z) { return objective(clamp_box(z)); }, s, opts);
    }

    if (!std::isfinite(best.log_likelihood)) {
        best.hyperparams = defaults;
        best.used_fallback = true;
    }
    return best;
}

} // namespace ibo
