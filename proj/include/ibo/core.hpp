#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ibo {

/// Policy parameter vector (the optimizer's search variable).
using ParamVector = Eigen::VectorXd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a caller breaks a documented precondition (dimension mismatch,
/// invalid hyperparameters, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when the Gram matrix cannot be factorized even after jitter escalation.
class SingularModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a proposal distribution has (numerically) no mass inside the box.
class DegenerateProposalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what)
{
    if (!cond) {
        throw ContractViolation(what);
    }
}

/// Axis-aligned box, lower[i] < upper[i].
struct Bounds {
    Vector lower;
    Vector upper;

    Bounds() = default;
    Bounds(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi))
    {
        validate();
    }

    static Bounds uniform(std::size_t dim, double lo, double hi)
    {
        return Bounds(Vector::Constant(static_cast<Eigen::Index>(dim), lo),
                      Vector::Constant(static_cast<Eigen::Index>(dim), hi));
    }

    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(lower.size()); }
    [[nodiscard]] Vector range() const { return upper - lower; }
    [[nodiscard]] Vector center() const { return 0.5 * (lower + upper); }

    void validate() const
    {
        require(lower.size() == upper.size(), "bounds: lower/upper dimension mismatch");
        require(lower.size() > 0, "bounds: empty");
        for (Eigen::Index i = 0; i < lower.size(); ++i) {
            require(std::isfinite(lower[i]) && std::isfinite(upper[i]), "bounds: non-finite entry");
            require(lower[i] < upper[i], "bounds: lower must be < upper in dimension " + std::to_string(i));
        }
    }

    [[nodiscard]] bool contains(const Vector& x) const
    {
        if (x.size() != lower.size()) {
            return false;
        }
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if (!(x[i] >= lower[i] && x[i] <= upper[i])) {
                return false;
            }
        }
        return true;
    }

    [[nodiscard]] Vector clip(const Vector& x) const
    {
        require(x.size() == lower.size(), "bounds: clip dimension mismatch");
        return x.cwiseMax(lower).cwiseMin(upper);
    }

    /// Affine map of the box onto [0,1]^d.
    [[nodiscard]] Vector to_unit(const Vector& x) const
    {
        return (x - lower).cwiseQuotient(range());
    }

    [[nodiscard]] Vector from_unit(const Vector& u) const
    {
        return lower + u.cwiseProduct(range());
    }
};

/// Derives an independent, reproducible 64-bit stream from a base seed and a
/// list of stream coordinates (episode, purpose tag, ...).
inline std::mt19937_64 seeded_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> coords)
{
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * coords.size());
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (auto c : coords) {
        words.push_back(static_cast<std::uint32_t>(c));
        words.push_back(static_cast<std::uint32_t>(c >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

inline Vector to_eigen(const std::vector<double>& v)
{
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Vector& v)
{
    return {v.data(), v.data() + v.size()};
}

} // namespace ibo
