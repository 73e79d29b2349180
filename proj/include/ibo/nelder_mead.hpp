#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>

namespace ibo {

struct NelderMeadOptions {
    int max_evaluations = 200;
    double initial_step = 0.5;
    double tolerance = 1e-8;
};

template <std::size_t N>
struct NelderMeadResult {
    std::array<double, N> x{};
    double value = -std::numeric_limits<double>::infinity();
    int evaluations = 0;
};

/// Derivative-free maximization with the standard reflection / expansion /
/// contraction / shrink moves. Non-finite objective values count as -inf.
template <std::size_t N, class F>
NelderMeadResult<N> nelder_mead_maximize(F&& f, const std::array<double, N>& start, const NelderMeadOptions& opts = {})
{
    using Point = std::array<double, N>;
    constexpr double reflect = 1.0;
    constexpr double expand = 2.0;
    constexpr double contract = 0.5;
    constexpr double shrink = 0.5;

    NelderMeadResult<N> res;
    auto eval = [&](const Point& p) {
        ++res.evaluations;
        const double v = f(p);
        // minimize the negation
        return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
    };

    std::array<Point, N + 1> simplex;
    std::array<double, N + 1> cost;
    simplex[0] = start;
    for (std::size_t i = 0; i < N; ++i) {
        simplex[i + 1] = start;
        simplex[i + 1][i] += opts.initial_step;
    }
    for (std::size_t i = 0; i <= N; ++i) {
        cost[i] = eval(simplex[i]);
    }

    std::array<std::size_t, N + 1> order;
    while (res.evaluations < opts.max_evaluations) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cost[a] < cost[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[N - 1];

        if (std::isfinite(cost[best]) && std::abs(cost[worst] - cost[best]) <= opts.tolerance * (1.0 + std::abs(cost[best]))) {
            break;
        }

        Point centroid{};
        for (std::size_t i = 0; i <= N; ++i) {
            if (i == worst) {
                continue;
            }
            for (std::size_t d = 0; d < N; ++d) {
                centroid[d] += simplex[i][d] / static_cast<double>(N);
            }
        }
        auto along = [&](double t) {
            Point p;
            for (std::size_t d = 0; d < N; ++d) {
                p[d] = centroid[d] + t * (simplex[worst][d] - centroid[d]);
            }
            return p;
        };

        const Point xr = along(-reflect);
        const double cr = eval(xr);
        if (cr < cost[best]) {
            const Point xe = along(-expand);
            const double ce = eval(xe);
            if (ce < cr) {
                simplex[worst] = xe;
                cost[worst] = ce;
            } else {
                simplex[worst] = xr;
                cost[worst] = cr;
            }
        } else if (cr < cost[second]) {
            simplex[worst] = xr;
            cost[worst] = cr;
        } else {
            const bool outside = cr < cost[worst];
            const Point xc = along(outside ? -contract : contract);
            const double cc = eval(xc);
            if (cc < std::min(cr, cost[worst])) {
                simplex[worst] = xc;
                cost[worst] = cc;
            } else {
                for (std::size_t i = 0; i <= N; ++i) {
                    if (i == best) {
                        continue;
                    }
                    for (std::size_t d = 0; d < N; ++d) {
                        simplex[i][d] = simplex[best][d] + shrink * (simplex[i][d] - simplex[best][d]);
                    }
                    cost[i] = eval(simplex[i]);
                }
            }
        }
    }

    const auto it = std::min_element(cost.begin(), cost.end());
    const auto idx = static_cast<std::size_t>(it - cost.begin());
    res.x = simplex[idx];
    res.value = std::isfinite(*it) ? -*it : -std::numeric_limits<double>::infinity();
    return res;
}

} // namespace ibo
