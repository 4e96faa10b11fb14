#pragma once

// Linear assignment solvers behind the Wasserstein test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "broken_sample/errors.hpp"

namespace broken_sample {

struct Assignment {
    double cost = 0.0;
    std::vector<std::size_t> column_of_row;
};

/// Minimum-cost assignment of every row to a distinct column (rows <= cols).
/// Shortest augmenting paths with potentials, O(rows^2 cols).
inline Assignment hungarian(const Eigen::MatrixXd& cost) {
    const auto n = static_cast<std::size_t>(cost.rows());
    const auto m = static_cast<std::size_t>(cost.cols());
    require(n <= m, "hungarian: more rows than columns");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    std::vector<char> used(m + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    Assignment out;
    out.column_of_row.assign(n, 0);
    for (std::size_t j = 1; j <= m; ++j)
        if (p[j] != 0) out.column_of_row[p[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i)
        out.cost += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out.column_of_row[i]));
    return out;
}

namespace detail {

/// Indices of xs sorted by value, ties by original index.
inline std::vector<double> sorted_values(std::span<const double> xs) {
    std::vector<std::size_t> idx(xs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = xs[idx[i]];
    return out;
}

}  // namespace detail

/// min over injections [m] -> [n] of sum_i |x_{pi(i)} - y_i|^p for scalars,
/// m <= n, p >= 1. For convex costs an optimal matching is monotone in the
/// sorted orders, which gives an O(nm) dynamic program.
inline double monotone_partial_matching(std::span<const double> xs, std::span<const double> ys, double p) {
    require(ys.size() <= xs.size(), "monotone_partial_matching: need m <= n");
    require(p >= 1.0, "monotone_partial_matching: p must be >= 1");
    const std::vector<double> x = detail::sorted_values(xs);
    const std::vector<double> y = detail::sorted_values(ys);
    const std::size_t n = x.size(), m = y.size();
    if (m == 0) return 0.0;
    if (m == n) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += std::pow(std::abs(x[i] - y[i]), p);
        return total;
    }
    const double inf = std::numeric_limits<double>::infinity();
    // best[j]: cheapest matching of y_1..y_j into the X prefix seen so far.
    std::vector<double> best(m + 1, inf);
    best[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = m > n - i ? m - (n - i) : 0;  // y's that must already be matched
        for (std::size_t j = std::min(m, i + 1); j >= 1 && j > lo; --j) {
            const double take = best[j - 1] + std::pow(std::abs(x[i] - y[j - 1]), p);
            if (take < best[j]) best[j] = take;
        }
    }
    return best[m];
}

}  // namespace broken_sample
