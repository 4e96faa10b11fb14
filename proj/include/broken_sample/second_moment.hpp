#pragma once

// Exact second moment of the whole-data likelihood ratio under the null:
//     E_0 L^2 = sum_{l=0}^{m} t_l a_l,
// with t_l = C(n-l-1, m-l) / C(n, m) and a_l = [z^l] prod_{k>=0} 1/(1 - z lambda_k^2),
// together with the combinatorial pieces (2-core of the overlap graph,
// extension counts) and a brute-force enumeration oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "broken_sample/errors.hpp"
#include "broken_sample/models.hpp"
#include "broken_sample/parallel.hpp"

namespace broken_sample {

namespace detail {

/// Neumaier compensated sum.
inline double compensated_sum(std::span<const double> xs) noexcept {
    double sum = 0.0;
    double c = 0.0;
    for (double x : xs) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) c += (sum - t) + x;
        else c += (x - t) + sum;
        sum = t;
    }
    return sum + c;
}

/// Pairwise (tree) sum; the result depends only on the input order.
inline double pairwise_sum(std::span<const double> xs) noexcept {
    if (xs.size() <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

}  // namespace detail

/// t_0..t_m. Uses t_0 = (n-m)/n and t_{l+1}/t_l = (m-l)/(n-l-1); for m = n the
/// weights are (0, ..., 0, 1) by the convention C(-1, 0) = 1.
inline std::vector<double> t_weights(std::size_t n, std::size_t m) {
    require(m >= 1 && m <= n, "t_weights: need 1 <= m <= n");
    std::vector<double> t(m + 1, 0.0);
    if (m == n) {
        t[m] = 1.0;
        return t;
    }
    // Accumulate in log space so large n cannot underflow intermediate terms early.
    double log_t = std::log(static_cast<double>(n - m)) - std::log(static_cast<double>(n));
    t[0] = std::exp(log_t);
    for (std::size_t l = 0; l < m; ++l) {
        log_t += std::log(static_cast<double>(m - l)) - std::log(static_cast<double>(n - l - 1));
        t[l + 1] = std::exp(log_t);
    }
    return t;
}

struct PowerSeriesCoeffs {
    std::vector<double> a;           // a_0..a_M
    std::vector<double> power_sums;  // p_1..p_M (index j-1), including lambda_0 = 1
    double truncation = 0.0;         // lambda^2 cutoff used for an infinite spectrum
};

/// a_0..a_M from power sums p_j = sum_{k>=0} lambda_k^{2j} through
/// l a_l = sum_{j=1}^{l} p_j a_{l-j}.
inline PowerSeriesCoeffs a_coefficients_from_power_sums(std::vector<double> power_sums, std::size_t max_index) {
    require(power_sums.size() >= max_index, "a_coefficients: not enough power sums");
    PowerSeriesCoeffs out;
    out.power_sums = std::move(power_sums);
    out.a.assign(max_index + 1, 0.0);
    out.a[0] = 1.0;
    for (std::size_t l = 1; l <= max_index; ++l) {
        double acc = 0.0;
        for (std::size_t j = 1; j <= l; ++j) acc += out.power_sums[j - 1] * out.a[l - j];
        out.a[l] = acc / static_cast<double>(l);
    }
    return out;
}

/// lambdas is the full list lambda_0 = 1, lambda_1, lambda_2, ...
inline PowerSeriesCoeffs a_coefficients(std::span<const double> lambdas, std::size_t max_index) {
    require(!lambdas.empty(), "a_coefficients: the spectrum must contain lambda_0");
    std::vector<double> p(max_index, 0.0);
    for (double lam : lambdas) {
        require(lam >= 0.0 && lam <= 1.0, "a_coefficients: values must lie in [0, 1]");
        const double sq = lam * lam;
        double pw = 1.0;
        for (std::size_t j = 0; j < max_index; ++j) {
            pw *= sq;
            p[j] += pw;
        }
    }
    return a_coefficients_from_power_sums(std::move(p), max_index);
}

/// Non-trivial values with multiplicities; lambda_0 = 1 is added here.
inline PowerSeriesCoeffs a_coefficients(const SpectralValues& values, std::size_t max_index) {
    std::vector<double> p(max_index, 1.0);
    for (std::size_t k = 0; k < values.values.size(); ++k) {
        const double sq = values.values[k] * values.values[k];
        const double mult = values.multiplicity.empty() ? 1.0 : values.multiplicity[k];
        double pw = 1.0;
        for (std::size_t j = 0; j < max_index; ++j) {
            pw *= sq;
            if (pw == 0.0) break;
            p[j] += mult * pw;
        }
    }
    PowerSeriesCoeffs out = a_coefficients_from_power_sums(std::move(p), max_index);
    out.truncation = values.truncation;
    return out;
}

struct SecondMomentResult {
    double value = 1.0;             // E_0 L^2
    double limit_product = 1.0;     // prod_{k>=1} (1 - lambda_k^2)^{-1}
    double bound_product = 1.0;     // prod_{k>=0} (1 - (m/n) lambda_k^2)^{-1}; infinite when m = n
    bool diverges = false;          // lambda_1 = 1 and m = n: a_l grows without bound
    double truncation = 0.0;
};

inline double limit_product(const SpectralValues& values) {
    double log_prod = 0.0;
    for (std::size_t k = 0; k < values.values.size(); ++k) {
        const double sq = values.values[k] * values.values[k];
        if (sq >= 1.0) return std::numeric_limits<double>::infinity();
        const double mult = values.multiplicity.empty() ? 1.0 : values.multiplicity[k];
        log_prod -= mult * std::log1p(-sq);
    }
    return std::exp(log_prod);
}

/// prod_{k>=0} (1 - ratio * lambda_k^2)^{-1}, including the lambda_0 = 1 factor.
inline double ratio_bound_product(const SpectralValues& values, double ratio) {
    if (ratio >= 1.0) return std::numeric_limits<double>::infinity();
    double log_prod = -std::log1p(-ratio);
    for (std::size_t k = 0; k < values.values.size(); ++k) {
        const double mult = values.multiplicity.empty() ? 1.0 : values.multiplicity[k];
        log_prod -= mult * std::log1p(-ratio * values.values[k] * values.values[k]);
    }
    return std::exp(log_prod);
}

inline SecondMomentResult second_moment(std::size_t n, std::size_t m, const SpectralValues& values) {
    const std::vector<double> t = t_weights(n, m);
    const PowerSeriesCoeffs coeffs = a_coefficients(values, m);
    std::vector<double> terms(m + 1);
    for (std::size_t l = 0; l <= m; ++l) terms[l] = t[l] * coeffs.a[l];

    SecondMomentResult r;
    r.value = detail::compensated_sum(terms);
    r.limit_product = limit_product(values);
    r.bound_product = ratio_bound_product(values, static_cast<double>(m) / static_cast<double>(n));
    r.diverges = m == n && !values.values.empty() && values.values.front() >= 1.0;
    r.truncation = values.truncation;
    return r;
}

/// Convenience overload: lambdas excludes lambda_0.
inline SecondMomentResult second_moment(std::size_t n, std::size_t m, std::span<const double> lambdas) {
    SpectralValues v;
    v.values.assign(lambdas.begin(), lambdas.end());
    v.multiplicity.assign(v.values.size(), 1.0);
    return second_moment(n, m, v);
}

// ---------------------------------------------------------------------------
// Combinatorics of the overlap graph G_pi

/// All injections [m] -> [n] (0-based) in lexicographic order.
inline std::vector<std::vector<std::size_t>> enumerate_injections(std::size_t m, std::size_t n) {
    require(m <= n, "enumerate_injections: m must not exceed n");
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> cur;
    std::vector<char> used(n, 0);
    auto rec = [&](auto&& self) -> void {
        if (cur.size() == m) {
            out.push_back(cur);
            return;
        }
        for (std::size_t v = 0; v < n; ++v) {
            if (used[v]) continue;
            used[v] = 1;
            cur.push_back(v);
            self(self);
            cur.pop_back();
            used[v] = 0;
        }
    };
    rec(rec);
    return out;
}

struct TwoCoreDecomposition {
    std::vector<std::size_t> core_set;       // I, sorted, 0-based
    std::vector<std::size_t> cycle_counts;   // cycle_counts[i-1] = N_i, i = 1..|I|
    std::vector<std::size_t> injection;
};

/// Peels degree <= 1 vertices of the bipartite multigraph with left nodes [m],
/// right nodes [n] and edges {(i, i)} and {(i, pi(i))}. The surviving left
/// nodes form I, the largest subset of [m] with pi(I) = I.
inline TwoCoreDecomposition two_core(std::span<const std::size_t> pi, std::size_t n) {
    const std::size_t m = pi.size();
    require(m <= n, "two_core: m must not exceed n");
    {
        std::vector<char> seen(n, 0);
        for (std::size_t v : pi) {
            require(v < n && !seen[v], "two_core: not an injection into [n]");
            seen[v] = 1;
        }
    }

    // Edges 2i: (i, i), 2i+1: (i, pi(i)).
    std::vector<std::size_t> left_deg(m, 2);
    std::vector<std::size_t> right_deg(n, 0);
    std::vector<std::vector<std::size_t>> right_edges(n);
    for (std::size_t i = 0; i < m; ++i) {
        ++right_deg[i];
        right_edges[i].push_back(2 * i);
        ++right_deg[pi[i]];
        right_edges[pi[i]].push_back(2 * i + 1);
    }
    std::vector<char> edge_alive(2 * m, 1);
    std::vector<char> left_alive(m, 1);
    std::vector<char> right_alive(n, 1);

    auto edge_right = [&](std::size_t e) { return e % 2 == 0 ? e / 2 : pi[e / 2]; };

    // Queue entries: node id, left nodes are [0, m), right nodes [m, m + n).
    std::vector<std::size_t> queue;
    for (std::size_t i = 0; i < m; ++i)
        if (left_deg[i] <= 1) queue.push_back(i);
    for (std::size_t j = 0; j < n; ++j)
        if (right_deg[j] <= 1) queue.push_back(m + j);

    while (!queue.empty()) {
        const std::size_t node = queue.back();
        queue.pop_back();
        if (node < m) {
            if (!left_alive[node]) continue;
            left_alive[node] = 0;
            for (std::size_t e : {2 * node, 2 * node + 1}) {
                if (!edge_alive[e]) continue;
                edge_alive[e] = 0;
                const std::size_t r = edge_right(e);
                if (right_alive[r] && --right_deg[r] <= 1) queue.push_back(m + r);
            }
        } else {
            const std::size_t r = node - m;
            if (!right_alive[r]) continue;
            right_alive[r] = 0;
            for (std::size_t e : right_edges[r]) {
                if (!edge_alive[e]) continue;
                edge_alive[e] = 0;
                const std::size_t l = e / 2;
                if (left_alive[l] && --left_deg[l] <= 1) queue.push_back(l);
            }
        }
    }

    TwoCoreDecomposition out;
    out.injection.assign(pi.begin(), pi.end());
    for (std::size_t i = 0; i < m; ++i)
        if (left_alive[i]) out.core_set.push_back(i);
    out.cycle_counts.assign(out.core_set.size(), 0);
    std::vector<char> visited(m, 0);
    for (std::size_t i : out.core_set) {
        if (visited[i]) continue;
        std::size_t len = 0;
        for (std::size_t j = i; !visited[j]; j = pi[j]) {
            visited[j] = 1;
            ++len;
        }
        ++out.cycle_counts[len - 1];
    }
    return out;
}

/// Number of injections whose 2-core is a given I of size l with a given
/// restriction: (n-l-1)(n-l-2)...(n-m) for l < m, and 1 for l = m.
inline std::uint64_t count_extensions(std::size_t n, std::size_t m, std::size_t core_size) {
    require(core_size <= m && m <= n, "count_extensions: need core_size <= m <= n");
    if (core_size == m) return 1;
    std::uint64_t prod = 1;
    for (std::size_t f = n - m; f <= n - core_size - 1; ++f) {
        if (f == 0) return 0;
        require(prod <= std::numeric_limits<std::uint64_t>::max() / f, "count_extensions: overflow");
        prod *= f;
    }
    return prod;
}

// ---------------------------------------------------------------------------
// Brute-force oracle

/// E_0[Lbar^2] with Lbar(x, y) = |S_{m,n}|^{-1} sum_pi prod_i L(x_{pi(i)}, y_i), by
/// enumerating every configuration of a finite-alphabet model.
inline double brute_force_second_moment(std::size_t n, std::size_t m, const JointTable& joint,
                                        std::size_t workers = 1) {
    require(m >= 1 && m <= n, "brute_force_second_moment: need 1 <= m <= n");
    const Marginals marg = validate_joint(joint);
    const auto ax = static_cast<std::size_t>(joint.rows());
    const auto ay = static_cast<std::size_t>(joint.cols());
    const auto injections = enumerate_injections(m, n);
    const double configs = std::pow(static_cast<double>(ax), static_cast<double>(n)) *
                           std::pow(static_cast<double>(ay), static_cast<double>(m));
    if (configs * static_cast<double>(injections.size()) > 1e7)
        throw InvalidInput("brute_force_second_moment: enumeration size exceeds 1e7");

    Eigen::MatrixXd lr(ax, ay);
    for (std::size_t a = 0; a < ax; ++a)
        for (std::size_t b = 0; b < ay; ++b)
            lr(a, b) = joint(a, b) / (marg.x(a) * marg.y(b));

    std::size_t x_configs = 1;
    for (std::size_t i = 0; i < n; ++i) x_configs *= ax;
    std::size_t y_configs = 1;
    for (std::size_t i = 0; i < m; ++i) y_configs *= ay;

    // One block per X configuration.
    std::vector<double> block_sums(x_configs, 0.0);
    const double inv_count = 1.0 / static_cast<double>(injections.size());
    parallel_for(
        x_configs,
        [&](std::size_t xc) {
            std::vector<std::size_t> x(n), y(m);
            double px = 1.0;
            for (std::size_t i = 0, c = xc; i < n; ++i, c /= ax) {
                x[i] = c % ax;
                px *= marg.x(static_cast<Eigen::Index>(x[i]));
            }
            std::vector<double> terms(y_configs);
            for (std::size_t yc = 0; yc < y_configs; ++yc) {
                double py = 1.0;
                for (std::size_t i = 0, c = yc; i < m; ++i, c /= ay) {
                    y[i] = c % ay;
                    py *= marg.y(static_cast<Eigen::Index>(y[i]));
                }
                double lbar = 0.0;
                for (const auto& pi : injections) {
                    double prod = 1.0;
                    for (std::size_t i = 0; i < m; ++i)
                        prod *= lr(static_cast<Eigen::Index>(x[pi[i]]), static_cast<Eigen::Index>(y[i]));
                    lbar += prod;
                }
                lbar *= inv_count;
                terms[yc] = py * lbar * lbar;
            }
            block_sums[xc] = px * detail::pairwise_sum(terms);
        },
        workers);
    return detail::pairwise_sum(block_sums);
}

// ---------------------------------------------------------------------------
// Convergence of a_l

struct LimitGap {
    std::vector<double> gaps;  // |a_l - prod_{k>=1}(1 - lambda_k^2)^{-1}|, l = 0..l_max
    double limit = 1.0;
    double decay_rate = std::numeric_limits<double>::quiet_NaN();  // fitted r in gap ~ C r^{-l}
};

/// lambdas excludes lambda_0 and must satisfy lambda_1 < 1. The rate is fitted
/// by least squares of log(gap) on l over [L/2, L], where L is the last index
/// whose gap is above the round-off floor 1e-13 * limit.
inline LimitGap a_limit_gap(std::span<const double> lambdas, std::size_t l_max) {
    SpectralValues v;
    v.values.assign(lambdas.begin(), lambdas.end());
    v.multiplicity.assign(v.values.size(), 1.0);
    require(v.values.empty() || v.values.front() < 1.0, "a_limit_gap: need lambda_1 < 1");
    const PowerSeriesCoeffs coeffs = a_coefficients(v, l_max);
    LimitGap out;
    out.limit = limit_product(v);
    out.gaps.resize(l_max + 1);
    for (std::size_t l = 0; l <= l_max; ++l) out.gaps[l] = std::abs(coeffs.a[l] - out.limit);

    const double floor = 1e-13 * out.limit;
    std::size_t last = 0;
    for (std::size_t l = 0; l <= l_max; ++l)
        if (out.gaps[l] > floor) last = l;

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t count = 0;
    for (std::size_t l = last / 2; l <= last; ++l) {
        if (out.gaps[l] <= floor) continue;
        const double x = static_cast<double>(l);
        const double y = std::log(out.gaps[l]);
        sx += x, sy += y, sxx += x * x, sxy += x * y;
        ++count;
    }
    if (count >= 2) {
        const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
        out.decay_rate = std::exp(-slope);
    } else if (count == 0) {
        out.decay_rate = std::numeric_limits<double>::infinity();
    }
    return out;
}

}  // namespace broken_sample
