#pragma once

// Joint laws P_{X,Y} and samplers for the null (independent samples) and the
// alternative (m correlated pairs hidden behind a uniform injection [m] -> [n]).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "broken_sample/errors.hpp"
#include "broken_sample/points.hpp"
#include "broken_sample/rng.hpp"
#include "broken_sample/spectrum.hpp"

namespace broken_sample {

enum class Hypothesis { H0, H1 };

inline const char* to_string(Hypothesis h) noexcept { return h == Hypothesis::H0 ? "H0" : "H1"; }

struct GaussianParams {
    std::size_t d = 1;
    double rho = 0.0;
    friend bool operator==(const GaussianParams&, const GaussianParams&) = default;
};

struct BernoulliParams {
    std::size_t d = 1;
    double q = 0.5;
    double rho = 0.0;
    friend bool operator==(const BernoulliParams&, const BernoulliParams&) = default;
};

struct DiscreteParams {
    JointTable joint;
    friend bool operator==(const DiscreteParams& a, const DiscreteParams& b) {
        return a.joint.rows() == b.joint.rows() && a.joint.cols() == b.joint.cols() && a.joint == b.joint;
    }
};

/// Spectral values lambda_k (k >= 1) with multiplicities, as consumed by the
/// second-moment formula. `truncation` is the lambda^2 cutoff applied to an
/// infinite spectrum (0 when the list is exact).
struct SpectralValues {
    std::vector<double> values;
    std::vector<double> multiplicity;
    double truncation = 0.0;
};

namespace detail {

/// Inverse-CDF sampling over a finite pmf.
class FiniteSampler {
public:
    FiniteSampler() = default;
    explicit FiniteSampler(std::vector<double> pmf) : cdf_(pmf.size()) {
        std::partial_sum(pmf.begin(), pmf.end(), cdf_.begin());
        // Guard against round-off in the final cumulative value.
        if (!cdf_.empty()) cdf_.back() = 1.0;
    }
    std::size_t operator()(Rng& rng) const {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
    }

private:
    std::vector<double> cdf_;
};

}  // namespace detail

/// A named joint law with samplers, pointwise likelihood ratio and spectrum.
class JointModel {
public:
    using Params = std::variant<GaussianParams, BernoulliParams, DiscreteParams>;

    static JointModel gaussian(std::size_t d, double rho) {
        require(d >= 1, "gaussian model: d must be >= 1");
        require(rho >= 0.0 && rho <= 1.0, "gaussian model: rho must lie in [0, 1]");
        return JointModel(GaussianParams{d, rho});
    }

    static JointModel bernoulli(std::size_t d, double q, double rho) {
        require(d >= 1, "bernoulli model: d must be >= 1");
        (void)bernoulli_pair_table(q, rho);  // validates q and rho
        return JointModel(BernoulliParams{d, q, rho});
    }

    static JointModel discrete(JointTable joint) {
        (void)validate_joint(joint);
        return JointModel(DiscreteParams{std::move(joint)});
    }

    const Params& params() const noexcept { return params_; }
    bool is_gaussian() const noexcept { return std::holds_alternative<GaussianParams>(params_); }
    bool is_bernoulli() const noexcept { return std::holds_alternative<BernoulliParams>(params_); }
    bool is_discrete() const noexcept { return std::holds_alternative<DiscreteParams>(params_); }

    std::string kind() const {
        return std::visit(
            [](const auto& p) -> std::string {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, GaussianParams>) return "gaussian";
                else if constexpr (std::is_same_v<T, BernoulliParams>) return "bernoulli";
                else return "discrete";
            },
            params_);
    }

    /// Dimension of a single X (or Y) point.
    std::size_t dim() const {
        if (auto* g = std::get_if<GaussianParams>(&params_)) return g->d;
        if (auto* b = std::get_if<BernoulliParams>(&params_)) return b->d;
        return 1;
    }

    /// True when P_X = P_Y (required by the Wasserstein test).
    bool identical_marginals() const {
        if (auto* dp = std::get_if<DiscreteParams>(&params_)) {
            if (dp->joint.rows() != dp->joint.cols()) return false;
            const Marginals m = validate_joint(dp->joint);
            return (m.x - m.y).cwiseAbs().maxCoeff() <= 1e-12;
        }
        return true;
    }

    /// Leading r singular pairs. r = 0 selects a default: d for the Gaussian
    /// and Bernoulli models, the full rank for a discrete table.
    Spectrum spectrum(std::size_t r = 0) const {
        return std::visit(
            [r](const auto& p) -> Spectrum {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, GaussianParams>) {
                    return gaussian_spectrum(p.d, p.rho, r == 0 ? p.d : r);
                } else if constexpr (std::is_same_v<T, BernoulliParams>) {
                    return bernoulli_spectrum(p.d, p.q, p.rho, r == 0 ? p.d : r);
                } else {
                    Spectrum s = discrete_spectrum(p.joint);
                    return r == 0 || r >= s.truncation_rank() ? s : s.truncated(r);
                }
            },
            params_);
    }

    /// Full spectral value multiset, truncated at lambda^2 < tol when infinite.
    SpectralValues spectral_values(double tol = 1e-14) const {
        SpectralValues out;
        if (auto* g = std::get_if<GaussianParams>(&params_)) {
            require(g->rho < 1.0, "spectral values of the Gaussian model need rho < 1");
            out.truncation = tol;
            if (g->rho == 0.0) return out;
            // Degree j has value rho^j and C(j + d - 1, d - 1) multi-indices.
            for (unsigned j = 1;; ++j) {
                const double v = std::pow(g->rho, j);
                if (v * v < tol) break;
                out.values.push_back(v);
                out.multiplicity.push_back(binomial(j + g->d - 1, g->d - 1));
            }
        } else if (auto* b = std::get_if<BernoulliParams>(&params_)) {
            for (unsigned j = 1; j <= b->d; ++j) {
                out.values.push_back(std::pow(std::abs(b->rho), j));
                out.multiplicity.push_back(binomial(b->d, j));
            }
        } else {
            const Spectrum s = spectrum();
            out.values = s.values();
            out.multiplicity.assign(out.values.size(), 1.0);
        }
        return out;
    }

    /// I_chi2(X;Y): closed forms for Gaussian and Bernoulli, direct sum for tables.
    double chi2_information() const {
        return std::visit(
            [](const auto& p) -> double {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, GaussianParams>) {
                    if (p.rho >= 1.0) return std::numeric_limits<double>::infinity();
                    return std::pow(1.0 - p.rho * p.rho, -static_cast<double>(p.d)) - 1.0;
                } else if constexpr (std::is_same_v<T, BernoulliParams>) {
                    return std::pow(1.0 + p.rho * p.rho, static_cast<double>(p.d)) - 1.0;
                } else {
                    return broken_sample::chi2_information(p.joint);
                }
            },
            params_);
    }

    double maximal_correlation() const {
        if (auto* g = std::get_if<GaussianParams>(&params_)) return g->rho;
        if (auto* b = std::get_if<BernoulliParams>(&params_)) return std::abs(b->rho);
        return broken_sample::maximal_correlation(spectrum());
    }

    /// L(x, y) = dP_{X,Y} / d(P_X x P_Y).
    double likelihood_ratio(std::span<const double> x, std::span<const double> y) const {
        require(x.size() == dim() && y.size() == dim(), "likelihood_ratio: point dimension mismatch");
        if (auto* g = std::get_if<GaussianParams>(&params_)) {
            if (g->rho >= 1.0) throw NumericalDegeneracy("likelihood ratio is singular at rho = 1");
            double l = 1.0;
            for (std::size_t c = 0; c < g->d; ++c) l *= mehler_kernel(g->rho, x[c], y[c]);
            return l;
        }
        if (auto* b = std::get_if<BernoulliParams>(&params_)) {
            const JointTable t = bernoulli_pair_table(b->q, b->rho);
            const double px[2] = {1.0 - b->q, b->q};
            double l = 1.0;
            for (std::size_t c = 0; c < b->d; ++c) {
                const auto a = static_cast<Eigen::Index>(x[c]);
                const auto bb = static_cast<Eigen::Index>(y[c]);
                l *= t(a, bb) / (px[a] * px[bb]);
            }
            return l;
        }
        const auto& joint = std::get<DiscreteParams>(params_).joint;
        const auto i = static_cast<Eigen::Index>(x[0]);
        const auto j = static_cast<Eigen::Index>(y[0]);
        require(i >= 0 && i < joint.rows() && j >= 0 && j < joint.cols(), "likelihood_ratio: symbol outside alphabet");
        return joint(i, j) / (joint.row(i).sum() * joint.col(j).sum());
    }

    void sample_x(Rng& rng, std::span<double> out) const { sample_marginal(rng, out, true); }
    void sample_y(Rng& rng, std::span<double> out) const { sample_marginal(rng, out, false); }

    /// One draw (X, Y) ~ P_{X,Y}.
    void sample_pair(Rng& rng, std::span<double> x, std::span<double> y) const {
        if (auto* g = std::get_if<GaussianParams>(&params_)) {
            const double noise = std::sqrt(std::max(0.0, 1.0 - g->rho * g->rho));
            for (std::size_t c = 0; c < g->d; ++c) {
                x[c] = rng.normal();
                y[c] = g->rho * x[c] + noise * rng.normal();
            }
        } else if (std::holds_alternative<BernoulliParams>(params_)) {
            // Flattened cell order (0,0), (1,0), (0,1), (1,1).
            for (std::size_t c = 0; c < x.size(); ++c) {
                const std::size_t cell = pair_sampler_(rng);
                x[c] = static_cast<double>(cell & 1U);
                y[c] = static_cast<double>(cell >> 1U);
            }
        } else {
            const auto rows = static_cast<std::size_t>(std::get<DiscreteParams>(params_).joint.rows());
            const std::size_t cell = pair_sampler_(rng);
            x[0] = static_cast<double>(cell % rows);
            y[0] = static_cast<double>(cell / rows);
        }
    }

    friend bool operator==(const JointModel& a, const JointModel& b) { return a.params_ == b.params_; }

private:
    explicit JointModel(Params p) : params_(std::move(p)) {
        if (auto* b = std::get_if<BernoulliParams>(&params_)) {
            const JointTable t = bernoulli_pair_table(b->q, b->rho);
            pair_sampler_ = detail::FiniteSampler({t(0, 0), t(1, 0), t(0, 1), t(1, 1)});
        } else if (auto* dp = std::get_if<DiscreteParams>(&params_)) {
            const Marginals m = validate_joint(dp->joint);
            x_sampler_ = detail::FiniteSampler(std::vector<double>(m.x.begin(), m.x.end()));
            y_sampler_ = detail::FiniteSampler(std::vector<double>(m.y.begin(), m.y.end()));
            // Column-major flattening: cell = i + rows * j.
            pair_sampler_ = detail::FiniteSampler(
                std::vector<double>(dp->joint.data(), dp->joint.data() + dp->joint.size()));
        }
    }

    static double binomial(std::size_t n, std::size_t k) {
        return std::round(std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)));
    }

    void sample_marginal(Rng& rng, std::span<double> out, bool x_side) const {
        if (std::holds_alternative<GaussianParams>(params_)) {
            for (double& v : out) v = rng.normal();
        } else if (auto* b = std::get_if<BernoulliParams>(&params_)) {
            for (double& v : out) v = rng.uniform() < b->q ? 1.0 : 0.0;
        } else {
            out[0] = static_cast<double>(x_side ? x_sampler_(rng) : y_sampler_(rng));
        }
    }

    Params params_;
    detail::FiniteSampler x_sampler_;
    detail::FiniteSampler y_sampler_;
    detail::FiniteSampler pair_sampler_;
};

/// Tag required to read the hidden injection of a synthetic dataset.
struct DiagnosticsAccess {
    explicit DiagnosticsAccess() = default;
};

/// Two unlinked samples. Detectors only look at xs and ys.
class Dataset {
public:
    Dataset(PointSet xs, PointSet ys, Hypothesis hypothesis, std::uint64_t seed,
            std::optional<std::vector<std::size_t>> injection = std::nullopt)
        : xs(std::move(xs)), ys(std::move(ys)), hypothesis(hypothesis), seed(seed), injection_(std::move(injection)) {
        require(this->ys.size() <= this->xs.size(), "dataset: m must not exceed n");
    }

    PointSet xs;
    PointSet ys;
    Hypothesis hypothesis;
    std::uint64_t seed;

    std::size_t n() const noexcept { return xs.size(); }
    std::size_t m() const noexcept { return ys.size(); }

    const std::optional<std::vector<std::size_t>>& injection(DiagnosticsAccess) const noexcept { return injection_; }

private:
    std::optional<std::vector<std::size_t>> injection_;
};

/// Uniform injection [m] -> [n] (0-based) by a partial Fisher-Yates shuffle.
inline std::vector<std::size_t> sample_injection(std::size_t m, std::size_t n, Rng& rng) {
    require(m <= n, "sample_injection: m must not exceed n");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(perm[i], perm[j]);
    }
    perm.resize(m);
    return perm;
}

/// Draws (X_1..X_n, Y_1..Y_m). Under H1 pair i is placed at (pi(i), i) and
/// the X points outside pi([m]) are independent marginal draws.
inline Dataset sample_dataset(const JointModel& model, std::size_t n, std::size_t m, Hypothesis hypothesis,
                              std::uint64_t seed) {
    require(n >= 1, "sample_dataset: n must be >= 1");
    require(m <= n, "sample_dataset: m must not exceed n");
    const std::size_t d = model.dim();
    Rng rng = Rng::stream(seed, 0);
    PointSet xs(d, n);
    PointSet ys(d, m);
    if (hypothesis == Hypothesis::H0) {
        for (std::size_t i = 0; i < n; ++i) model.sample_x(rng, xs[i]);
        for (std::size_t i = 0; i < m; ++i) model.sample_y(rng, ys[i]);
        return Dataset(std::move(xs), std::move(ys), hypothesis, seed);
    }
    std::vector<std::size_t> pi = sample_injection(m, n, rng);
    std::vector<char> used(n, 0);
    for (std::size_t i = 0; i < m; ++i) {
        model.sample_pair(rng, xs[pi[i]], ys[i]);
        used[pi[i]] = 1;
    }
    for (std::size_t j = 0; j < n; ++j)
        if (!used[j]) model.sample_x(rng, xs[j]);
    return Dataset(std::move(xs), std::move(ys), hypothesis, seed, std::move(pi));
}

/// Seed of replicate r in a run with base seed `seed`.
inline std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t r) noexcept {
    return splitmix64(seed ^ splitmix64(r + 0x2545F4914F6CDD1DULL));
}

}  // namespace broken_sample
