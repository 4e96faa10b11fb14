#pragma once

// Test statistics for the broken-sample problem. Every detector maps a dataset
// to a DetectorReport; the rejection side is fixed per detector:
//   top, wasserstein, trivial, hist (case I)  reject when statistic < threshold
//   inner, eigen, means, hist                 reject when statistic > threshold

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "broken_sample/assignment.hpp"
#include "broken_sample/errors.hpp"
#include "broken_sample/histogram.hpp"
#include "broken_sample/models.hpp"
#include "broken_sample/spectrum.hpp"

namespace broken_sample {

struct DetectorReport {
    std::string name;
    double statistic = 0.0;
    double threshold = 0.0;
    bool reject_h0 = false;
    bool reject_below = false;
    std::string threshold_source;  // "analytic", "calibrated" or "fixed"
    std::map<std::string, double> aux;
};

/// A threshold supplied by the caller instead of the detector's analytic one.
struct ThresholdOverride {
    double value = 0.0;
    std::string source = "calibrated";
};

/// Detector kind plus its parameters.
struct DetectorSpec {
    std::string kind;  // top, inner, eigen, means, hist, lr, wasserstein, trivial
    std::size_t r = 0;
    std::size_t w = 0;
    int p = 1;

    bool rejects_below() const { return kind == "top" || kind == "wasserstein" || kind == "trivial"; }

    std::string label() const {
        if (kind == "inner" || kind == "eigen") return kind + "(r=" + std::to_string(r) + ")";
        if (kind == "hist") return kind + "(w=" + std::to_string(w) + ")";
        if (kind == "wasserstein") return kind + "(p=" + std::to_string(p) + ")";
        return kind;
    }

    std::string params() const {
        if (kind == "inner" || kind == "eigen") return "r=" + std::to_string(r);
        if (kind == "hist") return "w=" + std::to_string(w);
        if (kind == "wasserstein") return "p=" + std::to_string(p);
        return "";
    }

    /// Parses "eigen", "eigen:r=10", "hist:w=100", "wasserstein:p=2". Missing
    /// parameters take the given defaults.
    static DetectorSpec parse(std::string_view text, std::size_t default_r = 10, std::size_t default_w = 100,
                              int default_p = 1) {
        DetectorSpec spec;
        spec.r = default_r;
        spec.w = default_w;
        spec.p = default_p;
        const auto colon = text.find(':');
        spec.kind = std::string(text.substr(0, colon));
        static const std::vector<std::string> kinds{"top", "inner", "eigen", "means", "hist", "lr", "wasserstein", "trivial"};
        if (std::find(kinds.begin(), kinds.end(), spec.kind) == kinds.end())
            throw InvalidInput("unknown detector '" + spec.kind + "'");
        if (colon == std::string_view::npos) return spec;
        std::string_view rest = text.substr(colon + 1);
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const std::string_view item = rest.substr(0, comma);
            const auto eq = item.find('=');
            if (eq == std::string_view::npos) throw InvalidInput("detector parameter '" + std::string(item) + "' needs key=value");
            const std::string key(item.substr(0, eq));
            const std::string value(item.substr(eq + 1));
            long long v = 0;
            try {
                std::size_t used = 0;
                v = std::stoll(value, &used);
                if (used != value.size() || v < 0) throw InvalidInput("");
            } catch (...) {
                throw InvalidInput("detector parameter " + key + " must be a non-negative integer");
            }
            if (key == "r") spec.r = static_cast<std::size_t>(v);
            else if (key == "w") spec.w = static_cast<std::size_t>(v);
            else if (key == "p") spec.p = static_cast<int>(v);
            else throw InvalidInput("unknown detector parameter '" + key + "'");
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        return spec;
    }
};

namespace detail {

inline DetectorReport decide(DetectorReport rep, double analytic, const std::optional<ThresholdOverride>& over) {
    if (over) {
        rep.threshold = over->value;
        rep.threshold_source = over->source;
    } else {
        rep.threshold = analytic;
        rep.threshold_source = "analytic";
    }
    rep.reject_h0 = rep.reject_below ? rep.statistic < rep.threshold : rep.statistic > rep.threshold;
    return rep;
}

inline double sample_ratio(const Dataset& ds) {
    require(ds.n() >= 1 && ds.m() >= 1, "detector: both samples must be non-empty");
    return static_cast<double>(ds.m()) / static_cast<double>(ds.n());
}

}  // namespace detail

/// Gaussian QDA log-likelihood ratio between N(0, [[1, s],[s, 1]]) and N(0, I),
/// summed over independent pairs (phi_k, psi_k):
///   sum_k -s^2/(2(1-s^2)) (phi^2 + psi^2) + s/(1-s^2) phi psi - log(1-s^2)/2.
inline double qda_statistic(std::span<const double> s, std::span<const double> phi, std::span<const double> psi) {
    double total = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double sk = s[k];
        if (sk == 0.0) continue;
        if (!(std::abs(sk) < 1.0)) throw NumericalDegeneracy("QDA statistic: correlation sqrt(alpha)*lambda reaches 1");
        const double one_minus = 1.0 - sk * sk;
        total += -sk * sk / (2.0 * one_minus) * (phi[k] * phi[k] + psi[k] * psi[k]) + sk / one_minus * phi[k] * psi[k] -
                 0.5 * std::log1p(-sk * sk);
    }
    return total;
}

/// T_top = (Phi_1 - Psi_1)^2. Analytic threshold sqrt(eps), eps = 1 - sqrt(m/n) lambda_1;
/// when eps = 0 the smallest positive double is used so an exact match rejects.
inline DetectorReport t_top(const Dataset& ds, const Spectrum& spectrum,
                            const std::optional<ThresholdOverride>& threshold = std::nullopt) {
    require(spectrum.truncation_rank() >= 1, "t_top: the spectrum has no non-trivial pair");
    const double alpha = detail::sample_ratio(ds);
    const double phi = spectrum.phi_embedding(ds.xs, 1)[0];
    const double psi = spectrum.psi_embedding(ds.ys, 1)[0];
    DetectorReport rep;
    rep.name = "top";
    rep.reject_below = true;
    rep.statistic = (phi - psi) * (phi - psi);
    const double eps = std::max(0.0, 1.0 - std::sqrt(alpha) * spectrum.value(1));
    rep.aux = {{"Phi_1", phi}, {"Psi_1", psi}, {"epsilon", eps}, {"lambda_1", spectrum.value(1)}};
    // eps == 0: only an exact match up to summation round-off rejects.
    const double roundoff = 1e-12 * (std::abs(phi) + std::abs(psi) + 1.0);
    return detail::decide(std::move(rep), eps > 0.0 ? std::sqrt(eps) : roundoff * roundoff, threshold);
}

/// T_inner = sum_{k<=r} lambda_k Phi_k Psi_k, the factored form of
/// (nm)^{-1/2} sum_i sum_j sum_k lambda_k phi_k(X_i) psi_k(Y_j).
/// Analytic threshold (1/2) sqrt(m/n) sum_{k<=r} lambda_k^2.
inline DetectorReport t_inner(const Dataset& ds, const Spectrum& spectrum, std::size_t r,
                              const std::optional<ThresholdOverride>& threshold = std::nullopt) {
    require(r >= 1 && r <= spectrum.truncation_rank(), "t_inner: r must lie in [1, truncation rank]");
    const double alpha = detail::sample_ratio(ds);
    const auto phi = spectrum.phi_embedding(ds.xs, r);
    const auto psi = spectrum.psi_embedding(ds.ys, r);
    DetectorReport rep;
    rep.name = "inner(r=" + std::to_string(r) + ")";
    double energy = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
        rep.statistic += spectrum.values()[k] * phi[k] * psi[k];
        energy += spectrum.values()[k] * spectrum.values()[k];
    }
    rep.aux = {{"r", double(r)}, {"chi2_r", energy}};
    return detail::decide(std::move(rep), 0.5 * std::sqrt(alpha) * energy, threshold);
}

/// QDA on (Phi_r, Psi_r) with Sigma_2r blocks [[1, s_k],[s_k, 1]], s_k = sqrt(m/n) lambda_k.
/// Analytic threshold 0.
inline DetectorReport t_eigen(const Dataset& ds, const Spectrum& spectrum, std::size_t r,
                              const std::optional<ThresholdOverride>& threshold = std::nullopt) {
    require(r <= spectrum.truncation_rank(), "t_eigen: r exceeds the truncation rank");
    const double alpha = detail::sample_ratio(ds);
    std::vector<double> s(r);
    for (std::size_t k = 0; k < r; ++k) {
        s[k] = std::sqrt(alpha) * spectrum.values()[k];
        if (s[k] >= 1.0) throw NumericalDegeneracy("t_eigen: sqrt(alpha) * lambda_k = 1 makes Sigma_2r singular");
    }
    const auto phi = spectrum.phi_embedding(ds.xs, r);
    const auto psi = spectrum.psi_embedding(ds.ys, r);
    DetectorReport rep;
    rep.name = "eigen(r=" + std::to_string(r) + ")";
    rep.statistic = qda_statistic(s, phi, psi);
    rep.aux = {{"r", double(r)}, {"alpha", alpha}};
    return detail::decide(std::move(rep), 0.0, threshold);
}

/// Sample-means QDA for the d-dimensional Gaussian model:
///   -(a rho^2)/(2(1 - a rho^2)) |Xbar - Ybar|^2 + (sqrt(a) rho)/(1 + sqrt(a) rho) <Xbar, Ybar>
///   - (d/2) log(1 - a rho^2),
/// with Xbar = n^{-1/2} sum X_i, Ybar = m^{-1/2} sum Y_j. Analytic threshold 0.
inline DetectorReport t_means(const Dataset& ds, double alpha, double rho, std::size_t d,
                              const std::optional<ThresholdOverride>& threshold = std::nullopt) {
    require(ds.xs.dim() == d && ds.ys.dim() == d, "t_means: dataset dimension differs from d");
    require(alpha > 0.0 && alpha <= 1.0, "t_means: alpha must lie in (0, 1]");
    const double s = std::sqrt(alpha) * rho;
    if (!(s * s < 1.0)) throw NumericalDegeneracy("t_means: alpha * rho^2 must be < 1");
    std::vector<double> xbar(d, 0.0), ybar(d, 0.0);
    for (std::size_t i = 0; i < ds.n(); ++i)
        for (std::size_t c = 0; c < d; ++c) xbar[c] += ds.xs[i][c];
    for (std::size_t j = 0; j < ds.m(); ++j)
        for (std::size_t c = 0; c < d; ++c) ybar[c] += ds.ys[j][c];
    double dist2 = 0.0, inner = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
        xbar[c] /= std::sqrt(static_cast<double>(ds.n()));
        ybar[c] /= std::sqrt(static_cast<double>(ds.m()));
        dist2 += (xbar[c] - ybar[c]) * (xbar[c] - ybar[c]);
        inner += xbar[c] * ybar[c];
    }
    DetectorReport rep;
    rep.name = "means";
    if (s != 0.0)
        rep.statistic = -s * s / (2.0 * (1.0 - s * s)) * dist2 + s / (1.0 + s) * inner -
                        0.5 * static_cast<double>(d) * std::log1p(-s * s);
    rep.aux = {{"alpha", alpha}, {"rho", rho}, {"d", double(d)}};
    return detail::decide(std::move(rep), 0.0, threshold);
}

/// QDA on the reduced histogram coordinates with correlations sqrt(alpha) mu_k,
/// alpha = m/n. When sqrt(alpha) mu_1 >= 1 the statistic becomes
/// |s~_1 - t~_1| and H0 is rejected when it is below 1e-9.
inline DetectorReport t_hist(const HistogramEmbedding& e, double alpha,
                             const std::optional<ThresholdOverride>& threshold = std::nullopt) {
    const HistogramModel& hm = *e.model;
    const std::size_t k = static_cast<std::size_t>(e.s_tilde.size());
    DetectorReport rep;
    rep.name = "hist(w=" + std::to_string(hm.w) + ")";
    rep.aux = {{"w", double(hm.w)}, {"cells_x", double(hm.cells_x())}, {"cells_y", double(hm.cells_y())},
               {"chi2_discretized", hm.chi2}};
    for (std::size_t i = 0; i < std::min<std::size_t>(k, 5); ++i) rep.aux["mu_" + std::to_string(i + 1)] = hm.mu[i];
    if (k >= 1 && std::sqrt(alpha) * hm.mu[0] >= 1.0 - 1e-12) {
        rep.reject_below = true;
        rep.statistic = std::abs(e.s_tilde(0) - e.t_tilde(0));
        rep.aux["case"] = 1;
        return detail::decide(std::move(rep), 1e-9, threshold);
    }
    std::vector<double> s(k);
    for (std::size_t i = 0; i < k; ++i) s[i] = std::sqrt(alpha) * hm.mu[i];
    rep.statistic = qda_statistic(s, {e.s_tilde.data(), k}, {e.t_tilde.data(), k});
    rep.aux["case"] = 2;
    return detail::decide(std::move(rep), 0.0, threshold);
}

inline DetectorReport t_hist(const Dataset& ds, const JointModel& model, std::size_t w,
                             const std::optional<ThresholdOverride>& threshold = std::nullopt) {
    return t_hist(build_histogram_embedding(ds, model, w), detail::sample_ratio(ds), threshold);
}

/// p-Wasserstein distance between the two empirical distributions. For m < n
/// the X sample is partially matched and the cost is averaged over the m
/// matched pairs. Only d = 1 supports m < n. The statistic is W_p; aux holds W_p^p.
/// The test has no analytic threshold; without one the report never rejects.
inline DetectorReport wasserstein_test(const Dataset& ds, int p,
                                       const std::optional<ThresholdOverride>& threshold = std::nullopt) {
    require(p == 1 || p == 2, "wasserstein_test: p must be 1 or 2");
    require(ds.m() >= 1, "wasserstein_test: the Y sample is empty");
    const std::size_t d = ds.xs.dim();
    double total = 0.0;
    if (d == 1) {
        total = monotone_partial_matching(ds.xs.data(), ds.ys.data(), p);
    } else {
        if (ds.m() != ds.n()) throw InvalidInput("wasserstein_test: d >= 2 with m < n is unsupported");
        const auto n = static_cast<Eigen::Index>(ds.n());
        Eigen::MatrixXd cost(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto y = ds.ys[static_cast<std::size_t>(j)];
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto x = ds.xs[static_cast<std::size_t>(i)];
                double sq = 0.0;
                for (std::size_t c = 0; c < d; ++c) sq += (x[c] - y[c]) * (x[c] - y[c]);
                cost(j, i) = p == 2 ? sq : std::sqrt(sq);
            }
        }
        total = hungarian(cost).cost;
    }
    const double wpp = total / static_cast<double>(ds.m());
    DetectorReport rep;
    rep.name = "wasserstein(p=" + std::to_string(p) + ")";
    rep.reject_below = true;
    rep.statistic = p == 2 ? std::sqrt(wpp) : wpp;
    rep.aux = {{"p", double(p)}, {"wp_p", wpp}};
    if (!threshold) {
        rep.threshold_source = "none";
        rep.threshold = 0.0;
        return rep;
    }
    return detail::decide(std::move(rep), 0.0, threshold);
}

/// Data-independent baseline: statistic U ~ Uniform(0, 1) from the dataset's
/// seed, rejected when U < type1.
inline DetectorReport trivial_test(const Dataset& ds, double type1) {
    Rng rng = Rng::stream(ds.seed, 0, 7);
    DetectorReport rep;
    rep.name = "trivial";
    rep.reject_below = true;
    rep.statistic = rng.uniform();
    return detail::decide(std::move(rep), type1, std::nullopt);
}

/// Dispatches spec.kind. `model` supplies spectra and histogram cells; the
/// means detector needs a Gaussian model.
inline DetectorReport run_detector(const DetectorSpec& spec, const Dataset& ds, const JointModel& model,
                                   const std::optional<ThresholdOverride>& threshold = std::nullopt,
                                   double type1 = 0.05) {
    if (spec.kind == "top") return t_top(ds, model.spectrum(1), threshold);
    if (spec.kind == "inner") return t_inner(ds, model.spectrum(spec.r), spec.r, threshold);
    if (spec.kind == "eigen") return t_eigen(ds, model.spectrum(spec.r), spec.r, threshold);
    if (spec.kind == "means") {
        const auto* g = std::get_if<GaussianParams>(&model.params());
        require(g != nullptr, "the means detector needs a gaussian model");
        return t_means(ds, detail::sample_ratio(ds), g->rho, g->d, threshold);
    }
    if (spec.kind == "hist") return t_hist(ds, model, spec.w, threshold);
    if (spec.kind == "wasserstein") return wasserstein_test(ds, spec.p, threshold);
    if (spec.kind == "trivial") return trivial_test(ds, type1);
    if (spec.kind == "lr") throw InvalidInput("the lr detector exists only as a limit law");
    throw InvalidInput("unknown detector '" + spec.kind + "'");
}

}  // namespace broken_sample
