#pragma once

// Limit laws of the detector statistics, threshold calibration and
// asymptotic power. All laws are delivered as Monte-Carlo draws.
//
// With s_k = sqrt(alpha) lambda_k the log-likelihood-ratio limit is
//   H0: xi = -1/2 sum_k [ s_k/(1-s_k) U_k^2 - s_k/(1+s_k) V_k^2 + log(1 - s_k^2) ]
//   H1:      -1/2 sum_k [ s_k U_k^2 - s_k V_k^2 + log(1 - s_k^2) ]
// with independent standard normals U_k, V_k. Draw j of a law uses the stream
// (seed, j) and consumes U_1, V_1, U_2, V_2, ... in order, so laws that share a
// seed and a spectrum prefix are coupled draw by draw.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <boost/random/chi_squared_distribution.hpp>

#include "broken_sample/detectors.hpp"
#include "broken_sample/errors.hpp"
#include "broken_sample/histogram.hpp"
#include "broken_sample/models.hpp"
#include "broken_sample/parallel.hpp"
#include "broken_sample/rng.hpp"

namespace broken_sample {

struct LimitLawSample {
    std::vector<double> draws;
    std::string law;  // xi, xi_r, hist, qda2d, top, inner, trivial, finite_n
    std::map<std::string, double> params;
    std::uint64_t seed = 0;
    Hypothesis hypothesis = Hypothesis::H0;
    bool reject_below = false;

    std::size_t count() const noexcept { return draws.size(); }
};

/// Minimum number of draws for calibrating against a limit law.
inline constexpr std::size_t kMinCalibrationDraws = 10000;

namespace detail {

inline std::uint64_t hypothesis_lane(Hypothesis h) { return h == Hypothesis::H0 ? 0 : 1; }

struct XiTerm {
    double s;
    double multiplicity;
};

/// Fills draws with const + sum_k (a_k U_k^2 + b_k V_k^2) where U^2, V^2 are
/// chi-square with the term's multiplicity (a single squared normal when it is 1).
inline void sample_chi2_mixture(std::vector<double>& draws, const std::vector<XiTerm>& terms,
                                const std::vector<double>& a, const std::vector<double>& b, double constant,
                                std::uint64_t seed, std::uint64_t lane, std::size_t workers) {
    constexpr std::size_t block = 4096;
    const std::size_t blocks = (draws.size() + block - 1) / block;
    parallel_for(
        blocks,
        [&](std::size_t blk) {
            const std::size_t end = std::min(draws.size(), (blk + 1) * block);
            for (std::size_t j = blk * block; j < end; ++j) {
                Rng rng = Rng::stream(seed, j, lane);
                double x = constant;
                for (std::size_t k = 0; k < terms.size(); ++k) {
                    double u2, v2;
                    if (terms[k].multiplicity == 1.0) {
                        const double u = rng.normal();
                        const double v = rng.normal();
                        u2 = u * u;
                        v2 = v * v;
                    } else {
                        boost::random::chi_squared_distribution<double> chi(terms[k].multiplicity);
                        u2 = chi(rng);
                        v2 = chi(rng);
                    }
                    x += a[k] * u2 + b[k] * v2;
                }
                draws[j] = x;
            }
        },
        workers);
}

inline void check_correlations(const std::vector<double>& lambdas, double alpha) {
    require(alpha > 0.0 && alpha <= 1.0, "limit law: alpha must lie in (0, 1]");
    for (double lam : lambdas) {
        require(lam >= 0.0, "limit law: singular values must be non-negative");
        if (std::sqrt(alpha) * lam >= 1.0)
            throw NumericalDegeneracy("limit law is degenerate: sqrt(alpha) * lambda_1 >= 1");
    }
}

inline LimitLawSample xi_from_terms(const std::vector<XiTerm>& random_terms, double log_constant,
                                    std::size_t count, std::uint64_t seed, Hypothesis h, std::size_t workers) {
    std::vector<double> a, b;
    for (const auto& t : random_terms) {
        if (h == Hypothesis::H0) {
            a.push_back(-0.5 * t.s / (1.0 - t.s));
            b.push_back(0.5 * t.s / (1.0 + t.s));
        } else {
            a.push_back(-0.5 * t.s);
            b.push_back(0.5 * t.s);
        }
    }
    LimitLawSample out;
    out.draws.resize(count);
    out.seed = seed;
    out.hypothesis = h;
    sample_chi2_mixture(out.draws, random_terms, a, b, log_constant, seed, hypothesis_lane(h), workers);
    return out;
}

}  // namespace detail

/// xi for a spectrum given with multiplicities. Random terms are kept while
/// lambda^2 >= tail_tol; the deterministic log terms use every listed value.
/// params["tail_bound"] bounds E|.| of the discarded random terms.
inline LimitLawSample sample_xi(const SpectralValues& values, double alpha, std::size_t count, std::uint64_t seed,
                                double tail_tol = 1e-14, Hypothesis h = Hypothesis::H0, std::size_t workers = 0) {
    detail::check_correlations(values.values, alpha);
    std::vector<detail::XiTerm> terms;
    double log_constant = 0.0;
    double tail_bound = 0.0;
    std::size_t kept = 0;
    for (std::size_t k = 0; k < values.values.size(); ++k) {
        const double lam = values.values[k];
        const double mult = values.multiplicity.empty() ? 1.0 : values.multiplicity[k];
        const double s = std::sqrt(alpha) * lam;
        if (s == 0.0) continue;
        log_constant += -0.5 * mult * std::log1p(-s * s);
        if (lam * lam >= tail_tol) {
            terms.push_back({s, mult});
            kept += static_cast<std::size_t>(mult);
        } else {
            tail_bound += mult * s / (1.0 - s * s);
        }
    }
    LimitLawSample out = detail::xi_from_terms(terms, log_constant, count, seed, h, workers);
    out.law = "xi";
    out.params = {{"alpha", alpha}, {"tail_tol", tail_tol}, {"terms", double(kept)}, {"tail_bound", tail_bound}};
    return out;
}

/// xi of a model's full spectrum. The log terms extend down to lambda^2 = 1e-16.
inline LimitLawSample sample_xi(const JointModel& model, double alpha, std::size_t count, std::uint64_t seed,
                                double tail_tol = 1e-14, Hypothesis h = Hypothesis::H0, std::size_t workers = 0) {
    return sample_xi(model.spectral_values(std::min(tail_tol, 1e-16)), alpha, count, seed, tail_tol, h, workers);
}

/// Exact first-r truncation xi_r; lambdas are lambda_1, lambda_2, ... (one per pair).
inline LimitLawSample sample_xi_r(std::span<const double> lambdas, double alpha, std::size_t r, std::size_t count,
                                  std::uint64_t seed, Hypothesis h = Hypothesis::H0, std::size_t workers = 0) {
    require(r <= lambdas.size(), "sample_xi_r: r exceeds the number of singular values");
    const std::vector<double> head(lambdas.begin(), lambdas.begin() + static_cast<std::ptrdiff_t>(r));
    detail::check_correlations(head, alpha);
    std::vector<detail::XiTerm> terms;
    double log_constant = 0.0;
    for (double lam : head) {
        const double s = std::sqrt(alpha) * lam;
        terms.push_back({s, 1.0});
        log_constant += -0.5 * std::log1p(-s * s);
    }
    LimitLawSample out = detail::xi_from_terms(terms, log_constant, count, seed, h, workers);
    out.law = "xi_r";
    out.params = {{"alpha", alpha}, {"r", double(r)}};
    return out;
}

/// Draws of the QDA statistic with (Phi_k, Psi_k) ~ N(0, [[1, c_k],[c_k, 1]]),
/// c_k = s_k under H1 and 0 under H0, evaluated through qda_statistic.
inline LimitLawSample sample_qda_law(std::span<const double> s, std::size_t count, std::uint64_t seed, Hypothesis h,
                                     std::size_t workers = 0) {
    for (double v : s)
        if (!(std::abs(v) < 1.0)) throw NumericalDegeneracy("QDA law: Sigma is singular when a correlation reaches 1");
    LimitLawSample out;
    out.law = "qda2d";
    out.seed = seed;
    out.hypothesis = h;
    out.draws.resize(count);
    const std::vector<double> sv(s.begin(), s.end());
    constexpr std::size_t block = 4096;
    parallel_for(
        (count + block - 1) / block,
        [&](std::size_t blk) {
            std::vector<double> phi(sv.size()), psi(sv.size());
            const std::size_t end = std::min(count, (blk + 1) * block);
            for (std::size_t j = blk * block; j < end; ++j) {
                Rng rng = Rng::stream(seed, j, 2 + detail::hypothesis_lane(h));
                for (std::size_t k = 0; k < sv.size(); ++k) {
                    const double c = h == Hypothesis::H1 ? sv[k] : 0.0;
                    phi[k] = rng.normal();
                    psi[k] = c * phi[k] + std::sqrt(1.0 - c * c) * rng.normal();
                }
                out.draws[j] = qda_statistic(sv, phi, psi);
            }
        },
        workers);
    out.params = {{"pairs", double(sv.size())}};
    return out;
}

namespace detail {

/// Sorted copy with the detector convention, for repeated quantile queries.
inline std::vector<double> sorted_draws(const LimitLawSample& law) {
    std::vector<double> v = law.draws;
    std::sort(v.begin(), v.end());
    return v;
}

inline double threshold_from_sorted(const std::vector<double>& sorted, double type1, bool reject_below) {
    require(!sorted.empty(), "calibrate_threshold: the law has no draws");
    require(type1 > 0.0 && type1 < 1.0, "calibrate_threshold: type1 must lie in (0, 1)");
    const double n = static_cast<double>(sorted.size());
    if (reject_below) {
        const auto idx = static_cast<std::size_t>(std::floor(type1 * n));
        return sorted[std::min(idx, sorted.size() - 1)];
    }
    const auto k = static_cast<std::size_t>(std::ceil((1.0 - type1) * n - 1e-9));
    return sorted[std::clamp<std::size_t>(k, 1, sorted.size()) - 1];
}

inline double rejection_rate_sorted(const std::vector<double>& sorted, double threshold, bool reject_below) {
    if (sorted.empty()) return 0.0;
    const double n = static_cast<double>(sorted.size());
    if (reject_below)
        return static_cast<double>(std::lower_bound(sorted.begin(), sorted.end(), threshold) - sorted.begin()) / n;
    return static_cast<double>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), threshold)) / n;
}

}  // namespace detail

/// Empirical (1 - type1)-quantile of a null law (type1-quantile for detectors
/// that reject below). Reject-above detectors reject when statistic > threshold,
/// reject-below ones when statistic < threshold.
inline double calibrate_threshold(const LimitLawSample& law, double type1) {
    if (law.law != "finite_n")
        require(law.count() >= kMinCalibrationDraws, "calibrate_threshold: a limit law needs at least 10^4 draws");
    return detail::threshold_from_sorted(detail::sorted_draws(law), type1, law.reject_below);
}

/// Fraction of draws on the rejection side of a threshold.
inline double rejection_rate(const LimitLawSample& law, double threshold) {
    std::size_t hits = 0;
    for (double x : law.draws) hits += law.reject_below ? x < threshold : x > threshold;
    return law.draws.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(law.draws.size());
}

inline double limit_power(const LimitLawSample& law0, const LimitLawSample& law1, double type1) {
    require(law0.reject_below == law1.reject_below, "limit_power: the laws use different rejection conventions");
    return rejection_rate(law1, calibrate_threshold(law0, type1));
}

/// Two-sample Kolmogorov-Smirnov distance.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    require(!a.empty() && !b.empty(), "ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

/// Singular values fed to a spectral detector's limit law: the first r of the
/// model spectrum for eigen and inner, lambda_1 for top, rho repeated d times for means.
inline std::vector<double> detector_lambdas(const DetectorSpec& spec, const JointModel& model) {
    if (spec.kind == "means") {
        const auto* g = std::get_if<GaussianParams>(&model.params());
        require(g != nullptr, "the means detector needs a gaussian model");
        return std::vector<double>(g->d, g->rho);
    }
    if (spec.kind == "top") return model.spectrum(1).values();
    if (spec.kind == "eigen" || spec.kind == "inner") {
        const Spectrum s = model.spectrum(spec.r);
        require(s.truncation_rank() >= spec.r, "detector r exceeds the rank of the model spectrum");
        return s.values();
    }
    throw InvalidInput("detector " + spec.kind + " has no spectral parameters");
}

/// Limit law of a detector statistic under H0 or H1 at sample ratio alpha.
/// eigen, means and hist use the xi_r representation (coupled across r by the
/// shared seed), lr uses xi, top and inner their Gaussian limits, trivial a
/// uniform. wasserstein has no limit law.
inline LimitLawSample detector_limit_law(const DetectorSpec& spec, const JointModel& model, double alpha,
                                         Hypothesis h, std::size_t count, std::uint64_t seed,
                                         double tail_tol = 1e-14, std::size_t workers = 0) {
    LimitLawSample out;
    if (spec.kind == "lr") {
        out = sample_xi(model, alpha, count, seed, tail_tol, h, workers);
    } else if (spec.kind == "eigen" || spec.kind == "means") {
        const auto lambdas = detector_lambdas(spec, model);
        out = sample_xi_r(lambdas, alpha, lambdas.size(), count, seed, h, workers);
    } else if (spec.kind == "hist") {
        const HistogramModel hm = build_histogram_model(model, spec.w);
        const std::size_t k = hm.mu.size() - 1;
        if (k >= 1 && std::sqrt(alpha) * hm.mu[0] >= 1.0 - 1e-12) {
            // Case I: |s~_1 - t~_1| is |N(0, 2)| under H0 and 0 under H1.
            out.law = "hist";
            out.reject_below = true;
            out.draws.resize(count);
            for (std::size_t j = 0; j < count; ++j)
                out.draws[j] = h == Hypothesis::H1 ? 0.0 : std::abs(std::sqrt(2.0) * Rng::stream(seed, j, 4).normal());
        } else {
            out = sample_xi_r(std::span<const double>(hm.mu.data(), k), alpha, k, count, seed, h, workers);
        }
        out.params["w"] = double(spec.w);
    } else if (spec.kind == "top") {
        const double s = std::sqrt(alpha) * detector_lambdas(spec, model)[0];
        if (s > 1.0) throw NumericalDegeneracy("top limit law: sqrt(alpha) * lambda_1 > 1");
        const double scale = h == Hypothesis::H0 ? 2.0 : 2.0 - 2.0 * s;
        out.draws.resize(count);
        for (std::size_t j = 0; j < count; ++j) {
            const double z = Rng::stream(seed, j, 5 + detail::hypothesis_lane(h)).normal();
            out.draws[j] = scale * z * z;
        }
        out.reject_below = true;
    } else if (spec.kind == "inner") {
        const auto lambdas = detector_lambdas(spec, model);
        out.draws.resize(count);
        for (std::size_t j = 0; j < count; ++j) {
            Rng rng = Rng::stream(seed, j, 7 + detail::hypothesis_lane(h));
            double x = 0.0;
            for (double lam : lambdas) {
                const double c = h == Hypothesis::H1 ? std::min(1.0, std::sqrt(alpha) * lam) : 0.0;
                const double phi = rng.normal();
                const double psi = c * phi + std::sqrt(1.0 - c * c) * rng.normal();
                x += lam * phi * psi;
            }
            out.draws[j] = x;
        }
    } else if (spec.kind == "trivial") {
        out.draws.resize(count);
        for (std::size_t j = 0; j < count; ++j) out.draws[j] = Rng::stream(seed, j, 9 + detail::hypothesis_lane(h)).uniform();
        out.reject_below = true;
    } else {
        throw InvalidInput("detector " + spec.kind + " has no limit law");
    }
    out.law = spec.kind == "lr" ? "xi" : spec.label();
    out.seed = seed;
    out.hypothesis = h;
    out.reject_below = spec.rejects_below() || out.reject_below;
    out.params["alpha"] = alpha;
    return out;
}

/// H1 limit of a detector statistic drawn by the direct route: for eigen,
/// means and hist, (Phi, Psi) ~ N(0, Sigma_2r) evaluated through the QDA
/// form; the other detectors defer to detector_limit_law.
inline LimitLawSample h1_limit_law(const DetectorSpec& spec, const JointModel& model, double alpha, std::size_t count,
                                   std::uint64_t seed, std::size_t workers = 0) {
    std::vector<double> s;
    if (spec.kind == "eigen" || spec.kind == "means") {
        for (double lam : detector_lambdas(spec, model)) s.push_back(std::sqrt(alpha) * lam);
    } else if (spec.kind == "hist") {
        const HistogramModel hm = build_histogram_model(model, spec.w);
        for (std::size_t k = 0; k + 1 < hm.mu.size(); ++k) s.push_back(std::sqrt(alpha) * hm.mu[k]);
    } else {
        return detector_limit_law(spec, model, alpha, Hypothesis::H1, count, seed, 1e-14, workers);
    }
    for (double v : s)
        if (v >= 1.0) throw NumericalDegeneracy("h1_limit_law: Sigma is singular when sqrt(alpha) * lambda_k = 1");
    LimitLawSample out = sample_qda_law(s, count, seed, Hypothesis::H1, workers);
    out.law = spec.label();
    out.params["alpha"] = alpha;
    return out;
}

}  // namespace broken_sample
