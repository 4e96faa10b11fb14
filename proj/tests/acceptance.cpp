// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "broken_sample/broken_sample.hpp"
#include "oracles.hpp"

using namespace broken_sample;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out{false, ""};
    try {
        out = body();
    } catch (const std::exception& e) {
        out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str(), secs);
    std::fflush(stdout);
    if (!out.pass) ++failures;
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Outcome second_moment_exactness() {
    std::vector<JointTable> tables{bernoulli_pair_table(0.5, 0.5), bernoulli_pair_table(0.3, -0.2)};
    JointTable three(3, 3);
    three << 0.20, 0.05, 0.05, 0.02, 0.25, 0.03, 0.06, 0.04, 0.30;
    JointTable rect(2, 3);
    rect << 0.30, 0.10, 0.15, 0.05, 0.25, 0.15;
    JointTable tall(3, 2);
    tall << 0.25, 0.05, 0.10, 0.20, 0.15, 0.25;
    tables.push_back(three);
    tables.push_back(rect);
    tables.push_back(tall);
    std::size_t settings = 0;
    double worst = 0;
    for (const auto& t : tables) {
        const SpectralValues v = JointModel::discrete(t).spectral_values();
        for (std::size_t n = 1; n <= 5; ++n)
            for (std::size_t m = 1; m <= std::min<std::size_t>(n, 4); ++m) {
                const double brute = brute_force_second_moment(n, m, t);
                worst = std::max(worst, std::abs(second_moment(n, m, v).value - brute) / brute);
                ++settings;
            }
    }
    return {worst <= 1e-10, std::to_string(settings) + " settings, max relative error " + fmt("%.2e", worst)};
}

Outcome cycle_index_identity() {
    std::vector<std::vector<double>> spectra{{1.0, 0.5}, {1.0, 0.9, 0.6, 0.6, 0.2}};
    std::vector<double> gauss{1.0};
    for (const auto& idx : gaussian_multi_indices(2, 0.6, 30)) gauss.push_back(idx.value);
    spectra.push_back(gauss);
    double worst = 0;
    for (const auto& lam : spectra) {
        const auto c = a_coefficients(lam, 7);
        for (std::size_t l = 0; l <= 7; ++l)
            worst = std::max(worst, std::abs(c.a[l] - oracle::cycle_index_average(l, lam)) / c.a[l]);
    }
    return {worst <= 1e-10, "3 spectra, l <= 7, max relative error " + fmt("%.2e", worst)};
}

Outcome extension_counts() {
    std::size_t groups = 0;
    for (std::size_t n = 1; n <= 6; ++n)
        for (std::size_t m = 1; m <= std::min<std::size_t>(n, 5); ++m) {
            std::map<std::vector<std::size_t>, std::uint64_t> by_key;
            const auto all = enumerate_injections(m, n);
            for (const auto& pi : all) {
                const auto core = two_core(pi, n);
                std::vector<std::size_t> key(m, n);
                for (std::size_t i : core.core_set) key[i] = pi[i];
                ++by_key[key];
            }
            std::uint64_t total = 0;
            for (const auto& [key, count] : by_key) {
                const auto size = static_cast<std::size_t>(std::count_if(key.begin(), key.end(), [&](std::size_t v) { return v != n; }));
                if (count != count_extensions(n, m, size))
                    return {false, "n=" + std::to_string(n) + " m=" + std::to_string(m) + " group count mismatch"};
                total += count;
                ++groups;
            }
            std::uint64_t expected = 1;
            for (std::size_t f = n - m + 1; f <= n; ++f) expected *= f;
            if (total != expected || all.size() != expected)
                return {false, "n=" + std::to_string(n) + " m=" + std::to_string(m) + " total mismatch"};
        }
    return {true, std::to_string(groups) + " (core, restriction) groups match count_extensions"};
}

Outcome t_weight_normalization() {
    double worst = 0;
    for (std::size_t n = 1; n <= 500; ++n)
        for (std::size_t m = 1; m <= n; ++m) {
            const auto t = t_weights(n, m);
            worst = std::max(worst, std::abs(detail::compensated_sum(t) - 1.0));
        }
    return {worst <= 1e-12, "max |sum t - 1| = " + fmt("%.2e", worst)};
}

Outcome limit_gap_decay() {
    const std::vector<double> half{0.5};
    const LimitGap g = a_limit_gap(half, 30);
    double worst = 0;
    for (std::size_t l = 0; l <= 30; ++l) worst = std::max(worst, std::abs(g.gaps[l] - std::pow(4.0, -double(l)) / 3.0));
    std::vector<double> gauss;
    for (int k = 1; k <= 200; ++k) gauss.push_back(std::pow(0.6, k));
    const LimitGap h = a_limit_gap(gauss, 120);
    return {worst <= 1e-12 && h.decay_rate > 1.0,
            "max gap error " + fmt("%.2e", worst) + ", gaussian rho=0.6 fitted rate " + fmt("%.4f", h.decay_rate)};
}

double brute_chi2(const Eigen::MatrixXd& p) {
    const Eigen::VectorXd px = p.rowwise().sum(), py = p.colwise().sum().transpose();
    double s = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index j = 0; j < p.cols(); ++j)
            if (p(i, j) > 0) s += p(i, j) * p(i, j) / (px(i) * py(j));
    return s - 1;
}

Outcome chi2_closed_forms() {
    double worst_g = 0;
    for (double rho : {0.1, 0.2, 0.3}) {
        const double exact = 1 / (1 - rho * rho) - 1;
        worst_g = std::max(worst_g, std::abs(brute_chi2(gaussian_cell_table(rho, 2000)) - exact));
    }
    double worst_b = 0;
    for (double q : {0.5, 0.3})
        for (double rho : {-0.3, 0.2, 0.4})
            for (int d = 1; d <= 4; ++d) {
                const JointTable pair = bernoulli_pair_table(q, rho);
                Eigen::MatrixXd table = pair;
                for (int c = 1; c < d; ++c) {
                    Eigen::MatrixXd next(table.rows() * 2, table.cols() * 2);
                    for (Eigen::Index i = 0; i < table.rows(); ++i)
                        for (Eigen::Index j = 0; j < table.cols(); ++j) next.block(2 * i, 2 * j, 2, 2) = table(i, j) * pair;
                    table = next;
                }
                worst_b = std::max(worst_b, std::abs(brute_chi2(table) - (std::pow(1 + rho * rho, d) - 1)));
            }
    return {worst_g <= 1e-3 && worst_b <= 1e-12,
            "gaussian w=2000 rho in {0.1,0.2,0.3} max error " + fmt("%.2e", worst_g) + ", bernoulli d<=4 max error " +
                fmt("%.2e", worst_b)};
}

struct RunningMoments {
    double mean, var, se_mean, se_var;
};

RunningMoments moments(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double m2 = 0, m4 = 0;
    for (double x : v) {
        const double d2 = (x - mean) * (x - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    return {mean, m2, std::sqrt(m2 / n), std::sqrt(std::max(0.0, m4 - m2 * m2) / n)};
}

Outcome detector_moments() {
    const JointModel model = JointModel::gaussian(10, 0.3);
    const std::size_t n = 2000, m = 1000, r = 10, reps = 10000;
    const Spectrum spec = model.spectrum(r);
    const Spectrum top = model.spectrum(1);
    std::vector<double> inner0(reps), inner1(reps), top1(reps);
    parallel_for(reps, [&](std::size_t t) {
        const Dataset h0 = sample_dataset(model, n, m, Hypothesis::H0, replicate_seed(101, t));
        const Dataset h1 = sample_dataset(model, n, m, Hypothesis::H1, replicate_seed(102, t));
        inner0[t] = t_inner(h0, spec, r).statistic;
        inner1[t] = t_inner(h1, spec, r).statistic;
        top1[t] = t_top(h1, top).statistic;
    });
    double energy = 0;
    for (double v : spec.values()) energy += v * v;
    const double alpha = double(m) / double(n);
    const auto a = moments(inner1), b = moments(inner0), c = moments(top1);
    const double za = (a.mean - std::sqrt(alpha) * energy) / a.se_mean;
    const double zb = (b.var - energy) / b.se_var;
    const double zc = (c.mean - (2 - 2 * std::sqrt(alpha) * spec.values()[0])) / c.se_mean;
    const bool ok = std::abs(za) <= 4 && std::abs(zb) <= 4 && std::abs(zc) <= 4;
    return {ok, "z(E1 inner)=" + fmt("%.2f", za) + " z(var0 inner)=" + fmt("%.2f", zb) + " z(E1 top)=" + fmt("%.2f", zc)};
}

Outcome histogram_structure() {
    double worst_arcsin = 0;
    for (int k = 1; k <= 9; ++k) {
        const double rho = 0.1 * k;
        const HistogramModel hm = build_histogram_model(JointModel::gaussian(1, rho), 2);
        worst_arcsin = std::max(worst_arcsin, std::abs(hm.mu[0] - 2 * std::asin(rho) / std::numbers::pi));
    }
    JointTable t(3, 4);
    t << 0.10, 0.05, 0.02, 0.08, 0.03, 0.20, 0.07, 0.05, 0.09, 0.01, 0.25, 0.05;
    std::vector<JointModel> models{JointModel::gaussian(1, 0.3), JointModel::gaussian(1, 0.9), JointModel::gaussian(2, 0.5),
                                   JointModel::bernoulli(2, 0.3, 0.6), JointModel::discrete(t)};
    double worst_orth = 0, worst_sum = 0;
    for (const auto& model : models)
        for (std::size_t w : {2U, 4U, 10U, 32U}) {
            if (model.dim() == 2 && w > 32) continue;
            const HistogramModel hm = build_histogram_model(model, w);
            worst_orth = std::max({worst_orth, (hm.C.transpose() * hm.gamma).norm(), (hm.C * hm.beta).norm()});
            double s = 0;
            for (double v : hm.mu) s += v * v;
            worst_sum = std::max(worst_sum, std::abs(s - brute_chi2(hm.joint)));
        }
    bool nested = true;
    for (double rho : {0.3, 0.6, 0.9}) {
        double prev = -1;
        for (std::size_t w = 2; w <= 256; w *= 2) {
            const HistogramModel hm = build_histogram_model(JointModel::gaussian(1, rho), w);
            double s = 0;
            for (double v : hm.mu) s += v * v;
            if (s < prev - 1e-12) nested = false;
            prev = s;
        }
    }
    const bool ok = worst_arcsin <= 1e-9 && worst_orth <= 1e-10 && worst_sum <= 1e-10 && nested;
    return {ok, "arcsine error " + fmt("%.2e", worst_arcsin) + ", |C^T gamma|,|C beta| <= " + fmt("%.2e", worst_orth) +
                    ", |sum mu^2 - chi2| <= " + fmt("%.2e", worst_sum) + (nested ? ", nested w=2..256 non-decreasing" : ", NOT monotone")};
}

Outcome limit_law_convergence() {
    const JointModel model = JointModel::gaussian(1, 0.9);
    const std::size_t n = 100000, r = 10, reps = 5000;
    const Spectrum spec = model.spectrum(r);
    std::vector<double> stats(reps);
    parallel_for(reps, [&](std::size_t t) {
        stats[t] = t_eigen(sample_dataset(model, n, n, Hypothesis::H0, replicate_seed(202, t)), spec, r).statistic;
    });
    const auto law = sample_xi_r(spec.values(), 1.0, r, 1000000, 203, Hypothesis::H0);
    const double ks = ks_two_sample(stats, law.draws);
    return {ks < 0.02, "KS(T_eigen null, xi_r) = " + fmt("%.4f", ks) + " with 5000 vs 1e6 draws"};
}

Outcome figure_two() {
    const std::size_t draws = 1000000;
    const std::uint64_t seed = 303;
    std::size_t violations = 0, checks = 0;
    std::string worst;
    double worst_z = 0;
    for (double rho : default_rho_grid()) {
        const JointModel model = JointModel::gaussian(1, rho);
        const std::vector<double> lam = model.spectrum(10).values();
        std::vector<double> power(11);
        for (std::size_t r = 1; r <= 10; ++r)
            power[r] = limit_power(sample_xi_r(lam, 1.0, r, draws, seed, Hypothesis::H0),
                                   sample_xi_r(lam, 1.0, r, draws, seed, Hypothesis::H1), 0.05);
        const double full = limit_power(sample_xi(model, 1.0, draws, seed, 1e-14, Hypothesis::H0),
                                        sample_xi(model, 1.0, draws, seed, 1e-14, Hypothesis::H1), 0.05);
        auto check = [&](double hi, double lo, const std::string& what) {
            const double se = std::hypot(binomial_stderr(hi, draws), binomial_stderr(lo, draws));
            const double z = (lo - hi) / std::max(se, 1e-300);
            ++checks;
            if (z > worst_z) {
                worst_z = z;
                worst = what + " at rho=" + fmt("%.4f", rho);
            }
            if (lo > hi + 2 * se) ++violations;
        };
        check(full, power[10], "xi vs xi_10");
        for (std::size_t r = 2; r <= 10; ++r) check(power[r], power[r - 1], "xi_" + std::to_string(r) + " vs xi_" + std::to_string(r - 1));
    }
    const JointModel model = JointModel::gaussian(1, 0.99);
    const double means = limit_power(detector_limit_law({"means"}, model, 0.5, Hypothesis::H0, draws, seed),
                                     detector_limit_law({"means"}, model, 0.5, Hypothesis::H1, draws, seed), 0.05);
    const double eigen = limit_power(detector_limit_law({"eigen", 10}, model, 0.5, Hypothesis::H0, draws, seed),
                                     detector_limit_law({"eigen", 10}, model, 0.5, Hypothesis::H1, draws, seed), 0.05);
    const bool ok = violations == 0 && means < eigen - 0.05;
    return {ok, std::to_string(checks) + " orderings, " + std::to_string(violations) + " beyond 2 sigma (largest z " +
                    fmt("%.2f", worst_z) + ", " + worst + "); alpha=0.5 rho=0.99 power means " + fmt("%.4f", means) +
                    " vs eigen(r=10) " + fmt("%.4f", eigen)};
}

Outcome wasserstein_sanity() {
    bool zero = true;
    for (std::size_t d : {1U, 2U})
        for (int p : {1, 2}) {
            const Dataset same = sample_dataset(JointModel::gaussian(d, 1.0), 60, 60, Hypothesis::H1, 7 + d);
            zero = zero && wasserstein_test(same, p).statistic == 0.0;
        }
    double worst = 0;
    Rng rng(404);
    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t n = 1 + rng.below(6);
        const Dataset ds = sample_dataset(JointModel::gaussian(2, 0.4), n, n, Hypothesis::H1, 5000 + inst);
        Eigen::MatrixXd cost(n, n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i)
                cost(j, i) = std::hypot(ds.xs[i][0] - ds.ys[j][0], ds.xs[i][1] - ds.ys[j][1]);
        worst = std::max(worst, std::abs(hungarian(cost).cost - oracle::brute_force_assignment(cost)));
    }
    ExperimentConfig c;
    c.n = c.m = 1000;
    c.detectors = {{"wasserstein", 0, 0, 1}};
    c.rho_grid = default_rho_grid();
    c.fpr_grid = default_fpr_grid();
    c.replicates = 1000;
    c.seed = 405;
    std::vector<CurvePoint> pts;
    for (const auto& p : run_power_sweep(c))
        if (p.detector == "wasserstein") pts.push_back(p);
    std::size_t drops = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (pts[i].power < pts[i - 1].power - 2 * std::hypot(pts[i].power_stderr, pts[i - 1].power_stderr)) ++drops;
    const bool ok = zero && worst <= 1e-12 && drops == 0;
    return {ok, std::string(zero ? "W_p = 0 at rho=1" : "W_p != 0 at rho=1") + ", hungarian vs brute force max error " +
                    fmt("%.2e", worst) + ", power n=1000 from " + fmt("%.3f", pts.front().power) + " to " +
                    fmt("%.3f", pts.back().power) + " with " + std::to_string(drops) + " drops beyond 2 sigma"};
}

}  // namespace

int main() {
    criterion("second-moment exactness", second_moment_exactness);
    criterion("cycle-index identity", cycle_index_identity);
    criterion("extension counts", extension_counts);
    criterion("t-weight normalization", t_weight_normalization);
    criterion("a_l limit decay", limit_gap_decay);
    criterion("chi-square closed forms", chi2_closed_forms);
    criterion("detector moment identities", detector_moments);
    criterion("histogram structure", histogram_structure);
    criterion("limit-law convergence", limit_law_convergence);
    criterion("power ordering of xi_r and means vs eigen", figure_two);
    criterion("wasserstein sanity", wasserstein_sanity);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
