#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "broken_sample/asymptotics.hpp"

using namespace broken_sample;

namespace {

struct Summary {
    double mean, se;
};

Summary summarize(const std::vector<double>& v) {
    double s = 0, s2 = 0;
    for (double x : v) {
        s += x;
        s2 += x * x;
    }
    const double n = static_cast<double>(v.size());
    const double mean = s / n;
    return {mean, std::sqrt(std::max(0.0, s2 / n - mean * mean) / n)};
}

std::vector<double> geometric(double rho, std::size_t r) {
    std::vector<double> v(r);
    for (std::size_t k = 0; k < r; ++k) v[k] = std::pow(rho, double(k + 1));
    return v;
}

}  // namespace

TEST(Xi, ZeroSpectrumGivesZero) {
    const std::vector<double> zeros(4, 0.0);
    for (Hypothesis h : {Hypothesis::H0, Hypothesis::H1}) {
        const auto law = sample_xi_r(zeros, 1.0, 4, 1000, 1, h);
        for (double x : law.draws) EXPECT_EQ(x, 0.0);
    }
    const auto full = sample_xi(JointModel::gaussian(2, 0.0), 0.5, 1000, 1);
    for (double x : full.draws) EXPECT_EQ(x, 0.0);
}

TEST(Xi, MeansMatchClosedForms) {
    const std::vector<double> lam = geometric(0.7, 6);
    const double alpha = 0.6;
    double mean0 = 0, mean1 = 0;
    for (double l : lam) {
        const double s = std::sqrt(alpha) * l;
        mean0 += -0.5 * (2 * s * s / (1 - s * s) + std::log(1 - s * s));
        mean1 += -0.5 * std::log(1 - s * s);
    }
    const Summary a = summarize(sample_xi_r(lam, alpha, 6, 200000, 2, Hypothesis::H0).draws);
    const Summary b = summarize(sample_xi_r(lam, alpha, 6, 200000, 2, Hypothesis::H1).draws);
    EXPECT_LE(std::abs(a.mean - mean0), 4 * a.se);
    EXPECT_LE(std::abs(b.mean - mean1), 4 * b.se);
    EXPECT_LT(mean0, 0.0);
    EXPECT_GT(mean1, 0.0);
}

TEST(Xi, MultiplicityMatchesRepeatedTerms) {
    // Gaussian d = 2: lambda = rho^j with multiplicity j + 1.
    const JointModel model = JointModel::gaussian(2, 0.6);
    const SpectralValues sv = model.spectral_values(1e-16);
    double mean0 = 0;
    for (std::size_t k = 0; k < sv.values.size(); ++k) {
        const double s = sv.values[k];
        mean0 += -0.5 * sv.multiplicity[k] * (2 * s * s / (1 - s * s) + std::log(1 - s * s));
    }
    const auto law = sample_xi(model, 1.0, 200000, 3);
    const Summary a = summarize(law.draws);
    EXPECT_LE(std::abs(a.mean - mean0), 4 * a.se);
    EXPECT_EQ(law.law, "xi");
    EXPECT_GT(law.params.at("terms"), 10.0);
}

TEST(Xi, TruncationsConverge) {
    const JointModel model = JointModel::gaussian(1, 0.5);
    const std::vector<double> lam = geometric(0.5, 40);
    const auto x10 = sample_xi_r(lam, 1.0, 10, 200000, 11);
    const auto x40 = sample_xi_r(lam, 1.0, 40, 200000, 12);
    const auto xi = sample_xi(model, 1.0, 200000, 13);
    EXPECT_LT(ks_two_sample(x10.draws, x40.draws), 0.01);
    EXPECT_LT(ks_two_sample(x40.draws, xi.draws), 0.01);
}

TEST(Xi, ReproducibleAcrossWorkerCounts) {
    const std::vector<double> lam = geometric(0.8, 5);
    const auto a = sample_xi_r(lam, 0.5, 5, 20000, 9, Hypothesis::H1, 1);
    const auto b = sample_xi_r(lam, 0.5, 5, 20000, 9, Hypothesis::H1, 3);
    EXPECT_EQ(a.draws, b.draws);
    const auto c = sample_qda_law(lam, 10000, 9, Hypothesis::H0, 1);
    const auto d = sample_qda_law(lam, 10000, 9, Hypothesis::H0, 4);
    EXPECT_EQ(c.draws, d.draws);
}

TEST(Xi, RejectsInadmissibleCorrelations) {
    const std::vector<double> one{1.0};
    EXPECT_THROW(sample_xi_r(one, 1.0, 1, 10, 1), NumericalDegeneracy);
    EXPECT_THROW(sample_qda_law(one, 10, 1, Hypothesis::H1), NumericalDegeneracy);
    EXPECT_THROW(sample_xi_r(one, 1.0, 2, 10, 1), InvalidInput);
}

TEST(Calibration, NormalQuantile) {
    LimitLawSample law;
    law.law = "normal";
    law.draws.resize(200000);
    for (std::size_t j = 0; j < law.draws.size(); ++j) law.draws[j] = Rng::stream(21, j).normal();
    EXPECT_NEAR(calibrate_threshold(law, 0.05), 1.6449, 0.02);
    law.reject_below = true;
    EXPECT_NEAR(calibrate_threshold(law, 0.05), -1.6449, 0.02);
}

TEST(Calibration, DegenerateLawAndDrawFloor) {
    LimitLawSample law;
    law.law = "xi";
    law.draws.assign(20000, 0.0);
    EXPECT_EQ(calibrate_threshold(law, 0.05), 0.0);
    EXPECT_EQ(rejection_rate(law, 0.0), 0.0);
    law.draws.resize(100);
    EXPECT_THROW(calibrate_threshold(law, 0.05), InvalidInput);
    law.law = "finite_n";
    EXPECT_NO_THROW(calibrate_threshold(law, 0.05));
    EXPECT_THROW(calibrate_threshold(law, 1.5), InvalidInput);
}

TEST(Calibration, IdenticalLawsGiveType1Power) {
    const std::vector<double> lam = geometric(0.6, 3);
    const auto law = sample_xi_r(lam, 1.0, 3, 50000, 4, Hypothesis::H0);
    for (double t : {0.01, 0.05, 0.2}) EXPECT_NEAR(limit_power(law, law, t), t, 1e-4);
    const JointModel model = JointModel::gaussian(1, 0.9);
    const DetectorSpec trivial{"trivial"};
    const auto t0 = detector_limit_law(trivial, model, 1.0, Hypothesis::H0, 50000, 4);
    const auto t1 = detector_limit_law(trivial, model, 1.0, Hypothesis::H1, 50000, 4);
    EXPECT_NEAR(limit_power(t0, t1, 0.05), 0.05, 0.006);
}

TEST(LimitPower, XiDominatesTruncationsAndGrowsWithType1) {
    const JointModel model = JointModel::gaussian(1, 0.8);
    const std::vector<double> lam = geometric(0.8, 20);
    const std::size_t count = 100000;
    double prev = 0;
    for (std::size_t r : {1U, 2U, 5U, 20U}) {
        const double p = limit_power(sample_xi_r(lam, 1.0, r, count, 7, Hypothesis::H0),
                                     sample_xi_r(lam, 1.0, r, count, 7, Hypothesis::H1), 0.05);
        EXPECT_GE(p, prev - 0.005) << r;
        prev = p;
    }
    const auto x0 = sample_xi(model, 1.0, count, 7, 1e-14, Hypothesis::H0);
    const auto x1 = sample_xi(model, 1.0, count, 7, 1e-14, Hypothesis::H1);
    EXPECT_GE(limit_power(x0, x1, 0.05), prev - 0.005);
    double last = 0;
    for (double t : {0.01, 0.05, 0.1, 0.3}) {
        const double p = limit_power(x0, x1, t);
        EXPECT_GE(p, last);
        last = p;
    }
}

TEST(LimitLaws, QuadraticRouteMatchesXiR) {
    const JointModel model = JointModel::gaussian(1, 0.7);
    for (const DetectorSpec& spec : {DetectorSpec{"eigen", 3}, DetectorSpec{"hist", 0, 8}}) {
        const auto direct = h1_limit_law(spec, model, 0.5, 100000, 31);
        const auto xi = detector_limit_law(spec, model, 0.5, Hypothesis::H1, 100000, 32);
        EXPECT_LT(ks_two_sample(direct.draws, xi.draws), 0.015) << spec.label();
        EXPECT_EQ(direct.law, xi.law);
    }
    const auto q0 = sample_qda_law(geometric(0.7, 3), 100000, 33, Hypothesis::H0);
    const auto x0 = sample_xi_r(geometric(0.7, 3), 1.0, 3, 100000, 34, Hypothesis::H0);
    EXPECT_LT(ks_two_sample(q0.draws, x0.draws), 0.015);
}

TEST(LimitLaws, FiniteSampleEigenStatisticFollowsXiR) {
    const JointModel model = JointModel::gaussian(1, 0.6);
    const Spectrum spec = model.spectrum(2);
    const std::size_t reps = 3000;
    for (Hypothesis h : {Hypothesis::H0, Hypothesis::H1}) {
        std::vector<double> stats(reps);
        for (std::size_t t = 0; t < reps; ++t)
            stats[t] = t_eigen(sample_dataset(model, 2000, 1000, h, replicate_seed(40, t)), spec, 2).statistic;
        const auto law = sample_xi_r(spec.values(), 0.5, 2, 100000, 41, h);
        EXPECT_LT(ks_two_sample(stats, law.draws), 0.035) << to_string(h);
    }
}

TEST(LimitLaws, TopAndInnerLimits) {
    const JointModel model = JointModel::gaussian(1, 0.6);
    const auto top1 = detector_limit_law(DetectorSpec{"top"}, model, 1.0, Hypothesis::H1, 100000, 3);
    EXPECT_TRUE(top1.reject_below);
    EXPECT_NEAR(summarize(top1.draws).mean, 2 - 2 * 0.6, 4 * summarize(top1.draws).se);
    const auto in1 = detector_limit_law(DetectorSpec{"inner", 2}, model, 1.0, Hypothesis::H1, 100000, 3);
    EXPECT_NEAR(summarize(in1.draws).mean, 0.36 + 0.36 * 0.36, 4 * summarize(in1.draws).se);
    EXPECT_THROW(detector_limit_law(DetectorSpec{"wasserstein"}, model, 1.0, Hypothesis::H0, 10, 3), InvalidInput);
}
