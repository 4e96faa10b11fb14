#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "broken_sample/asymptotics.hpp"
#include "broken_sample/detectors.hpp"
#include "broken_sample/histogram.hpp"

using namespace broken_sample;

namespace {

double sum_sq(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return s;
}

}  // namespace

TEST(Histogram, TwoCellsGiveArcsineCorrelation) {
    for (double rho : {0.0, 0.1, 0.5, 0.9, 0.99}) {
        const HistogramModel hm = build_histogram_model(JointModel::gaussian(1, rho), 2);
        ASSERT_EQ(hm.mu.size(), 2U);
        EXPECT_NEAR(hm.mu[0], 2 * std::asin(rho) / std::numbers::pi, 1e-9) << rho;
        EXPECT_EQ(hm.mu[1], 0.0);
    }
}

TEST(Histogram, DecompositionStructure) {
    JointTable joint(3, 4);
    joint << 0.10, 0.05, 0.02, 0.08, 0.03, 0.20, 0.07, 0.05, 0.09, 0.01, 0.25, 0.05;
    const std::vector<JointModel> models{JointModel::gaussian(1, 0.6), JointModel::gaussian(2, 0.4),
                                         JointModel::bernoulli(3, 0.3, 0.5), JointModel::discrete(joint)};
    for (const auto& model : models)
        for (std::size_t w : {2U, 3U, 7U, 16U}) {
            const HistogramModel hm = build_histogram_model(model, w);
            EXPECT_LT((hm.C.transpose() * hm.gamma).norm(), 1e-10);
            EXPECT_LT((hm.C * hm.beta).norm(), 1e-10);
            EXPECT_NEAR(hm.r.sum(), 1.0, 1e-12);
            EXPECT_NEAR(sum_sq(hm.mu), hm.chi2, 1e-10);
            EXPECT_EQ(hm.mu.back(), 0.0);
            EXPECT_EQ(hm.mu.size(), std::min(hm.cells_x(), hm.cells_y()));
            for (std::size_t k = 1; k < hm.mu.size(); ++k) EXPECT_LE(hm.mu[k], hm.mu[k - 1] + 1e-15);
            const auto k = static_cast<Eigen::Index>(hm.mu.size() - 1);
            EXPECT_LT((hm.U_tilde.transpose() * hm.U_tilde - Eigen::MatrixXd::Identity(k, k)).norm(), 1e-10);
            EXPECT_LT((hm.U_tilde.transpose() * hm.gamma).norm(), 1e-10);
            EXPECT_LT((hm.V_tilde.transpose() * hm.beta).norm(), 1e-10);
            Eigen::MatrixXd diag = hm.U_tilde.transpose() * hm.C * hm.V_tilde;
            for (Eigen::Index i = 0; i < k; ++i) diag(i, i) -= hm.mu[static_cast<std::size_t>(i)];
            EXPECT_LT(diag.norm(), 1e-10);
        }
}

TEST(Histogram, NestedRefinementIncreasesChiSquare) {
    for (double rho : {0.3, 0.8}) {
        double prev = 0;
        const double full = rho * rho / (1 - rho * rho);
        for (std::size_t w = 2; w <= 32; w *= 2) {
            const double chi2 = sum_sq(build_histogram_model(JointModel::gaussian(1, rho), w).mu);
            EXPECT_GE(chi2, prev - 1e-12);
            EXPECT_LE(chi2, full + 1e-12);
            prev = chi2;
        }
    }
}

TEST(Histogram, IndependenceGivesZeroSpectrum) {
    for (const auto& model : {JointModel::gaussian(2, 0.0), JointModel::bernoulli(2, 0.4, 0.0)}) {
        const HistogramModel hm = build_histogram_model(model, 4);
        for (double v : hm.mu) EXPECT_NEAR(v, 0.0, 1e-12);
    }
}

TEST(Histogram, SymbolsShareCellsWhenMassesAreSmall) {
    Eigen::VectorXd pmf(3);
    pmf << 0.05, 0.05, 0.9;
    const AxisPartition p = symbol_quantile_partition(pmf, 4);
    EXPECT_EQ(p.cells, 2U);
    EXPECT_EQ(p.symbol_cell, (std::vector<std::size_t>{0, 0, 1}));
    Eigen::VectorXd even(4);
    even << 0.25, 0.25, 0.25, 0.25;
    EXPECT_EQ(symbol_quantile_partition(even, 4).cells, 4U);
    EXPECT_EQ(symbol_quantile_partition(even, 2).symbol_cell, (std::vector<std::size_t>{0, 0, 1, 1}));
    EXPECT_THROW(p.cell_of(3.0), InvalidInput);
}

TEST(Histogram, ProductCellsFactorize) {
    const HistogramModel one = build_histogram_model(JointModel::bernoulli(1, 0.3, 0.5), 2);
    const HistogramModel two = build_histogram_model(JointModel::bernoulli(2, 0.3, 0.5), 2);
    EXPECT_EQ(two.cells_x(), 4U);
    EXPECT_NEAR(1 + two.chi2, (1 + one.chi2) * (1 + one.chi2), 1e-12);
    EXPECT_NEAR(two.mu[0], one.mu[0], 1e-12);
    EXPECT_NEAR(two.mu[2], one.mu[0] * one.mu[0], 1e-12);
    const std::vector<double> p{1.0, 0.0};
    EXPECT_EQ(two.cell_x(p), 2U);
    EXPECT_THROW(build_histogram_model(JointModel::gaussian(2, 0.5), 64), InvalidInput);
}

TEST(Histogram, PerfectCorrelationUsesCaseOne) {
    for (std::size_t w : {2U, 4U}) {
        const JointModel model = JointModel::gaussian(1, 1.0);
        const Dataset h1 = sample_dataset(model, 200, 200, Hypothesis::H1, 8);
        const DetectorReport rep = t_hist(h1, model, w);
        EXPECT_EQ(rep.aux.at("case"), 1.0);
        EXPECT_TRUE(rep.reject_below);
        EXPECT_TRUE(rep.reject_h0);
        const Dataset h0 = sample_dataset(model, 200, 200, Hypothesis::H0, 8);
        EXPECT_FALSE(t_hist(h0, model, w).reject_h0);
    }
}

TEST(Histogram, ReducedCoordinatesHaveLimitCovariance) {
    const JointModel model = JointModel::gaussian(1, 0.7);
    const auto hm = std::make_shared<const HistogramModel>(build_histogram_model(model, 4));
    const std::size_t reps = 4000;
    double c11 = 0, c12 = 0, v1 = 0;
    for (std::size_t t = 0; t < reps; ++t) {
        const HistogramEmbedding e = embed_histogram(sample_dataset(model, 2000, 1000, Hypothesis::H1, replicate_seed(3, t)), hm);
        c11 += e.s_tilde(0) * e.t_tilde(0);
        c12 += e.s_tilde(0) * e.t_tilde(1);
        v1 += e.s_tilde(0) * e.s_tilde(0);
    }
    const double se = 4 * std::sqrt(2.0 / reps);
    EXPECT_NEAR(c11 / reps, std::sqrt(0.5) * hm->mu[0], se);
    EXPECT_NEAR(c12 / reps, 0.0, se);
    EXPECT_NEAR(v1 / reps, 1.0, se);
}

TEST(Histogram, CalibratedTestMatchesLimitLaws) {
    const JointModel model = JointModel::gaussian(1, 0.5);
    const DetectorSpec spec{"hist", 0, 16};
    const auto law0 = detector_limit_law(spec, model, 1.0, Hypothesis::H0, 100000, 5);
    const auto law1 = detector_limit_law(spec, model, 1.0, Hypothesis::H1, 100000, 5);
    const double thr = calibrate_threshold(law0, 0.05);
    const double power = rejection_rate(law1, thr);
    const auto hm = std::make_shared<const HistogramModel>(build_histogram_model(model, 16));
    const std::size_t reps = 1000;
    std::size_t rej0 = 0, rej1 = 0;
    for (std::size_t t = 0; t < reps; ++t) {
        const ThresholdOverride o{thr};
        rej0 += t_hist(embed_histogram(sample_dataset(model, 20000, 20000, Hypothesis::H0, replicate_seed(60, t)), hm), 1.0, o).reject_h0;
        rej1 += t_hist(embed_histogram(sample_dataset(model, 20000, 20000, Hypothesis::H1, replicate_seed(61, t)), hm), 1.0, o).reject_h0;
    }
    const double r0 = rej0 / double(reps), r1 = rej1 / double(reps);
    EXPECT_NEAR(r0, 0.05, 4 * std::sqrt(0.05 * 0.95 / reps));
    EXPECT_NEAR(r1, power, 4 * std::sqrt(power * (1 - power) / reps) + 0.01);
}
