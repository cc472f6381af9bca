#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "pathaug/stainstats.hpp"
#include "synthetic.hpp"

using namespace pathaug;

namespace {

std::vector<Vec6> two_cluster_points(std::size_t per_cluster, const Vec6& m1, const Vec6& m2, double spread, Rng& rng)
{
    std::vector<Vec6> pts;
    for (std::size_t i = 0; i < 2 * per_cluster; ++i) {
        Vec6 z;
        for (int d = 0; d < 6; ++d) z[d] = rng.normal();
        // Mildly correlated covariance: L = spread * (I + 0.3 * subdiagonal).
        Vec6 x = spread * z;
        for (int d = 1; d < 6; ++d) x[d] += 0.3 * spread * z[d - 1];
        pts.push_back((i % 2 == 0 ? m1 : m2) + x);
    }
    return pts;
}

std::vector<ChannelStats> stats_from_points(const std::vector<Vec6>& pts, ColorSpace space)
{
    std::vector<ChannelStats> out;
    for (const auto& p : pts) out.push_back(ChannelStats::from_vector(space, p));
    return out;
}

} // namespace

TEST(ImageStats, ConstantWhite)
{
    const RasterImage white(8, 8, Rgb{255, 255, 255});
    const auto hsv = image_stats(white, ColorSpace::HSV);
    EXPECT_EQ(hsv.mu, (std::array<double, 3>{0, 0, 255}));
    EXPECT_EQ(hsv.sigma, (std::array<double, 3>{0, 0, 0}));
    const auto hed = image_stats(white, ColorSpace::HED);
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(hed.mu[c], 0.0, 1e-15);
        EXPECT_NEAR(hed.sigma[c], 0.0, 1e-15);
    }
}

TEST(ImageStats, TwoPixelMomentsMatchScalarOracle)
{
    Rng rng(5);
    for (int t = 0; t < 30; ++t) {
        RasterImage img(2, 1);
        for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng.below(256));
        for (auto space : kAllSpaces) {
            // Oracle: convert each pixel on its own, then the two-point moments by hand.
            const auto a = to_planes(crop(img, 0, 0, 1, 1), space);
            const auto b = to_planes(crop(img, 1, 0, 1, 1), space);
            const auto s = image_stats(img, space);
            for (int c = 0; c < 3; ++c) {
                const double va = a.planes[c][0], vb = b.planes[c][0];
                EXPECT_NEAR(s.mu[c], 0.5 * (va + vb), 1e-9);
                EXPECT_NEAR(s.sigma[c], 0.5 * std::abs(va - vb), 1e-9);
            }
        }
    }
}

TEST(ImageStats, SigmaIsPopulationConvention)
{
    RasterImage img(4, 1);
    const std::uint8_t vals[4] = {0, 85, 170, 255};
    for (int x = 0; x < 4; ++x) img.set(x, 0, {vals[x], vals[x], vals[x]});
    const auto s = image_stats(img, ColorSpace::HSV);
    // V channel: {0,85,170,255}, population variance = 85^2 * 1.25.
    EXPECT_NEAR(s.sigma[2], 85.0 * std::sqrt(1.25), 1e-9);
}

TEST(FitUnimodal, TwoPointSampleStd)
{
    std::vector<ChannelStats> stats(2, ChannelStats{ColorSpace::LAB, {0, 1, 2}, {3, 4, 5}});
    stats[0].mu[0] = 10;
    stats[1].mu[0] = 20;
    const auto m = fit_unimodal(stats, ColorSpace::LAB);
    EXPECT_DOUBLE_EQ(m.mean[0], 15.0);
    EXPECT_NEAR(m.std[0], std::sqrt(50.0), 1e-12);
    for (int v = 1; v < 6; ++v) EXPECT_EQ(m.std[v], 0.0);
}

TEST(FitUnimodal, IdenticalEntriesGiveZeroStd)
{
    std::vector<ChannelStats> stats(7, ChannelStats{ColorSpace::HED, {0.1, 0.2, 0.3}, {0.01, 0.02, 0.03}});
    const auto m = fit_unimodal(stats, ColorSpace::HED);
    for (int v = 0; v < 6; ++v) EXPECT_EQ(m.std[v], 0.0);
    EXPECT_DOUBLE_EQ(m.mean[4], 0.02);
}

TEST(FitUnimodal, Errors)
{
    std::vector<ChannelStats> one(1, ChannelStats{ColorSpace::HSV, {}, {}});
    try {
        fit_unimodal(one, ColorSpace::HSV);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
    }
    std::vector<ChannelStats> mixed{ChannelStats{ColorSpace::HSV, {}, {}}, ChannelStats{ColorSpace::LAB, {}, {}}};
    try {
        fit_unimodal(mixed, ColorSpace::HSV);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SpaceMismatch);
    }
}

TEST(FitGmm, SingleComponentIsSampleMomentFixedPoint)
{
    Rng rng(9);
    std::vector<Vec6> pts;
    for (int i = 0; i < 300; ++i) {
        Vec6 p;
        for (int d = 0; d < 6; ++d) p[d] = rng.uniform(0, 10) + d;
        pts.push_back(p);
    }
    GmmOptions opt;
    opt.k = 1;
    const auto m = fit_gmm_points(pts, ColorSpace::HSV, opt);
    Vec6 mean = Vec6::Zero();
    for (const auto& p : pts) mean += p;
    mean /= 300.0;
    Mat6 cov = Mat6::Zero();
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    cov /= 300.0;
    ASSERT_EQ(m.k(), 1);
    EXPECT_DOUBLE_EQ(m.weights[0], 1.0);
    EXPECT_LT((m.means[0] - mean).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((m.covariances[0] - (cov + opt.reg_floor * Mat6::Identity())).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FitGmm, RecoversTwoSeparatedClusters)
{
    Rng rng(2024);
    Vec6 m1, m2;
    m1 << 60, 120, 180, 10, 20, 30;
    m2 << 90, 100, 150, 25, 12, 40;
    const auto pts = two_cluster_points(1000, m1, m2, 2.0, rng);
    GmmOptions opt;
    opt.k = 2;
    opt.seed = 1;
    const auto m = fit_gmm(stats_from_points(pts, ColorSpace::LAB), ColorSpace::LAB, opt);
    const int a = (m.means[0] - m1).norm() < (m.means[1] - m1).norm() ? 0 : 1;
    EXPECT_LT((m.means[a] - m1).cwiseAbs().maxCoeff(), 0.5);
    EXPECT_LT((m.means[1 - a] - m2).cwiseAbs().maxCoeff(), 0.5);
    EXPECT_NEAR(m.weights[0], 0.5, 0.05);
    EXPECT_NEAR(m.weights[1], 0.5, 0.05);
}

TEST(FitGmm, InsufficientData)
{
    std::vector<ChannelStats> five(5, ChannelStats{ColorSpace::HSV, {1, 2, 3}, {1, 1, 1}});
    GmmOptions opt;
    opt.k = 10;
    try {
        fit_gmm(five, ColorSpace::HSV, opt);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
    }
}

TEST(FitGmm, DeterministicForSeed)
{
    Rng rng(77);
    std::vector<Vec6> pts;
    for (int i = 0; i < 200; ++i) {
        Vec6 p;
        for (int d = 0; d < 6; ++d) p[d] = rng.normal() * (d + 1) + (i % 3) * 10;
        pts.push_back(p);
    }
    GmmOptions opt;
    opt.k = 10;
    opt.seed = 42;
    const auto a = fit_gmm_points(pts, ColorSpace::HED, opt);
    const auto b = fit_gmm_points(pts, ColorSpace::HED, opt);
    EXPECT_TRUE(a == b);
    opt.seed = 43;
    const auto c = fit_gmm_points(pts, ColorSpace::HED, opt);
    EXPECT_FALSE(a == c);
}

TEST(FitGmm, LogLikelihoodIsMonotoneAndInvariantsHold)
{
    Rng data_rng(1234);
    for (int fit = 0; fit < 25; ++fit) {
        const int clusters = 1 + static_cast<int>(data_rng.below(5));
        std::vector<Vec6> centers(clusters);
        for (auto& c : centers)
            for (int d = 0; d < 6; ++d) c[d] = data_rng.uniform(0, 100);
        std::vector<Vec6> pts;
        for (int i = 0; i < 150; ++i) {
            Vec6 p = centers[i % clusters];
            for (int d = 0; d < 6; ++d) p[d] += data_rng.normal() * 3.0;
            pts.push_back(p);
        }
        GmmOptions opt;
        opt.k = 1 + static_cast<int>(data_rng.below(10));
        opt.seed = static_cast<std::uint64_t>(fit);
        GmmFitTrace trace;
        const auto m = fit_gmm_points(pts, ColorSpace::HSV, opt, &trace);
        ASSERT_GE(trace.log_likelihood.size(), 2u);
        for (std::size_t i = 1; i < trace.log_likelihood.size(); ++i)
            EXPECT_GE(trace.log_likelihood[i], trace.log_likelihood[i - 1] - 1e-8) << "fit " << fit << " iter " << i;

        double wsum = 0.0;
        for (double w : m.weights) {
            EXPECT_GE(w, 0.0);
            wsum += w;
        }
        EXPECT_NEAR(wsum, 1.0, 1e-9);
        for (const auto& cov : m.covariances) {
            EXPECT_LT((cov - cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
            Eigen::SelfAdjointEigenSolver<Mat6> es(cov);
            EXPECT_GE(es.eigenvalues().minCoeff(), opt.reg_floor * (1 - 1e-6));
        }
    }
}

TEST(FitGmm, ConstantCorpusCollapsesToRegFloor)
{
    std::vector<ChannelStats> same(20, ChannelStats{ColorSpace::HSV, {10, 20, 30}, {1, 2, 3}});
    GmmOptions opt;
    const auto m = fit_gmm(same, ColorSpace::HSV, opt);
    EXPECT_EQ(m.k(), 10);
    for (int c = 0; c < m.k(); ++c) {
        EXPECT_LT((m.means[c] - same[0].as_vector()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((m.covariances[c] - opt.reg_floor * Mat6::Identity()).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(SampleTargetStats, DegenerateUnimodalReturnsMeans)
{
    UnimodalStainModel m;
    m.space = ColorSpace::LAB;
    m.mean = {1, 2, 3, 4, 5, 6};
    Rng rng(1);
    const auto s = sample_target_stats(m, rng);
    EXPECT_EQ(s.space, ColorSpace::LAB);
    EXPECT_EQ(s.mu, (std::array<double, 3>{1, 2, 3}));
    EXPECT_EQ(s.sigma, (std::array<double, 3>{4, 5, 6}));
}

TEST(SampleTargetStats, ZeroCovarianceGmmReturnsMean)
{
    GmmStainModel m;
    m.weights = {1.0};
    Vec6 mean;
    mean << 9, 8, 7, 6, 5, 4;
    m.means = {mean};
    m.covariances = {Mat6::Zero()};
    Rng rng(2);
    for (int i = 0; i < 5; ++i) EXPECT_EQ(sample_target_stats(m, rng).as_vector(), mean);
}

TEST(SampleTargetStats, SigmasClampedAtZero)
{
    UnimodalStainModel m;
    m.mean = {0, 0, 0, 0, 0, 0};
    m.std = {1, 1, 1, 1, 1, 1};
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const auto s = sample_target_stats(m, rng);
        for (double v : s.sigma) EXPECT_GE(v, 0.0);
    }
}

TEST(SampleTargetStats, GmmDrawsMatchMixtureMean)
{
    Rng data_rng(8);
    std::vector<Vec6> pts;
    for (int i = 0; i < 400; ++i) {
        Vec6 p;
        for (int d = 0; d < 3; ++d) p[d] = 100 + 30 * (i % 4) + 5 * data_rng.normal();
        for (int d = 3; d < 6; ++d) p[d] = 40 + 4 * data_rng.normal();
        pts.push_back(p);
    }
    GmmOptions opt;
    opt.k = 10;
    const auto m = fit_gmm_points(pts, ColorSpace::HSV, opt);
    const Vec6 mean = mixture_mean(m);
    const Mat6 cov = mixture_covariance(m);
    Rng rng(99);
    const int n = 10000;
    Vec6 acc = Vec6::Zero();
    for (int i = 0; i < n; ++i) {
        const auto v = sample_target_stats(m, rng).as_vector();
        ASSERT_TRUE(v.allFinite());
        acc += v;
    }
    acc /= n;
    for (int d = 0; d < 6; ++d) EXPECT_LT(std::abs(acc[d] - mean[d]), 4.0 * std::sqrt(cov(d, d) / n)) << "coord " << d;
}

TEST(SemidefiniteCholesky, ReconstructsPositiveDefinite)
{
    Rng rng(4);
    Mat6 a;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) a(i, j) = rng.normal();
    const Mat6 spd = a * a.transpose() + Mat6::Identity();
    const Mat6 l = semidefinite_cholesky(spd);
    EXPECT_LT((l * l.transpose() - spd).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Subsample, CountRule)
{
    EXPECT_EQ(subsample_count(1000, 0.1), 100u);
    EXPECT_EQ(subsample_count(10, 1.0), 10u);
    EXPECT_EQ(subsample_count(3, 0.1), 1u);
    EXPECT_EQ(subsample_count(0, 0.5), 0u);
    EXPECT_EQ(subsample_count(15, 0.1), 2u); // round(1.5) = 2
}

TEST(Subsample, ReservoirIsSortedUniqueAndDeterministic)
{
    Rng a(10), b(10);
    const auto s1 = reservoir_sample(1000, 100, a);
    const auto s2 = reservoir_sample(1000, 100, b);
    EXPECT_EQ(s1, s2);
    ASSERT_EQ(s1.size(), 100u);
    EXPECT_TRUE(std::is_sorted(s1.begin(), s1.end()));
    EXPECT_EQ(std::set<std::size_t>(s1.begin(), s1.end()).size(), 100u);
    EXPECT_LT(s1.back(), 1000u);
}

TEST(Subsample, ReservoirIsRoughlyUniform)
{
    // Each index should be chosen with probability count/n.
    std::vector<int> hits(20, 0);
    Rng rng(12);
    const int trials = 20000;
    for (int t = 0; t < trials; ++t)
        for (auto i : reservoir_sample(20, 5, rng)) ++hits[i];
    for (int h : hits) EXPECT_NEAR(h, trials * 0.25, 4 * std::sqrt(trials * 0.25 * 0.75));
}

TEST(Rng, DerivedStreamsAreDistinctAndReproducible)
{
    auto a = Rng::derive(1, 0), b = Rng::derive(1, 1), c = Rng::derive(1, 0);
    EXPECT_EQ(a, c);
    EXPECT_NE(a.next(), b.next());
    Rng r(5);
    double sum = 0, sq = 0;
    for (int i = 0; i < 20000; ++i) {
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / 20000, 0.0, 0.03);
    EXPECT_NEAR(sq / 20000, 1.0, 0.04);
}
