#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <pose/path.hpp>

#include "oracles.hpp"

using namespace pose;

namespace {

Path fit(const Dataset& d, double gamma, index_t T = 100, bool standardize = true)
{
    PathConfig c;
    c.gamma = Gamma{gamma};
    c.nlambda = T;
    c.standardize = standardize;
    return fit_path(d, d.family(), c);
}

} // namespace

TEST(Grid, Examples)
{
    const auto g = make_grid(1.0, 3, 0.01);
    ASSERT_EQ(g.size(), 3u);
    EXPECT_EQ(g[0], 1.0);
    EXPECT_NEAR(g[1], 0.1, 1e-15);
    EXPECT_EQ(g[2], 0.01);
    const auto h = make_grid(3.7, 100, 0.01);
    EXPECT_NEAR(h[99] / h[0], 0.01, 1e-12);
    for (index_t t = 1; t < 100; ++t) EXPECT_LT(h[t], h[t - 1]);
    EXPECT_THROW(make_grid(1.0, 10, 1.0), Error);
    EXPECT_EQ(make_grid(2.0, 1, 0.5), std::vector<double>{2.0});
}

TEST(LambdaStart, SingleStandardizedColumn)
{
    // mean 0, population sd 1
    const std::vector<double> x{1, -1, 1, -1, 1, -1};
    const std::vector<double> y{2, 0, 3, -1, 1, 1};
    const Dataset d({Column::dense(x)}, y, Family::gaussian);
    const auto nm = null_model(d, Family::gaussian);
    const auto s = penalty_scales(d, true).s;
    double xy = 0;
    for (int i = 0; i < 6; ++i) xy += x[i] * y[i];
    EXPECT_NEAR(lambda_start(d, Family::gaussian, s, nm), std::abs(xy) / 6.0, 1e-14);
}

TEST(LambdaStart, ConstantResponseIsAnError)
{
    const Dataset d({Column::dense({1, 2, 3})}, {2, 2, 2}, Family::gaussian);
    EXPECT_THROW(fit(d, 0.0), Error);
}

TEST(LambdaStart, DuplicateColumnChangesNothing)
{
    std::mt19937_64 rng(3);
    const auto d = oracle::random_dataset(rng, 40, 4, false);
    std::vector<Column> cols;
    for (index_t j = 0; j < 4; ++j) cols.push_back(d.column(j));
    cols.push_back(d.column(0));
    const Dataset e(cols, std::vector<double>(d.y().begin(), d.y().end()), Family::gaussian);
    const auto s1 = penalty_scales(d, true).s, s2 = penalty_scales(e, true).s;
    EXPECT_EQ(lambda_start(d, Family::gaussian, s1, null_model(d, Family::gaussian)),
              lambda_start(e, Family::gaussian, s2, null_model(e, Family::gaussian)));
}

TEST(Weights, Rules)
{
    const std::vector<double> beta{3.0, 0.0, -1.0}, s{1.0, 2.0, 0.0};
    EXPECT_EQ(update_weights(beta, Gamma{0.0}, s), s);
    const auto w2 = update_weights(beta, Gamma{2.0}, s);
    EXPECT_NEAR(w2[0], 1.0 / 7.0, 1e-15);
    EXPECT_EQ(w2[1], 2.0);
    EXPECT_EQ(w2[2], 0.0);
    const auto wi = update_weights(beta, Gamma::infinite(), s);
    EXPECT_EQ(wi, (std::vector<double>{0.0, 2.0, 0.0}));
}

TEST(Df, GammaCdfMatchesMonteCarlo)
{
    // one column: shape = n*lambda*s/(gamma*phi), scale gamma, evaluated at |g|/phi
    const index_t n = 50;
    const double lambda = 0.04, gamma = 1.5, phi = 0.8, s = 1.3, g = 3.0;
    const std::vector<double> lz{g}, sc{s};
    const double df = df_estimate(lambda, n, Gamma{gamma}, phi, lz, sc, 0);
    const double shape = n * lambda * s / (gamma * phi);
    std::mt19937_64 rng(99);
    std::gamma_distribution<double> G(shape, gamma);
    const int draws = 1000000;
    int hits = 0;
    for (int k = 0; k < draws; ++k) hits += G(rng) < g / phi ? 1 : 0;
    const double p = double(hits) / draws;
    const double se = std::sqrt(p * (1 - p) / draws);
    EXPECT_NEAR(df - 1.0, p, 3 * se);
}

TEST(Df, Limits)
{
    const std::vector<double> lz{0.0, 2.0, 5.0}, sc{1.0, 1.0, 0.0};
    // lasso: an indicator of |g| above the penalty, here n*lambda = 4
    EXPECT_EQ(df_estimate(0.4, 10, Gamma{0.0}, 1.0, lz, sc, 1), 2.0);
    EXPECT_EQ(df_estimate(0.1, 10, Gamma{0.0}, 1.0, lz, sc, 1), 3.0);
    // gamma infinite: every penalized column with a nonzero gradient counts
    EXPECT_EQ(df_estimate(100.0, 10, Gamma::infinite(), 1.0, lz, sc, 1), 3.0);
}

TEST(Path, StartsEmptyAndLambdaStartIsTheInfimum)
{
    std::mt19937_64 rng(5);
    const auto d = oracle::random_dataset(rng, 100, 20, false);
    for (double g : {0.0, 2.0, 10.0}) {
        const auto path = fit(d, g);
        ASSERT_EQ(path.segments.size(), 100u);
        EXPECT_EQ(path.segments[0].support, 0u);
        EXPECT_EQ(path.lambda[0], path.lambda1);
    }
    PathConfig c;
    c.lambda_grid = {fit(d, 0.0, 1).lambda1 * (1 - 1e-6)};
    const auto below = fit_path(d, Family::gaussian, c);
    EXPECT_GE(below.segments[0].support, 1u);
}

TEST(Path, SingleSegment)
{
    std::mt19937_64 rng(6);
    const auto d = oracle::random_dataset(rng, 30, 5, false);
    const auto path = fit(d, 2.0, 1);
    ASSERT_EQ(path.segments.size(), 1u);
    EXPECT_EQ(path.segments[0].support, 0u);
    EXPECT_NEAR(path.segments[0].alpha, null_model(d, Family::gaussian).alpha, 1e-12);
}

TEST(Path, LassoEqualsConstantWeightPath)
{
    std::mt19937_64 rng(7);
    const auto d = oracle::random_dataset(rng, 80, 15, false);
    const auto a = fit(d, 0.0);
    PathConfig c;
    c.weight_multipliers.assign(15, 1.0);
    const auto b = fit_path(d, Family::gaussian, c);
    ASSERT_EQ(a.segments.size(), b.segments.size());
    for (index_t t = 0; t < a.segments.size(); ++t) EXPECT_EQ(a.dense_beta(t), b.dense_beta(t));
}

TEST(Path, IsDeterministic)
{
    std::mt19937_64 rng(8);
    const auto d = oracle::random_dataset(rng, 80, 15, true, 0.5);
    const auto a = fit(d, 2.0), b = fit(d, 2.0);
    for (index_t t = 0; t < a.segments.size(); ++t) {
        EXPECT_EQ(a.dense_beta(t), b.dense_beta(t));
        EXPECT_EQ(a.segments[t].alpha, b.segments[t].alpha);
        EXPECT_EQ(a.segments[t].df, b.segments[t].df);
    }
}

TEST(Path, WeightRuleAlongPath)
{
    std::mt19937_64 rng(9);
    const auto d = oracle::random_dataset(rng, 100, 20, false);
    const auto s = penalty_scales(d, true).s;
    for (double g : {2.0, inf}) {
        const auto path = fit(d, g);
        for (index_t t = 1; t < path.segments.size(); ++t) {
            const auto prev = path.dense_beta(t - 1);
            for (index_t j = 0; j < 20; ++j) {
                const double w = path.segments[t].omega[j];
                if (prev[j] == 0.0)
                    EXPECT_EQ(w, s[j]);
                else
                    EXPECT_LE(w, s[j]);
                if (std::isinf(g) && prev[j] != 0.0) {
                    EXPECT_EQ(w, 0.0);
                }
            }
        }
    }
}

TEST(Path, LassoDfIsSupportPlusOne)
{
    std::mt19937_64 rng(10);
    const auto d = oracle::random_dataset(rng, 120, 30, false, 0.3);
    const auto path = fit(d, 0.0);
    for (const auto& seg : path.segments)
        if (seg.converged) {
            EXPECT_EQ(seg.df, double(seg.support + 1)) << "t=" << seg.t;
        }
}

TEST(Path, LassoMatchesReferenceAlongPath)
{
    for (int rep = 0; rep < 3; ++rep) {
        std::mt19937_64 rng(200 + rep);
        const auto d = oracle::random_dataset(rng, 100, 20, false, rep == 2 ? 0.6 : 0.0);
        PathConfig c;
        c.nlambda = 20;
        c.thresh = 1e-14;
        const auto path = fit_path(d, Family::gaussian, c);
        const auto X = oracle::dense_x(d);
        const auto y = oracle::dense_y(d);
        Eigen::VectorXd om(20);
        for (index_t j = 0; j < 20; ++j) om(Eigen::Index(j)) = d.col_sd(j);
        for (index_t t = 0; t < path.segments.size(); t += 3) {
            const auto ref = oracle::full_cycle_gaussian(X, y, path.segments[t].lambda, om, 1e-12);
            const auto b = path.dense_beta(t);
            for (index_t j = 0; j < 20; ++j) EXPECT_NEAR(b[j], ref.beta(Eigen::Index(j)), 1e-6);
            EXPECT_NEAR(path.segments[t].alpha, ref.alpha, 1e-6);
        }
    }
}

TEST(Path, BinomialSegmentsSatisfyKkt)
{
    std::mt19937_64 rng(11);
    const auto d = oracle::random_dataset(rng, 200, 25, true, 0.5);
    for (double g : {0.0, 2.0}) {
        const auto path = fit(d, g);
        for (const auto& seg : path.segments) {
            if (!seg.converged) continue;
            const auto rep = kkt_check(d, Family::binomial, seg.alpha, path.dense_beta(seg.t), seg.lambda, seg.omega);
            EXPECT_LT(rep.worst_relative, 1e-4) << "gamma " << g << " t " << seg.t;
        }
    }
}

TEST(Path, FreeColumnsAreNeverPenalized)
{
    std::mt19937_64 rng(12);
    const auto base = oracle::random_dataset(rng, 100, 10, false);
    std::vector<Column> cols;
    for (index_t j = 0; j < 10; ++j) cols.push_back(base.column(j));
    const Dataset d(cols, std::vector<double>(base.y().begin(), base.y().end()), Family::gaussian, {0});
    const auto path = fit(d, 0.0);
    for (const auto& seg : path.segments) {
        EXPECT_EQ(seg.omega[0], 0.0);
        EXPECT_EQ(seg.df, double(seg.support + 2)) << seg.t; // intercept and one free column
        bool has0 = false;
        for (auto [j, v] : seg.beta) has0 |= j == 0;
        EXPECT_TRUE(has0);
    }
}

TEST(Path, LassoIsScaleEquivariantWithStandardization)
{
    // multiplying a column by c divides its coefficient by c and leaves fitted values unchanged
    std::mt19937_64 rng(13);
    const auto d = oracle::random_dataset(rng, 100, 8, false);
    std::vector<Column> cols;
    for (index_t j = 0; j < 8; ++j) {
        auto v = d.column(j).to_dense();
        if (j == 2)
            for (auto& x : v) x *= 7.0;
        cols.push_back(Column::dense(v));
    }
    const Dataset e(cols, std::vector<double>(d.y().begin(), d.y().end()), Family::gaussian);
    PathConfig c;
    c.thresh = 1e-14;
    const auto a = fit_path(d, Family::gaussian, c), b = fit_path(e, Family::gaussian, c);
    for (index_t t = 0; t < a.segments.size(); ++t) {
        const auto ba = a.dense_beta(t), bb = b.dense_beta(t);
        for (index_t j = 0; j < 8; ++j) EXPECT_NEAR(ba[j], bb[j] * (j == 2 ? 7.0 : 1.0), 1e-6);
    }
}

TEST(Path, NearInfiniteGammaDfApproachesP)
{
    std::mt19937_64 rng(14);
    const auto d = oracle::random_dataset(rng, 100, 10, false);
    const auto path = fit(d, 1e6);
    const auto& last = path.segments.back();
    EXPECT_GT(last.df, 10.0 + 1.0 - 0.05);
}

TEST(Path, ValidatesConfig)
{
    std::mt19937_64 rng(15);
    const auto d = oracle::random_dataset(rng, 30, 4, false);
    PathConfig c;
    c.lambda_min_ratio = 1.0;
    EXPECT_THROW(fit_path(d, Family::gaussian, c), Error);
    c = PathConfig{};
    c.gamma = Gamma{-1.0};
    EXPECT_THROW(fit_path(d, Family::gaussian, c), Error);
    c = PathConfig{};
    c.lambda_grid = {0.5, 0.7};
    EXPECT_THROW(fit_path(d, Family::gaussian, c), Error);
}
