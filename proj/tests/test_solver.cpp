#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <pose/path.hpp>
#include <pose/solver.hpp>

#include "oracles.hpp"

using namespace pose;

namespace {

SegmentProblem problem(const Dataset& d, double lambda, std::vector<double> omega, double thresh)
{
    SegmentProblem pb;
    pb.lambda = lambda;
    pb.omega = std::move(omega);
    pb.beta.assign(d.p(), 0.0);
    pb.thresh = thresh;
    return pb;
}

double lambda_max(const Dataset& d, Family f, const std::vector<double>& omega)
{
    const auto nm = null_model(d, f);
    const auto g = null_gradients(d, f, nm);
    double m = 0.0;
    for (index_t j = 0; j < d.p(); ++j)
        if (omega[j] > 0.0) m = std::max(m, std::abs(g[j]) / (double(d.n()) * omega[j]));
    return m;
}

} // namespace

TEST(CoordinateStep, SoftThreshold)
{
    // from b = 0 with unit curvature the update is the soft-threshold of -g
    EXPECT_DOUBLE_EQ(coordinate_step(-3.0, 1.0, 0.0, 1.0), 2.0);
    EXPECT_DOUBLE_EQ(coordinate_step(3.0, 1.0, 0.0, 1.0), -2.0);
    EXPECT_DOUBLE_EQ(coordinate_step(0.5, 1.0, 0.0, 1.0), 0.0);
    // returns to zero exactly when |vg - vh b| < penalty
    EXPECT_DOUBLE_EQ(coordinate_step(1.5, 2.0, 1.0, 1.0), -1.0);
    // unpenalized: Newton step
    EXPECT_DOUBLE_EQ(coordinate_step(4.0, 2.0, 1.0, 0.0), -2.0);
}

TEST(QuasiNewton, ExtrapolatesGeometricSequence)
{
    // theta_k = 1 + 0.5^k converges to 1; the secant step lands on the limit
    const std::vector<double> t2{1.5}, t1{1.25}, t0{1.125};
    const auto prop = qn_proposal(t0, t1, t2);
    EXPECT_NEAR(prop[0], 1.0, 1e-15);
    // no contraction estimate: coordinate unchanged
    const std::vector<double> a{2.0}, b{2.0};
    EXPECT_EQ(qn_proposal(a, b, b)[0], 2.0);
}

TEST(QuasiNewton, RejectsProposalThatDoesNotDescend)
{
    const std::vector<double> t2{1.5}, t1{1.25}, t0{1.125};
    auto worse = [](std::span<const double> t) { return -std::abs(t[0] - 1.0); }; // limit is a maximum
    EXPECT_FALSE(qn_accelerate(t0, t1, t2, worse).has_value());
    auto better = [](std::span<const double> t) { return std::abs(t[0] - 1.0); };
    ASSERT_TRUE(qn_accelerate(t0, t1, t2, better).has_value());
}

TEST(Solver, OrthogonalDesignClosedForm)
{
    // centered orthogonal columns with x'x = n: beta_j = soft(x_j'y/n, lambda omega_j)
    const std::vector<double> x1{1, -1, 1, -1}, x2{1, 1, -1, -1};
    const std::vector<double> y{3, 1, 0, -2};
    const Dataset d({Column::dense(x1), Column::dense(x2)}, y, Family::gaussian);
    CoordinateDescent cd(d, Family::gaussian);
    auto pb = problem(d, 0.5, {1.0, 0.5}, 1e-14);
    const auto sol = cd.solve_segment(pb);
    ASSERT_TRUE(sol.converged);
    // x1'y/n = (3-1+0+2)/4 = 1; x2'y/n = (3+1-0+2)/4 = 1.5
    EXPECT_NEAR(sol.beta[0], 0.5, 1e-12);
    EXPECT_NEAR(sol.beta[1], 1.25, 1e-12);
    EXPECT_NEAR(sol.alpha, 0.5, 1e-12);
}

TEST(Solver, ZeroAboveLambdaMax)
{
    std::mt19937_64 rng(1);
    const auto d = oracle::random_dataset(rng, 60, 8, false);
    const std::vector<double> om(8, 1.0);
    const double lm = lambda_max(d, Family::gaussian, om);
    CoordinateDescent cd(d, Family::gaussian);
    const auto sol = cd.solve_segment(problem(d, lm * 1.001, om, 1e-10));
    EXPECT_TRUE(sol.support.empty());
    const auto sol2 = cd.solve_segment(problem(d, lm * 0.98, om, 1e-10));
    EXPECT_FALSE(sol2.support.empty());
}

class SolverVsReference : public ::testing::TestWithParam<std::tuple<bool, double>>
{};

TEST_P(SolverVsReference, AgreesWithFullCyclingReference)
{
    const auto [binomial, sparsity] = GetParam();
    const Family fam = binomial ? Family::binomial : Family::gaussian;
    for (int rep = 0; rep < 4; ++rep) {
        std::mt19937_64 rng(100 + rep + (binomial ? 50 : 0));
        const index_t n = 80, p = 12;
        const auto d = oracle::random_dataset(rng, n, p, binomial, sparsity);
        std::uniform_real_distribution<double> U(0.2, 1.5);
        std::vector<double> om(p);
        for (auto& w : om) w = U(rng);
        om[3] = 0.0; // one unpenalized column
        const double lambda = 0.2 * lambda_max(d, fam, om);
        CoordinateDescent cd(d, fam);
        const auto sol = cd.solve_segment(problem(d, lambda, om, 1e-13));
        ASSERT_TRUE(sol.converged);
        const auto ref = oracle::full_cycle(oracle::dense_x(d), oracle::dense_y(d), binomial, lambda,
                                            Eigen::Map<const Eigen::VectorXd>(om.data(), Eigen::Index(p)), 1e-12);
        EXPECT_NEAR(sol.alpha, ref.alpha, 1e-6);
        for (index_t j = 0; j < p; ++j) EXPECT_NEAR(sol.beta[j], ref.beta(Eigen::Index(j)), 1e-6) << "j=" << j;
    }
}

INSTANTIATE_TEST_SUITE_P(Families,
                         SolverVsReference,
                         ::testing::Values(std::make_tuple(false, 0.0),
                                           std::make_tuple(false, 0.7),
                                           std::make_tuple(true, 0.0),
                                           std::make_tuple(true, 0.7)));

TEST(Solver, KktHoldsAtConvergence)
{
    for (bool binomial : {false, true}) {
        std::mt19937_64 rng(7);
        const Family fam = binomial ? Family::binomial : Family::gaussian;
        const auto d = oracle::random_dataset(rng, 150, 30, binomial, 0.5);
        const std::vector<double> om(30, 1.0);
        const double lm = lambda_max(d, fam, om);
        CoordinateDescent cd(d, fam);
        for (double frac : {0.9, 0.5, 0.2, 0.05}) {
            const auto sol = cd.solve_segment(problem(d, frac * lm, om, 1e-7 * null_model(d, fam).deviance));
            ASSERT_TRUE(sol.converged);
            const auto rep = kkt_check(d, fam, sol.alpha, sol.beta, frac * lm, om);
            EXPECT_LT(rep.worst_relative, 1e-4) << "frac " << frac << " binomial " << binomial;
        }
    }
}

TEST(Solver, ObjectiveNeverIncreasesAcrossPasses)
{
    std::mt19937_64 rng(21);
    const auto d = oracle::random_dataset(rng, 100, 20, false, 0.0, 0.8);
    CoordinateDescent cd(d, Family::gaussian);
    const std::vector<double> om(20, 1.0);
    auto pb = problem(d, 0.05 * lambda_max(d, Family::gaussian, om), om, 1e-12);
    pb.trace = true;
    const auto sol = cd.solve_segment(pb);
    ASSERT_GE(sol.pass_objectives.size(), 2u);
    for (index_t k = 1; k < sol.pass_objectives.size(); ++k)
        EXPECT_LE(sol.pass_objectives[k], sol.pass_objectives[k - 1] * (1 + 1e-14) + 1e-14);
}

TEST(Solver, AccelerationReachesTheSameSolution)
{
    for (bool binomial : {false, true}) {
        std::mt19937_64 rng(33);
        const Family fam = binomial ? Family::binomial : Family::gaussian;
        const auto d = oracle::random_dataset(rng, 120, 25, binomial, 0.0, 0.9);
        const std::vector<double> om(25, 1.0);
        const double lambda = 0.05 * lambda_max(d, fam, om);
        CoordinateDescent a(d, fam), b(d, fam);
        auto pa = problem(d, lambda, om, 1e-13);
        auto pbq = pa;
        pbq.accelerate = true;
        const auto sa = a.solve_segment(pa);
        const auto sb = b.solve_segment(pbq);
        ASSERT_TRUE(sa.converged && sb.converged);
        for (index_t j = 0; j < 25; ++j) EXPECT_NEAR(sa.beta[j], sb.beta[j], 1e-5);
        EXPECT_NEAR(sa.objective, sb.objective, 1e-9 * std::abs(sa.objective));
    }
}

TEST(Solver, IncrementalResidualMatchesRecompute)
{
    std::mt19937_64 rng(4);
    const auto d = oracle::random_dataset(rng, 90, 15, true, 0.6);
    CoordinateDescent cd(d, Family::binomial);
    const std::vector<double> om(15, 1.0);
    const auto sol = cd.solve_segment(problem(d, 0.1 * lambda_max(d, Family::binomial, om), om, 1e-12));
    const auto eta_inc = cd.incremental_eta();
    const auto eta = linear_predictor(d, sol.alpha, sol.beta);
    for (index_t i = 0; i < d.n(); ++i) EXPECT_NEAR(eta_inc[i], eta[i], 1e-9);
}

TEST(Solver, NoInterceptMode)
{
    std::mt19937_64 rng(12);
    const auto d = oracle::random_dataset(rng, 70, 6, false);
    const std::vector<double> om(6, 1.0);
    auto pb = problem(d, 0.01, om, 1e-16);
    pb.intercept = false;
    CoordinateDescent cd(d, Family::gaussian);
    const auto sol = cd.solve_segment(pb);
    EXPECT_EQ(sol.alpha, 0.0);
    const auto ref = oracle::full_cycle_gaussian(oracle::dense_x(d), oracle::dense_y(d), 0.01,
                                                 Eigen::VectorXd::Ones(6), 1e-13, false);
    for (index_t j = 0; j < 6; ++j) EXPECT_NEAR(sol.beta[j], ref.beta(Eigen::Index(j)), 1e-7);
}

TEST(Solver, SeparableBinomialIsFlaggedNotLooped)
{
    // perfectly separable on x with an unpenalized column: IRLS must stop
    const std::vector<double> x{-3, -2, -1, 1, 2, 3};
    const std::vector<double> y{0, 0, 0, 1, 1, 1};
    const Dataset d({Column::dense(x), Column::dense({1, 2, 1, 2, 1, 3})}, y, Family::binomial);
    CoordinateDescent cd(d, Family::binomial);
    auto pb = problem(d, 1e-6, {0.0, 1.0}, 1e-10);
    pb.max_irls = 200;
    const auto sol = cd.solve_segment(pb);
    EXPECT_TRUE(sol.diverged || !sol.converged);
}

TEST(CoordinateStep, MatchesGridSearchOnUnivariateObjective)
{
    auto obj = [](double vg, double vh, double pen, double beta) { return 0.5 * vh * beta * beta + vg * beta + pen * std::abs(beta); };
    for (auto [vg, vh, pen] : {std::tuple{-2.0, 4.0, 1.0}, std::tuple{3.0, 0.5, 1.0}, std::tuple{0.3, 2.0, 0.5}}) {
        double best = 0.0, bestv = obj(vg, vh, pen, 0.0);
        for (int k = -200000; k <= 200000; ++k) {
            const double b = k * 1e-4;
            if (obj(vg, vh, pen, b) < bestv) bestv = obj(vg, vh, pen, b), best = b;
        }
        EXPECT_NEAR(coordinate_step(vg, vh, 0.0, pen), best, 1e-4);
    }
    EXPECT_DOUBLE_EQ(coordinate_step(-2.0, 4.0, 0.0, 1.0), 0.25);
}

TEST(Kkt, PerturbationIsDetected)
{
    const std::vector<double> x1{1, -1, 1, -1}, x2{1, 1, -1, -1};
    const Dataset d({Column::dense(x1), Column::dense(x2)}, {3, 1, 0, -2}, Family::gaussian);
    const std::vector<double> om{1.0, 0.5};
    const std::vector<double> exact{0.5, 1.25};
    EXPECT_LT(kkt_check(d, Family::gaussian, 0.5, exact, 0.5, om).worst_slack, 1e-10);
    const std::vector<double> bumped{0.51, 1.25};
    const auto rep = kkt_check(d, Family::gaussian, 0.5, bumped, 0.5, om);
    EXPECT_EQ(rep.worst_index, 0u);
    EXPECT_NEAR(rep.slack[0], 4.0 * 0.01, 1e-12); // vh_0 = x'x = 4
}

TEST(Kkt, AllZeroAtLambdaStart)
{
    std::mt19937_64 rng(2);
    const auto d = oracle::random_dataset(rng, 50, 7, false);
    const std::vector<double> om(7, 1.0);
    const double lm = lambda_max(d, Family::gaussian, om);
    const auto nm = null_model(d, Family::gaussian);
    const auto rep = kkt_check(d, Family::gaussian, nm.alpha, std::vector<double>(7, 0.0), lm, om);
    EXPECT_LE(rep.worst_slack, 1e-10);
}

TEST(Solver, UnpenalizedWlsIsOls)
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> N;
    const index_t n = 100;
    std::vector<double> a(n), b(n), y(n);
    for (index_t i = 0; i < n; ++i) {
        a[i] = N(rng);
        b[i] = 0.6 * a[i] + N(rng);
        y[i] = 2.0 + a[i] - 0.5 * b[i] + N(rng);
    }
    const Dataset d({Column::dense(a), Column::dense(b)}, y, Family::gaussian);
    CoordinateDescent cd(d, Family::gaussian);
    auto pb = problem(d, 0.0, {1.0, 1.0}, 1e-20);
    const auto sol = cd.solve_wls(pb, std::vector<double>(n, 1.0), y);
    Eigen::MatrixXd Z(n, 3);
    for (index_t i = 0; i < n; ++i) Z.row(Eigen::Index(i)) << 1.0, a[i], b[i];
    const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), Eigen::Index(n));
    const Eigen::VectorXd ols = (Z.transpose() * Z).ldlt().solve(Z.transpose() * yv);
    EXPECT_NEAR(sol.alpha, ols(0), 1e-8);
    EXPECT_NEAR(sol.beta[0], ols(1), 1e-8);
    EXPECT_NEAR(sol.beta[1], ols(2), 1e-8);
}

TEST(Solver, WarmStartAtSolutionIsAFixedPoint)
{
    std::mt19937_64 rng(15);
    const auto d = oracle::random_dataset(rng, 80, 10, false);
    const std::vector<double> om(10, 1.0);
    const double lambda = 0.1 * lambda_max(d, Family::gaussian, om);
    CoordinateDescent cd(d, Family::gaussian);
    const auto first = cd.solve_segment(problem(d, lambda, om, 1e-18));
    auto pb = problem(d, lambda, om, 1e-12);
    pb.alpha = first.alpha;
    pb.beta = first.beta;
    const auto again = cd.solve_segment(pb);
    EXPECT_LT(again.first_pass_change, 1e-12);
    for (index_t j = 0; j < 10; ++j) EXPECT_NEAR(again.beta[j], first.beta[j], 1e-9);
}

TEST(Solver, InterceptOnlySaturationIsFlagged)
{
    // every y = 1 and the only covariate is held at zero by a huge penalty
    const Dataset d({Column::dense({1, 2, 3, 4})}, {1, 1, 1, 1}, Family::binomial);
    CoordinateDescent cd(d, Family::binomial);
    auto pb = problem(d, 1e6, {1.0}, 1e-10);
    pb.max_irls = 100;
    const auto sol = cd.solve_segment(pb);
    EXPECT_TRUE(sol.diverged || !sol.converged);
    EXPECT_TRUE(std::isfinite(sol.alpha));
}
