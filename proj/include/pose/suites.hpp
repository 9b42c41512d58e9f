#pragma once

#include <random>
#include <string>
#include <vector>

#include "common.hpp"
#include "verify.hpp"

// Seeded random-instance suites over the checks in verify.hpp. Each instance
// draws from its own generator, so results do not depend on thread count.

namespace pose::verify {

struct SuiteResult
{
    std::string suite;
    index_t instances = 0;     // instances evaluated
    index_t confirmed = 0;
    index_t inconclusive = 0;
    index_t violations = 0;
    index_t not_applicable = 0; // generator draws rejected by the preconditions
    double max_slack = 0.0;     // suite-specific worst margin (see each runner)
};

inline const std::vector<std::string>& suite_names()
{
    static const std::vector<std::string> names{"lemma1", "theorem1", "sign_recovery", "false_discovery", "prop1"};
    return names;
}

namespace detail {

inline Mat gaussian_matrix(std::mt19937_64& rng, index_t n, index_t p, double rho = 0.0)
{
    std::normal_distribution<double> N(0.0, 1.0);
    Mat X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    const double c = std::sqrt(1.0 - rho * rho);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double prev = N(rng);
        X(i, 0) = prev;
        for (Eigen::Index j = 1; j < X.cols(); ++j) {
            prev = rho * prev + c * N(rng);
            X(i, j) = prev;
        }
    }
    return X;
}

// Sparse truth on `s` random columns, magnitudes in [lo, hi], random signs.
inline Vec sparse_truth(std::mt19937_64& rng, index_t p, index_t s, double lo, double hi)
{
    std::vector<index_t> idx(p);
    for (index_t j = 0; j < p; ++j) idx[j] = j;
    for (index_t k = 0; k < s; ++k) std::swap(idx[k], idx[k + rng() % (p - k)]);
    std::uniform_real_distribution<double> U(lo, hi);
    Vec b = Vec::Zero(Eigen::Index(p));
    for (index_t k = 0; k < s; ++k) b(Eigen::Index(idx[k])) = (rng() & 1u ? -1.0 : 1.0) * U(rng);
    return b;
}

struct TheoryInstance
{
    Mat X;
    Vec y;
    double nu = 0.0;
    double lambda = 0.0;
    Vec omega;
};

// n x p normalized Gaussian design, three true signals, unit noise, nu = 1/n
// (the Cp penalty on the half-loss scale) and lambda = kappa*sqrt(2nu)/min(omega).
inline TheoryInstance theory_instance(std::mt19937_64& rng, index_t n, index_t p, double omega_lo, bool unit_off_support)
{
    TheoryInstance ti;
    std::uniform_real_distribution<double> U(0.0, 1.0);
    ti.X = normalize_columns(gaussian_matrix(rng, n, p, 0.5 * U(rng)));
    const Vec beta = sparse_truth(rng, p, 3, 0.3, 1.5);
    std::normal_distribution<double> N(0.0, 1.0);
    ti.y = ti.X * beta;
    for (Eigen::Index i = 0; i < ti.y.size(); ++i) ti.y(i) += N(rng);
    ti.nu = 1.0 / double(n);
    ti.omega = Vec(Eigen::Index(p));
    for (Eigen::Index j = 0; j < ti.omega.size(); ++j) ti.omega(j) = omega_lo + (1.0 - omega_lo) * U(rng);
    if (unit_off_support)
        for (Eigen::Index j = 0; j < ti.omega.size(); ++j)
            if (beta(j) == 0.0) ti.omega(j) = 1.0;
    const double kappa = 1.05 + 2.0 * U(rng);
    ti.lambda = kappa * std::sqrt(2.0 * ti.nu) / ti.omega.minCoeff();
    return ti;
}

} // namespace detail

/// Stagewise inequality on random instances (n=40, |S|=3, unit-variance x_j).
inline SuiteResult run_lemma1(index_t instances, std::uint64_t seed, unsigned threads)
{
    SuiteResult r;
    r.suite = "lemma1";
    std::vector<int> outcome(instances, 0);
    std::vector<double> margin(instances, 0.0);
    parallel_for(instances, threads, [&](index_t k) {
        std::mt19937_64 rng(mix_seed(mix_seed(seed, "lemma1"), k));
        const index_t n = 40, p = 6;
        Mat X = detail::gaussian_matrix(rng, n, p, 0.6);
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            X.col(j).array() -= X.col(j).mean();
            X.col(j) /= std::sqrt(X.col(j).squaredNorm() / double(n));
        }
        const Vec b = detail::sparse_truth(rng, p, 3, 0.2, 2.0);
        std::normal_distribution<double> N(0.0, 1.0);
        Vec y = X * b;
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += N(rng) + 3.0;
        std::vector<index_t> S{0, 1, 2};
        const index_t j = 2 + rng() % (p - 2); // sometimes inside S
        const auto rep = lemma1_check(X, y, S, j);
        outcome[k] = rep.holds ? 1 : -1;
        margin[k] = rep.cov2 - rep.mse_drop;
    });
    r.instances = instances;
    r.max_slack = -inf;
    for (index_t k = 0; k < instances; ++k) {
        (outcome[k] > 0 ? r.confirmed : r.violations) += 1;
        r.max_slack = std::max(r.max_slack, margin[k]);
    }
    return r;
}

/// Prediction-distance bound on instances that satisfy its precondition.
inline SuiteResult run_theorem1(index_t instances, std::uint64_t seed, unsigned threads, int restarts = 20)
{
    SuiteResult r;
    r.suite = "theorem1";
    std::vector<int> outcome(instances, 0);
    std::vector<index_t> rejected(instances, 0);
    std::vector<double> ratio(instances, 0.0);
    parallel_for(instances, threads, [&](index_t k) {
        std::mt19937_64 rng(mix_seed(mix_seed(seed, "theorem1"), k));
        for (int attempt = 0; attempt < 1000; ++attempt) {
            auto ti = detail::theory_instance(rng, 40, 10, 0.3, false);
            const auto bc = theorem1_check(ti.X, ti.y, ti.nu, ti.lambda, ti.omega, restarts, mix_seed(seed, k));
            if (!bc.precondition_holds) {
                ++rejected[k];
                continue;
            }
            outcome[k] = bc.conclusive ? 1 : 2;
            ratio[k] = bc.rhs > 0.0 ? bc.lhs / bc.rhs : 0.0;
            return;
        }
        throw Error("theorem1 suite: generator failed to meet the precondition");
    });
    r.instances = instances;
    for (index_t k = 0; k < instances; ++k) {
        (outcome[k] == 1 ? r.confirmed : r.inconclusive) += 1;
        r.not_applicable += rejected[k];
        r.max_slack = std::max(r.max_slack, ratio[k]);
    }
    return r;
}

/// No false positives (and sign agreement under beta-min) on instances that
/// pass both irrepresentability forms; omega on S^c is 1.
inline SuiteResult run_sign_recovery(index_t instances, std::uint64_t seed, unsigned threads)
{
    SuiteResult r;
    r.suite = "sign_recovery";
    std::vector<int> outcome(instances, 0);
    std::vector<index_t> rejected(instances, 0);
    parallel_for(instances, threads, [&](index_t k) {
        std::mt19937_64 rng(mix_seed(mix_seed(seed, "sign_recovery"), k));
        for (int attempt = 0; attempt < 10000; ++attempt) {
            auto ti = detail::theory_instance(rng, 50, 8, 0.1, true);
            const auto rep = sign_recovery_check(ti.X, ti.y, ti.nu, ti.lambda, ti.omega);
            if (!rep.applicable) {
                ++rejected[k];
                continue;
            }
            outcome[k] = rep.violation ? -1 : 1;
            return;
        }
        throw Error("sign_recovery suite: generator found no instance meeting the conditions");
    });
    r.instances = instances;
    for (index_t k = 0; k < instances; ++k) {
        (outcome[k] > 0 ? r.confirmed : r.violations) += 1;
        r.not_applicable += rejected[k];
    }
    return r;
}

/// Counting bound on false discoveries.
inline SuiteResult run_false_discovery(index_t instances, std::uint64_t seed, unsigned threads, int restarts = 20)
{
    SuiteResult r;
    r.suite = "false_discovery";
    std::vector<int> outcome(instances, 0);
    std::vector<index_t> rejected(instances, 0);
    parallel_for(instances, threads, [&](index_t k) {
        std::mt19937_64 rng(mix_seed(mix_seed(seed, "false_discovery"), k));
        for (int attempt = 0; attempt < 1000; ++attempt) {
            auto ti = detail::theory_instance(rng, 40, 10, 0.3, false);
            const auto rep = false_discovery_bound(ti.X, ti.y, ti.nu, ti.lambda, ti.omega, restarts, mix_seed(seed, k));
            if (!rep.precondition_holds) {
                ++rejected[k];
                continue;
            }
            outcome[k] = rep.conclusive ? 1 : 2;
            return;
        }
        throw Error("false_discovery suite: generator failed to meet the precondition");
    });
    r.instances = instances;
    for (index_t k = 0; k < instances; ++k) {
        (outcome[k] == 1 ? r.confirmed : r.inconclusive) += 1;
        r.not_applicable += rejected[k];
    }
    return r;
}

/// Joint and log-penalty objectives differ by the same constant for every beta.
inline SuiteResult run_prop1(index_t instances, std::uint64_t seed, unsigned /*threads*/)
{
    SuiteResult r;
    r.suite = "prop1";
    std::mt19937_64 rng(mix_seed(seed, "prop1"));
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.1, 5.0);
    const double gamma = U(rng), shape = U(rng), phi = U(rng);
    const index_t p = 12;
    r.instances = instances;
    double first = 0.0;
    for (index_t k = 0; k < instances; ++k) {
        Vec b(static_cast<Eigen::Index>(p));
        for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = (rng() % 4 == 0) ? 0.0 : 3.0 * N(rng);
        const double lossv = std::abs(N(rng)) * 10.0;
        const auto rep = prop1_equivalence(b, gamma, shape, phi, lossv);
        if (k == 0) first = rep.difference;
        const double dev = std::max(std::abs(rep.difference - first), std::abs(rep.difference - rep.constant));
        r.max_slack = std::max(r.max_slack, dev);
        (dev <= 1e-9 * (1.0 + std::abs(rep.constant)) ? r.confirmed : r.violations) += 1;
    }
    return r;
}

inline SuiteResult run_suite(const std::string& name, index_t instances, std::uint64_t seed, unsigned threads)
{
    if (name == "lemma1") return run_lemma1(instances, seed, threads);
    if (name == "theorem1") return run_theorem1(instances, seed, threads);
    if (name == "sign_recovery") return run_sign_recovery(instances, seed, threads);
    if (name == "false_discovery") return run_false_discovery(instances, seed, threads);
    if (name == "prop1") return run_prop1(instances, seed, threads);
    throw Error("unknown suite '" + name + "'");
}

} // namespace pose::verify
