#pragma once

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "common.hpp"
#include "data.hpp"
#include "family.hpp"
#include "path.hpp"

namespace pose {

inline constexpr index_t no_segment = index_t(-1);

/// -2 log likelihood at a segment. Gaussian uses the plug-in variance
/// deviance/n, so the value is n*log(2*pi*dev/n) + n.
inline double minus2_loglik(Family family, double dev, index_t n)
{
    if (family == Family::binomial) return dev;
    const double nn = double(n);
    const double s2 = dev / nn;
    if (!(s2 > 0.0)) return -inf;
    return nn * std::log(2.0 * M_PI * s2) + nn;
}

inline double aic_value(double m2lf, double df) { return m2lf + 2.0 * df; }

/// Corrected AIC; +infinity when df >= n-1, where the multiplier has its pole.
inline double aicc_value(double m2lf, double df, index_t n)
{
    const double nn = double(n);
    if (df >= nn - 1.0) return inf;
    return m2lf + 2.0 * df * nn / (nn - df - 1.0);
}

inline double bic_value(double m2lf, double df, index_t n) { return m2lf + std::log(double(n)) * df; }

struct SelectionReport
{
    std::vector<double> minus2_loglik;
    std::vector<double> aic, aicc, bic;
    index_t aic_index = no_segment;
    index_t aicc_index = no_segment;
    index_t bic_index = no_segment;
};

namespace detail {

// argmin over converged segments with finite values; first index wins ties
inline index_t argmin_converged(const std::vector<double>& v, const Path& path)
{
    index_t best = no_segment;
    for (index_t t = 0; t < v.size(); ++t) {
        if (!path.segments[t].converged || !std::isfinite(v[t])) continue;
        if (best == no_segment || v[t] < v[best]) best = t;
    }
    return best;
}

} // namespace detail

inline SelectionReport information_criteria(const Path& path)
{
    SelectionReport r;
    for (const auto& seg : path.segments) {
        const double m = minus2_loglik(path.family, seg.deviance, path.n);
        r.minus2_loglik.push_back(m);
        r.aic.push_back(aic_value(m, seg.df));
        r.aicc.push_back(aicc_value(m, seg.df, path.n));
        r.bic.push_back(bic_value(m, seg.df, path.n));
    }
    r.aic_index = detail::argmin_converged(r.aic, path);
    r.aicc_index = detail::argmin_converged(r.aicc, path);
    r.bic_index = detail::argmin_converged(r.bic, path);
    return r;
}

struct CVReport
{
    index_t K = 0;
    std::uint64_t seed = 0;
    std::vector<index_t> folds;            // fold id per observation
    std::vector<double> lambda;
    std::vector<std::vector<double>> fold_deviance; // [fold][segment], mean per held-out observation
    std::vector<double> mean;              // NaN where some fold lacks the segment
    std::vector<double> se;
    std::vector<bool> included;
    index_t idx_min = no_segment;
    index_t idx_1se = no_segment;
    Path full;                             // full-data path on the same grid
};

/// Balanced fold ids: i mod K, shuffled by a generator seeded from `seed`.
inline std::vector<index_t> assign_folds(index_t n, index_t K, std::uint64_t seed)
{
    if (K < 2) throw Error("cross-validation needs at least 2 folds");
    if (K > n) throw Error("cross-validation needs K <= n (n=" + std::to_string(n) + ", K=" + std::to_string(K) + ")");
    std::vector<index_t> f(n);
    for (index_t i = 0; i < n; ++i) f[i] = i % K;
    std::mt19937_64 rng(mix_seed(seed, "folds"));
    // Fisher-Yates with explicit draws so the permutation is library independent
    for (index_t i = n - 1; i > 0; --i) {
        const index_t j = index_t(rng() % (i + 1));
        std::swap(f[i], f[j]);
    }
    return f;
}

/// K-fold cross-validation on the full-data lambda grid. Each fold path
/// re-adapts its own weights; held-out deviance is averaged per observation.
inline CVReport cross_validate(const Dataset& d,
                               Family family,
                               const PathConfig& cfg,
                               std::vector<index_t> folds,
                               unsigned threads = 1)
{
    if (folds.size() != d.n()) throw Error("fold assignment has wrong length");
    index_t K = 0;
    for (auto f : folds) K = std::max(K, f + 1);
    std::vector<index_t> sizes(K, 0);
    for (auto f : folds) ++sizes[f];
    for (index_t k = 0; k < K; ++k)
        if (sizes[k] == 0) throw Error("fold " + std::to_string(k) + " is empty");
    if (K < 2) throw Error("cross-validation needs at least 2 folds");

    CVReport rep;
    rep.K = K;
    rep.folds = folds;
    rep.full = fit_path(d, family, cfg);
    rep.lambda = rep.full.lambda;
    const index_t T = rep.lambda.size();

    PathConfig fold_cfg = cfg;
    fold_cfg.lambda_grid = rep.lambda;
    rep.fold_deviance.assign(K, {});
    parallel_for(K, threads, [&](index_t k) {
        std::vector<index_t> train, test;
        for (index_t i = 0; i < d.n(); ++i) (folds[i] == k ? test : train).push_back(i);
        const auto dtrain = d.subset_rows(train);
        const auto dtest = d.subset_rows(test);
        const auto path = fit_path(dtrain, family, fold_cfg);
        std::vector<double> out;
        for (const auto& seg : path.segments) {
            std::vector<double> b(d.p(), 0.0);
            for (auto [j, v] : seg.beta) b[j] = v;
            const auto eta = linear_predictor(dtest, seg.alpha, b);
            out.push_back(deviance(eta, dtest.y(), family) / double(test.size()));
        }
        rep.fold_deviance[k] = std::move(out);
    });

    rep.mean.assign(T, std::nan(""));
    rep.se.assign(T, std::nan(""));
    rep.included.assign(T, false);
    for (index_t t = 0; t < T; ++t) {
        bool all = t < rep.full.segments.size();
        for (index_t k = 0; k < K; ++k) all = all && t < rep.fold_deviance[k].size();
        if (!all) continue;
        double m = 0.0;
        for (index_t k = 0; k < K; ++k) m += rep.fold_deviance[k][t];
        m /= double(K);
        double ss = 0.0;
        for (index_t k = 0; k < K; ++k) ss += (rep.fold_deviance[k][t] - m) * (rep.fold_deviance[k][t] - m);
        rep.mean[t] = m;
        rep.se[t] = std::sqrt(ss / double(K - 1)) / std::sqrt(double(K));
        rep.included[t] = true;
    }
    for (index_t t = 0; t < T; ++t)
        if (rep.included[t] && (rep.idx_min == no_segment || rep.mean[t] < rep.mean[rep.idx_min])) rep.idx_min = t;
    if (rep.idx_min != no_segment) {
        const double bound = rep.mean[rep.idx_min] + rep.se[rep.idx_min];
        for (index_t t = 0; t <= rep.idx_min; ++t)
            if (rep.included[t] && rep.mean[t] <= bound) {
                rep.idx_1se = t;
                break;
            }
    }
    return rep;
}

inline CVReport cross_validate(const Dataset& d,
                               Family family,
                               const PathConfig& cfg,
                               index_t K,
                               std::uint64_t seed,
                               unsigned threads = 1)
{
    auto rep = cross_validate(d, family, cfg, assign_folds(d.n(), K, seed), threads);
    rep.seed = seed;
    return rep;
}

} // namespace pose
