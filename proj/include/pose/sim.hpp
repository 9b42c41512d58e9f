#pragma once

#include <algorithm>
#include <chrono>
#include <tuple>
#include <cmath>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "data.hpp"
#include "path.hpp"
#include "selection.hpp"
#include "verify.hpp"

namespace pose::sim {

inline const std::vector<std::string>& all_selectors()
{
    static const std::vector<std::string> s{"CV.min", "CV.1se", "AICc", "AIC", "BIC"};
    return s;
}

struct SimConfig
{
    index_t n = 1000;
    index_t p = 1000;
    double rho = 0.5;
    double snr = 2.0;
    index_t reps = 1;
    std::uint64_t seed = 1;
    std::vector<double> gammas{0.0, 2.0, 10.0};
    std::vector<std::string> selectors = all_selectors();
    index_t K = 5;
    bool adaptive_lasso = true;  // include the marginal adaptive-lasso comparator
    bool column_mask = false;    // one Bernoulli draw per column instead of per element
    bool exponential_coefficients = false; // beta_j = exp(-j/50), without the 1/j factor
    index_t nlambda = 100;
    double lambda_min_ratio = 0.01;
    bool timing = false;         // record wall seconds; otherwise 0 so output is reproducible
    unsigned threads = 1;

    void validate() const
    {
        if (!(rho >= 0.0 && rho < 1.0)) throw Error("rho must be in [0,1)");
        if (!(snr > 0.0)) throw Error("snr must be positive");
        if (n < 2 || p < 1) throw Error("simulation needs n >= 2 and p >= 1");
        if (reps < 1) throw Error("reps must be at least 1");
        for (const auto& s : selectors)
            if (std::find(all_selectors().begin(), all_selectors().end(), s) == all_selectors().end())
                throw Error("unknown selector '" + s + "'");
        for (double g : gammas)
            if (!(g >= 0.0)) throw Error("gammas must be nonnegative");
    }
};

struct Instance
{
    Eigen::MatrixXd X;
    Eigen::VectorXd beta, eta, y, ytilde;
    double sigma = 0.0;
    index_t regenerations = 0;
    std::vector<index_t> kept; // columns handed to the estimators; all of them unless column_mask zeroes some
};

inline double true_coefficient(index_t j1, bool exponential = false) // 1-based index
{
    const double e = std::exp(-double(j1) / 50.0);
    return exponential ? e : e / double(j1);
}

inline double sample_sd(const Eigen::VectorXd& v)
{
    if (v.size() < 2) return 0.0;
    return std::sqrt((v.array() - v.mean()).square().sum() / double(v.size() - 1));
}

/// x = u * z with AR(1) rows u and Bernoulli(0.5) mask z; y, ytilde ~ N(eta, sigma^2)
/// where sigma = sd(eta)/snr on the realized eta.
inline Instance gen_instance(const SimConfig& cfg, index_t rep)
{
    Instance inst;
    const auto n = Eigen::Index(cfg.n), p = Eigen::Index(cfg.p);
    for (std::uint64_t salt = 0;; ++salt) {
        std::mt19937_64 rng(mix_seed(mix_seed(mix_seed(cfg.seed, "instance"), rep), salt));
        std::normal_distribution<double> N(0.0, 1.0);
        const double c = std::sqrt(1.0 - cfg.rho * cfg.rho);
        inst.X.resize(n, p);
        std::vector<char> colmask(std::size_t(p), 1);
        if (cfg.column_mask)
            for (auto& m : colmask) m = char(rng() & 1u);
        for (Eigen::Index i = 0; i < n; ++i) {
            double u = N(rng);
            for (Eigen::Index j = 0; j < p; ++j) {
                if (j > 0) u = cfg.rho * u + c * N(rng);
                const bool keep = cfg.column_mask ? colmask[std::size_t(j)] != 0 : (rng() & 1u) != 0;
                inst.X(i, j) = keep ? u : 0.0;
            }
        }
        inst.beta.resize(p);
        for (Eigen::Index j = 0; j < p; ++j)
            inst.beta(j) = true_coefficient(index_t(j + 1), cfg.exponential_coefficients);
        inst.eta = inst.X * inst.beta;
        const double sd = sample_sd(inst.eta);
        bool constant_column = false;
        inst.kept.clear();
        for (Eigen::Index j = 0; j < p && !constant_column; ++j) {
            if (!colmask[std::size_t(j)]) continue; // masked out: all zero, left out of every fit
            constant_column = (inst.X.col(j).array() == inst.X(0, j)).all();
            inst.kept.push_back(index_t(j));
        }
        if (!(sd > 0.0) || constant_column || inst.kept.empty()) {
            std::cerr << "simulate: rep " << rep << " draw " << salt << " degenerate; regenerating\n";
            ++inst.regenerations;
            continue;
        }
        inst.sigma = sd / cfg.snr;
        inst.y.resize(n);
        inst.ytilde.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) inst.y(i) = inst.eta(i) + inst.sigma * N(rng);
        for (Eigen::Index i = 0; i < n; ++i) inst.ytilde(i) = inst.eta(i) + inst.sigma * N(rng);
        return inst;
    }
}

inline Dataset to_dataset(const Eigen::MatrixXd& X, const Eigen::VectorXd& y)
{
    std::vector<Column> cols;
    cols.reserve(std::size_t(X.cols()));
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        cols.push_back(Column::from_values(std::vector<double>(X.col(j).data(), X.col(j).data() + X.rows())));
    return Dataset(std::move(cols), std::vector<double>(y.data(), y.data() + y.size()), Family::gaussian);
}

/// Fixed multipliers 1/|cor(x_j, y)|, capped at 1e8.
inline std::vector<double> marginal_weights(const Dataset& d)
{
    const auto y = d.y();
    double ym = 0.0;
    for (double v : y) ym += v;
    ym /= double(d.n());
    double syy = 0.0;
    for (double v : y) syy += (v - ym) * (v - ym);
    std::vector<double> w(d.p());
    for (index_t j = 0; j < d.p(); ++j) {
        const double m = d.col_mean(j);
        double sxy = 0.0;
        for (index_t i = 0; i < d.n(); ++i) sxy += (d.column(j).at(i) - m) * (y[i] - ym);
        const double sxx = d.col_sd(j) * d.col_sd(j) * double(d.n());
        const double r = (sxx > 0.0 && syy > 0.0) ? sxy / std::sqrt(sxx * syy) : 0.0;
        w[j] = std::abs(r) > 1e-8 ? std::min(1.0 / std::abs(r), 1e8) : 1e8;
    }
    return w;
}

/// One weighted-L1 path with weights fixed at the marginal multipliers.
inline Path marginal_adaptive_lasso(const Dataset& d, PathConfig cfg)
{
    cfg.gamma = Gamma{0.0};
    cfg.weight_multipliers = marginal_weights(d);
    return fit_path(d, Family::gaussian, cfg);
}

struct Metrics
{
    double r2 = 0.0;
    double fdr = 0.0;
    double sensitivity = 0.0;
    index_t support = 0;
};

inline Metrics metrics(const std::vector<double>& beta_hat,
                       const std::vector<char>& oracle_support,
                       const Eigen::VectorXd& eta_hat,
                       const Eigen::VectorXd& ytilde)
{
    Metrics m;
    index_t tp = 0, fp = 0, truth = 0;
    for (index_t j = 0; j < beta_hat.size(); ++j) {
        const bool sel = beta_hat[j] != 0.0;
        const bool on = oracle_support[j] != 0;
        truth += on;
        tp += sel && on;
        fp += sel && !on;
    }
    m.support = tp + fp;
    m.fdr = m.support > 0 ? double(fp) / double(m.support) : 0.0;
    m.sensitivity = truth > 0 ? double(tp) / double(truth) : 0.0;
    auto var = [](const Eigen::VectorXd& v) { return (v.array() - v.mean()).square().sum() / double(v.size() - 1); };
    m.r2 = 1.0 - var(ytilde - eta_hat) / var(ytilde);
    return m;
}

struct Row
{
    index_t rep = 0;
    std::string method; // "gl" or "mal"
    double gamma = 0.0;
    std::string selector;
    Metrics m;
    double seconds = 0.0;
};

struct Aggregate
{
    std::string method;
    double gamma = 0.0;
    std::string selector;
    index_t count = 0;
    double r2_mean = 0.0, r2_se = 0.0;
    double fdr_mean = 0.0, fdr_se = 0.0;
    double sens_mean = 0.0, sens_se = 0.0;
    double support_mean = 0.0;
};

struct SimResult
{
    std::vector<Row> rows;
    std::vector<Aggregate> aggregates;
    index_t failed_reps = 0;
    std::vector<double> path_seconds; // wall time of every full-data path fit
};

inline std::vector<Row> run_rep(const SimConfig& cfg, index_t rep, std::vector<double>* path_seconds = nullptr)
{
    const auto inst = gen_instance(cfg, rep);
    const bool all_kept = inst.kept.size() == cfg.p;
    Eigen::MatrixXd Xk;
    if (!all_kept) {
        Xk.resize(inst.X.rows(), Eigen::Index(inst.kept.size()));
        for (index_t k = 0; k < inst.kept.size(); ++k) Xk.col(Eigen::Index(k)) = inst.X.col(Eigen::Index(inst.kept[k]));
    }
    const Eigen::MatrixXd& X = all_kept ? inst.X : Xk;
    const auto d = to_dataset(X, inst.y);
    const auto oracle = verify::l0_nested(X, inst.y, inst.sigma * inst.sigma);
    std::vector<char> on(d.p(), 0);
    for (auto j : oracle.support) on[j] = 1;

    PathConfig base;
    base.nlambda = cfg.nlambda;
    base.lambda_min_ratio = cfg.lambda_min_ratio;
    const auto folds = assign_folds(d.n(), cfg.K, mix_seed(mix_seed(cfg.seed, "cv"), rep));
    const bool need_cv = std::any_of(cfg.selectors.begin(), cfg.selectors.end(),
                                     [](const std::string& s) { return s.rfind("CV", 0) == 0; });

    struct Method
    {
        std::string name;
        double gamma;
        PathConfig cfg;
    };
    std::vector<Method> methods;
    for (double g : cfg.gammas) {
        PathConfig c = base;
        c.gamma = Gamma{g};
        methods.push_back({"gl", g, c});
    }
    if (cfg.adaptive_lasso) {
        PathConfig c = base;
        c.weight_multipliers = marginal_weights(d); // full-data weights, reused in every fold
        methods.push_back({"mal", 0.0, c});
    }

    std::vector<Row> rows;
    for (const auto& meth : methods) {
        const auto t0 = std::chrono::steady_clock::now();
        CVReport cv;
        Path full;
        if (need_cv) {
            cv = cross_validate(d, Family::gaussian, meth.cfg, folds, 1);
            full = cv.full;
        } else {
            full = fit_path(d, Family::gaussian, meth.cfg);
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (path_seconds) {
            // time the full-data path on its own
            const auto t1 = std::chrono::steady_clock::now();
            (void)fit_path(d, Family::gaussian, meth.cfg);
            path_seconds->push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count());
        }
        const auto ic = information_criteria(full);
        for (const auto& sel : cfg.selectors) {
            index_t t = no_segment;
            if (sel == "CV.min") t = cv.idx_min;
            else if (sel == "CV.1se") t = cv.idx_1se;
            else if (sel == "AICc") t = ic.aicc_index;
            else if (sel == "AIC") t = ic.aic_index;
            else if (sel == "BIC") t = ic.bic_index;
            if (t == no_segment) throw Error("selector " + sel + " found no admissible segment");
            const auto b = full.dense_beta(t);
            Eigen::VectorXd eta_hat = X * Eigen::Map<const Eigen::VectorXd>(b.data(), Eigen::Index(b.size()));
            eta_hat.array() += full.segments[t].alpha;
            Row row;
            row.rep = rep;
            row.method = meth.name;
            row.gamma = meth.gamma;
            row.selector = sel;
            row.m = metrics(b, on, eta_hat, inst.ytilde);
            row.seconds = cfg.timing ? secs : 0.0;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

inline std::vector<Aggregate> aggregate(const std::vector<Row>& rows)
{
    std::map<std::tuple<std::string, double, std::string>, std::vector<const Row*>> groups;
    std::vector<std::tuple<std::string, double, std::string>> order;
    for (const auto& r : rows) {
        auto key = std::make_tuple(r.method, r.gamma, r.selector);
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(&r);
    }
    std::vector<Aggregate> out;
    for (const auto& key : order) {
        const auto& g = groups[key];
        Aggregate a;
        std::tie(a.method, a.gamma, a.selector) = key;
        a.count = g.size();
        auto stat = [&](auto get, double& mean, double* se) {
            double s = 0.0;
            for (auto* r : g) s += get(*r);
            mean = s / double(g.size());
            if (!se) return;
            double ss = 0.0;
            for (auto* r : g) ss += (get(*r) - mean) * (get(*r) - mean);
            *se = g.size() > 1 ? std::sqrt(ss / double(g.size() - 1) / double(g.size())) : 0.0;
        };
        stat([](const Row& r) { return r.m.r2; }, a.r2_mean, &a.r2_se);
        stat([](const Row& r) { return r.m.fdr; }, a.fdr_mean, &a.fdr_se);
        stat([](const Row& r) { return r.m.sensitivity; }, a.sens_mean, &a.sens_se);
        stat([](const Row& r) { return double(r.m.support); }, a.support_mean, nullptr);
        out.push_back(std::move(a));
    }
    return out;
}

/// Runs every replicate (in parallel across reps) and aggregates in rep order.
inline SimResult run_experiment(const SimConfig& cfg)
{
    cfg.validate();
    std::vector<std::vector<Row>> per_rep(cfg.reps);
    std::vector<std::vector<double>> secs(cfg.reps);
    std::vector<std::string> failures(cfg.reps);
    parallel_for(cfg.reps, cfg.threads, [&](index_t r) {
        try {
            per_rep[r] = run_rep(cfg, r, cfg.timing ? &secs[r] : nullptr);
        } catch (const std::exception& e) {
            failures[r] = e.what();
        }
    });
    SimResult res;
    for (index_t r = 0; r < cfg.reps; ++r) {
        if (!failures[r].empty()) {
            std::cerr << "simulate: rep " << r << " failed: " << failures[r] << '\n';
            ++res.failed_reps;
            continue;
        }
        for (auto& row : per_rep[r]) res.rows.push_back(std::move(row));
        for (double s : secs[r]) res.path_seconds.push_back(s);
    }
    res.aggregates = aggregate(res.rows);
    return res;
}

/// Three standard normal covariates with pairwise correlation 0.9 and
/// y = 4 + 3 x1 - x2 + N(0,1).
inline Dataset fig3_fixture(std::uint64_t seed, index_t n = 1000)
{
    std::mt19937_64 rng(mix_seed(seed, "fig3"));
    std::normal_distribution<double> N(0.0, 1.0);
    std::vector<std::vector<double>> x(3, std::vector<double>(n));
    std::vector<double> y(n);
    const double a = std::sqrt(0.9), b = std::sqrt(0.1);
    for (index_t i = 0; i < n; ++i) {
        const double w = N(rng);
        for (int j = 0; j < 3; ++j) x[j][i] = a * w + b * N(rng);
        y[i] = 4.0 + 3.0 * x[0][i] - x[1][i] + N(rng);
    }
    std::vector<Column> cols;
    for (auto& c : x) cols.push_back(Column::dense(std::move(c)));
    return Dataset(std::move(cols), std::move(y), Family::gaussian, {}, {"x1", "x2", "x3"});
}

} // namespace pose::sim
