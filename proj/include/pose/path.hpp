#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "common.hpp"
#include "data.hpp"
#include "family.hpp"
#include "solver.hpp"

namespace pose {

/// Penalty scale of the log penalty. Infinity is a sentinel with exact limit
/// rules: a coefficient is unpenalized in every segment after it first enters.
struct Gamma
{
    double value = 0.0;

    static Gamma infinite() noexcept { return {inf}; }
    bool is_infinite() const noexcept { return std::isinf(value); }
    bool is_lasso() const noexcept { return value == 0.0; }
};

struct PathConfig
{
    Gamma gamma{};
    index_t nlambda = 100;
    double lambda_min_ratio = 0.01;
    bool standardize = true;
    bool accelerate = false;
    std::optional<double> thresh;              // relative to null deviance; default 1e-7
    std::vector<double> lambda_grid;           // explicit grid; overrides nlambda/ratio
    std::vector<double> weight_multipliers;    // fixed per-column multipliers (empty = all 1)
    index_t max_passes = 100000;
    index_t max_irls = 500;
    double kkt_tol = 1e-4;

    double relative_thresh() const { return thresh.value_or(1e-7); }

    void validate(index_t p) const
    {
        if (nlambda < 1) throw Error("nlambda must be at least 1");
        if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0))
            throw Error("lambda-min-ratio must be in (0,1)");
        if (!(gamma.value >= 0.0)) throw Error("gamma must be nonnegative");
        if (thresh && !(*thresh > 0.0)) throw Error("thresh must be positive");
        if (!weight_multipliers.empty() && weight_multipliers.size() != p)
            throw Error("weight multipliers must have one entry per column");
        for (double m : weight_multipliers)
            if (!(m >= 0.0) || !std::isfinite(m)) throw Error("weight multipliers must be finite and nonnegative");
        for (index_t t = 0; t < lambda_grid.size(); ++t)
            if (!(lambda_grid[t] > 0.0) || (t > 0 && !(lambda_grid[t] < lambda_grid[t - 1])))
                throw Error("explicit lambda grid must be positive and strictly decreasing");
    }
};

struct PathSegment
{
    index_t t = 0;
    double lambda = 0.0;
    double alpha = 0.0;
    std::vector<std::pair<index_t, double>> beta; // nonzero coefficients, ascending index
    std::vector<double> omega;
    double df = 0.0;
    double deviance = 0.0;
    double objective = 0.0;
    index_t support = 0;    // penalized nonzeros
    bool converged = false;
    index_t cd_passes = 0;
    index_t irls_iterations = 0;
};

struct Path
{
    PathConfig config;
    Family family = Family::gaussian;
    index_t n = 0;
    index_t p = 0;
    index_t free_count = 0;
    double null_deviance = 0.0;
    double lambda1 = 0.0;
    std::vector<double> lambda;
    std::vector<PathSegment> segments;
    bool truncated = false;
    std::string warning;

    std::vector<double> dense_beta(index_t t) const
    {
        std::vector<double> b(p, 0.0);
        for (auto [j, v] : segments.at(t).beta) b[j] = v;
        return b;
    }
};

/// Penalty scales times any fixed multipliers: the weight a column carries
/// while its coefficient is zero.
inline std::vector<double> base_weights(const Dataset& d, const PathConfig& cfg)
{
    auto s = penalty_scales(d, cfg.standardize).s;
    if (!cfg.weight_multipliers.empty())
        for (index_t j = 0; j < s.size(); ++j) s[j] *= cfg.weight_multipliers[j];
    return s;
}

/// Null-model coordinate gradients -sum x_ij (y_i - mu_i).
inline std::vector<double> null_gradients(const Dataset& d, Family family, const NullModel& null)
{
    std::vector<double> resid(d.n());
    for (index_t i = 0; i < d.n(); ++i) resid[i] = d.y()[i] - mean_of(family, null.eta[i]);
    std::vector<double> g(d.p());
    for (index_t j = 0; j < d.p(); ++j) g[j] = -d.column(j).dot(resid);
    return g;
}

/// Smallest lambda at which every penalized coefficient is zero:
/// max_j |g_j(null)| / (n s_j) over penalized columns.
inline double lambda_start(const Dataset& d, Family family, std::span<const double> scales, const NullModel& null)
{
    const auto g = null_gradients(d, family, null);
    double best = 0.0;
    double gmax = 0.0;
    double gscale = 0.0;
    for (index_t j = 0; j < d.p(); ++j) {
        if (!(scales[j] > 0.0) || d.col_sd(j) == 0.0) continue;
        best = std::max(best, std::abs(g[j]) / (double(d.n()) * scales[j]));
        gmax = std::max(gmax, std::abs(g[j]));
        double sc = 0.0;
        d.column(j).for_each_nonzero([&](index_t i, double x) {
            sc += std::abs(x) * (std::abs(d.y()[i]) + std::abs(mean_of(family, null.eta[i])));
        });
        gscale = std::max(gscale, sc);
    }
    if (!(gmax > 1e-12 * gscale)) throw Error("response orthogonal to all penalized covariates");
    return best;
}

/// Geometric grid from lambda1 down to exactly lambda1 * ratio.
inline std::vector<double> make_grid(double lambda1, index_t T, double ratio)
{
    if (!(lambda1 > 0.0)) throw Error("lambda1 must be positive");
    if (T < 1) throw Error("grid needs at least one segment");
    if (!(ratio > 0.0 && ratio < 1.0)) throw Error("lambda-min-ratio must be in (0,1)");
    std::vector<double> grid(T);
    grid[0] = lambda1;
    if (T == 1) return grid;
    const double logr = std::log(ratio);
    for (index_t t = 1; t + 1 < T; ++t) grid[t] = lambda1 * std::exp(logr * double(t) / double(T - 1));
    grid[T - 1] = lambda1 * ratio;
    return grid;
}

/// Gamma-lasso weights omega_j = s_j / (1 + gamma |beta_j|) from the previous
/// segment's coefficients; zero for free columns.
inline std::vector<double> update_weights(std::span<const double> beta_prev, Gamma gamma, std::span<const double> scales)
{
    std::vector<double> w(scales.size());
    for (index_t j = 0; j < scales.size(); ++j) {
        const double s = scales[j];
        const double b = std::abs(beta_prev[j]);
        if (s == 0.0)
            w[j] = 0.0;
        else if (gamma.is_infinite())
            w[j] = b == 0.0 ? s : 0.0;
        else
            w[j] = s / (1.0 + gamma.value * b);
    }
    return w;
}

/// Degrees of freedom: free count + intercept + sum over penalized j of the
/// Gamma(shape = n*lambda*s_j/(gamma*phi), scale = gamma) distribution function
/// at |g_j|/phi, with g_j the most recent gradient seen while beta_j was zero.
inline double df_estimate(double lambda,
                          index_t n,
                          Gamma gamma,
                          double phi,
                          std::span<const double> last_zero_gradient,
                          std::span<const double> scales,
                          index_t free_count)
{
    double df = double(free_count) + 1.0;
    const double nl = double(n) * lambda;
    for (index_t j = 0; j < scales.size(); ++j) {
        if (!(scales[j] > 0.0)) continue;
        const double g = std::abs(last_zero_gradient[j]) / phi;
        if (gamma.is_lasso()) {
            df += g > nl * scales[j] / phi ? 1.0 : 0.0;
        } else if (gamma.is_infinite()) {
            df += g > 0.0 ? 1.0 : 0.0;
        } else {
            const double shape = nl * scales[j] / (gamma.value * phi);
            if (g <= 0.0) continue;
            if (!(shape > std::numeric_limits<double>::min())) {
                df += 1.0;
                continue;
            }
            df += boost::math::gamma_p(shape, g / gamma.value);
        }
    }
    return df;
}

/// Fits the path of one-step weighted-L1 estimators down the lambda grid.
inline Path fit_path(const Dataset& d, Family family, const PathConfig& cfg)
{
    cfg.validate(d.p());
    if (family != d.family() && family == Family::binomial)
        for (double y : d.y())
            if (y < 0.0 || y > 1.0) throw Error("binomial response outside [0,1]");

    Path path;
    path.config = cfg;
    path.family = family;
    path.n = d.n();
    path.p = d.p();
    path.free_count = d.free_count();

    const auto null = null_model(d, family);
    path.null_deviance = null.deviance;
    const auto scales = base_weights(d, cfg);
    path.lambda1 = lambda_start(d, family, scales, null);
    path.lambda = cfg.lambda_grid.empty() ? make_grid(path.lambda1, cfg.nlambda, cfg.lambda_min_ratio)
                                          : cfg.lambda_grid;

    CoordinateDescent solver(d, family);
    std::vector<double> beta = null.beta;
    double alpha = null.alpha;
    auto lzg = null_gradients(d, family, null);
    const double thresh = cfg.relative_thresh() * std::max(null.deviance, 1e-300);
    index_t penalized = 0;
    for (double s : scales) penalized += s > 0.0 ? 1 : 0;

    for (index_t t = 0; t < path.lambda.size(); ++t) {
        SegmentProblem pb;
        pb.lambda = path.lambda[t];
        // lambda1 is the exact boundary; nudge it so rounding cannot admit a
        // coefficient of size ~1e-17.
        if (t == 0 && pb.lambda == path.lambda1) pb.lambda *= 1.0 + 1e-10;
        pb.omega = update_weights(beta, cfg.gamma, scales);
        pb.alpha = alpha;
        pb.beta = beta;
        pb.last_zero_gradient = lzg;
        pb.thresh = thresh;
        pb.accelerate = cfg.accelerate;
        pb.max_passes = cfg.max_passes;
        pb.max_irls = cfg.max_irls;
        pb.kkt_tol = cfg.kkt_tol;
        auto sol = solver.solve_segment(pb);
        if (sol.diverged) {
            path.truncated = true;
            path.warning = "path truncated at segment " + std::to_string(t + 1) +
                           ": fit diverged (perfect separation or infinite likelihood)";
            break;
        }
        PathSegment seg;
        seg.t = t;
        seg.lambda = path.lambda[t];
        seg.alpha = sol.alpha;
        for (auto j : sol.support) seg.beta.emplace_back(j, sol.beta[j]);
        for (auto j : sol.support) seg.support += scales[j] > 0.0 ? 1 : 0;
        seg.omega = std::move(pb.omega);
        seg.deviance = sol.deviance;
        seg.objective = sol.objective;
        seg.converged = sol.converged;
        seg.cd_passes = sol.cd_passes;
        seg.irls_iterations = sol.irls_iterations;
        const double phi = dispersion(family, sol.deviance, d.n());
        seg.df = df_estimate(pb.lambda, d.n(), cfg.gamma, phi > 0.0 ? phi : 1e-300, sol.last_zero_gradient,
                             scales, d.free_count());
        seg.df = std::clamp(seg.df, double(d.free_count()) + 1.0, double(penalized + d.free_count()) + 1.0);
        path.segments.push_back(std::move(seg));

        beta = std::move(sol.beta);
        alpha = sol.alpha;
        lzg = std::move(sol.last_zero_gradient);
    }
    return path;
}

} // namespace pose
