#pragma once

#include <cmath>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "data.hpp"

namespace pose {

/// Linear predictor eta_i = alpha + x_i' beta and the intercept it was built from.
struct LinearState
{
    std::vector<double> eta;
    double alpha = 0.0;
};

// log(1 + e^x) without overflow
inline double log1pexp(double x) noexcept
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double logistic(double x) noexcept
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Per-observation binomial loss log(1+e^eta) - y*eta, accurate in both tails.
inline double binomial_term(double eta, double y) noexcept
{
    if (eta > 0.0) return (1.0 - y) * eta + std::log1p(std::exp(-eta));
    return std::log1p(std::exp(eta)) - y * eta;
}

inline double mean_of(Family f, double eta) noexcept
{
    return f == Family::gaussian ? eta : logistic(eta);
}

/// Negative log likelihood: 0.5*sum (y-eta)^2 or sum log(1+e^eta) - y*eta.
inline double loss(std::span<const double> eta, std::span<const double> y, Family family)
{
    if (eta.size() != y.size()) throw Error("loss: length mismatch");
    double s = 0.0;
    for (index_t i = 0; i < y.size(); ++i) {
        if (!std::isfinite(eta[i])) throw Error("loss: non-finite linear predictor");
        if (family == Family::gaussian) {
            const double r = y[i] - eta[i];
            s += 0.5 * r * r;
        } else {
            s += binomial_term(eta[i], y[i]);
        }
    }
    return s;
}

/// Gaussian: residual sum of squares. Binomial: 2*sum[log(1+e^eta) - y*eta]; the
/// saturated-model term is omitted, which is exact for 0/1 responses only.
inline double deviance(std::span<const double> eta, std::span<const double> y, Family family)
{
    return 2.0 * loss(eta, y, family);
}

/// Exponential-family dispersion: the mean squared residual for Gaussian, 1 for binomial.
inline double dispersion(Family family, double dev, index_t n) noexcept
{
    return family == Family::gaussian ? dev / double(n) : 1.0;
}

/// Coordinate gradient and curvature of the loss at `state`.
struct GradCurv
{
    double g = 0.0;
    double h = 0.0;
};

inline GradCurv gradient_curvature(const Dataset& d, index_t j, const LinearState& state, Family family)
{
    const auto y = d.y();
    GradCurv out;
    d.column(j).for_each_nonzero([&](index_t i, double x) {
        const double mu = mean_of(family, state.eta[i]);
        out.g -= x * (y[i] - mu);
        out.h += x * x * (family == Family::gaussian ? 1.0 : mu * (1.0 - mu));
    });
    return out;
}

inline std::vector<double> linear_predictor(const Dataset& d, double alpha, std::span<const double> beta)
{
    std::vector<double> eta(d.n(), alpha);
    for (index_t j = 0; j < d.p(); ++j)
        if (beta[j] != 0.0) d.column(j).axpy(beta[j], eta);
    return eta;
}

/// IRLS weights and working response. Binomial weights are floored at 1e-10.
struct IrlsWorking
{
    std::vector<double> v;
    std::vector<double> z;
};

inline constexpr double irls_weight_floor = 1e-10;

inline IrlsWorking irls_working(std::span<const double> eta, std::span<const double> y, Family family)
{
    if (eta.size() != y.size()) throw Error("irls_working: length mismatch");
    IrlsWorking w;
    w.v.resize(y.size());
    w.z.resize(y.size());
    for (index_t i = 0; i < y.size(); ++i) {
        if (family == Family::gaussian) {
            w.v[i] = 1.0;
            w.z[i] = y[i];
        } else {
            const double q = logistic(eta[i]);
            const double v = std::max(q * (1.0 - q), irls_weight_floor);
            w.v[i] = v;
            w.z[i] = eta[i] + (y[i] - q) / v;
        }
    }
    return w;
}

/// Intercept plus unpenalized columns fitted by Newton's method.
struct NullModel
{
    double alpha = 0.0;
    std::vector<double> beta; // length p; nonzero only on free columns
    double deviance = 0.0;
    std::vector<double> eta;
    int iterations = 0;
};

inline NullModel null_model(const Dataset& d, Family family)
{
    const index_t n = d.n();
    const auto free = d.free();
    const index_t k = free.size() + 1;
    const auto y = d.y();

    Eigen::MatrixXd Z(n, k);
    Z.col(0).setOnes();
    for (index_t c = 0; c < free.size(); ++c) {
        const auto dense = d.column(free[c]).to_dense();
        for (index_t i = 0; i < n; ++i) Z(i, Eigen::Index(c + 1)) = dense[i];
    }
    Eigen::Map<const Eigen::VectorXd> yv(y.data(), Eigen::Index(n));

    NullModel out;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(Eigen::Index(k));
    if (family == Family::binomial) {
        double ybar = yv.mean();
        if (ybar <= 0.0 || ybar >= 1.0)
            throw Error("null model: perfect separation (response is constant " + std::to_string(ybar) + ")");
        theta(0) = std::log(ybar / (1.0 - ybar));
    }

    auto eval = [&](const Eigen::VectorXd& th, std::vector<double>& eta) {
        Eigen::VectorXd e = Z * th;
        eta.assign(e.data(), e.data() + n);
        return loss(eta, y, family);
    };

    std::vector<double> eta;
    double cur = eval(theta, eta);
    std::ostringstream trace;
    auto max_mean_gradient = [&] {
        Eigen::VectorXd r(n);
        for (index_t i = 0; i < n; ++i) r(Eigen::Index(i)) = mean_of(family, eta[i]) - y[i];
        return (Z.transpose() * r).cwiseAbs().maxCoeff() / double(n);
    };
    const double gscale = 1.0 + yv.cwiseAbs().maxCoeff();
    bool converged = false;
    for (int it = 1; it <= 50; ++it) {
        Eigen::VectorXd w(n);
        Eigen::VectorXd resid(n);
        for (index_t i = 0; i < n; ++i) {
            const double mu = mean_of(family, eta[i]);
            resid(Eigen::Index(i)) = mu - y[i];
            w(Eigen::Index(i)) = family == Family::gaussian ? 1.0 : std::max(mu * (1.0 - mu), 1e-300);
        }
        const Eigen::VectorXd grad = Z.transpose() * resid;
        if (grad.cwiseAbs().maxCoeff() / double(n) < 1e-12 * gscale) {
            converged = true;
            break;
        }
        const Eigen::MatrixXd H = Z.transpose() * w.asDiagonal() * Z;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-14)
            throw Error("null model: singular information matrix (free columns collinear with intercept?)");
        const Eigen::VectorXd step = ldlt.solve(grad);
        double scale = 1.0;
        Eigen::VectorXd next = theta - step;
        std::vector<double> next_eta;
        double next_loss = eval(next, next_eta);
        int halvings = 0;
        while (!(next_loss <= cur) && halvings < 30) {
            scale *= 0.5;
            next = theta - scale * step;
            next_loss = eval(next, next_eta);
            ++halvings;
        }
        trace << "  iter " << it << ": loss " << next_loss << " step " << scale << '\n';
        if (!std::isfinite(next_loss)) throw Error("null model: Newton iterations diverged\n" + trace.str());
        if (!(next_loss <= cur)) {
            // no descent left: accept the current point if it is stationary
            converged = max_mean_gradient() < 1e-8 * gscale;
            if (!converged) throw Error("null model: Newton iterations diverged\n" + trace.str());
            break;
        }
        const double rel = (cur - next_loss) / std::max(std::abs(cur), 1e-300);
        theta = next;
        eta = std::move(next_eta);
        cur = next_loss;
        out.iterations = it;
        if (family == Family::binomial && 2.0 * cur < 1e-8 * double(n))
            throw Error("null model: perfect separation on free columns");
        if (rel < 1e-9 && max_mean_gradient() < 1e-8 * gscale) {
            converged = true;
            break;
        }
    }
    if (!converged) throw Error("null model: Newton did not converge in 50 iterations\n" + trace.str());
    out.deviance = 2.0 * cur;
    if (family == Family::binomial && out.deviance < 1e-8 * double(n))
        throw Error("null model: perfect separation on free columns");
    out.alpha = theta(0);
    out.beta.assign(d.p(), 0.0);
    for (index_t c = 0; c < free.size(); ++c) out.beta[free[c]] = theta(Eigen::Index(c + 1));
    out.eta = std::move(eta);
    return out;
}

} // namespace pose
