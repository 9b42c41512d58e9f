#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "data.hpp"
#include "solver.hpp"

// Numerical checks of the L0-comparison results. Everything here uses the
// half squared-error loss 0.5*||X b - y||^2 with no intercept, and the
// theorem checks assume columns scaled so that x_j'x_j = n.

namespace pose::verify {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct L0Solution
{
    std::vector<index_t> support;
    Vec beta;
    double objective = 0.0;
    double nu = 0.0;
    std::vector<index_t> skipped; // rank-deficient supports or prefixes
};

namespace detail {

inline Mat columns(const Mat& X, const std::vector<index_t>& S)
{
    Mat out(X.rows(), Eigen::Index(S.size()));
    for (index_t k = 0; k < S.size(); ++k) out.col(Eigen::Index(k)) = X.col(Eigen::Index(S[k]));
    return out;
}

// Least squares on the columns in S; nullopt when X_S is rank deficient.
inline std::optional<Vec> restricted_ols(const Mat& X, const Vec& y, const std::vector<index_t>& S)
{
    Vec b = Vec::Zero(X.cols());
    if (S.empty()) return b;
    const Mat XS = columns(X, S);
    Eigen::ColPivHouseholderQR<Mat> qr(XS);
    qr.setThreshold(1e-10);
    if (qr.rank() < Eigen::Index(S.size())) return std::nullopt;
    const Vec bs = qr.solve(y);
    for (index_t k = 0; k < S.size(); ++k) b(Eigen::Index(S[k])) = bs(Eigen::Index(k));
    return b;
}

inline double half_rss(const Mat& X, const Vec& y, const Vec& b) { return 0.5 * (y - X * b).squaredNorm(); }

} // namespace detail

/// Exhaustive minimizer of 0.5*||X b - y||^2 + n*nu*|S| over all supports.
inline L0Solution l0_exhaustive(const Mat& X, const Vec& y, double nu)
{
    const index_t p = index_t(X.cols());
    if (p > 18) throw Error("l0_exhaustive: p=" + std::to_string(p) + " exceeds the enumeration limit of 18");
    if (X.rows() != y.size()) throw Error("l0_exhaustive: X and y disagree on n");
    const double n = double(X.rows());
    const Mat G = X.transpose() * X;
    const Vec c = X.transpose() * y;
    const double yy = y.squaredNorm();
    const double gscale = std::max(G.diagonal().maxCoeff(), 1e-300);

    L0Solution best;
    best.nu = nu;
    best.objective = 0.5 * yy;
    std::uint32_t best_mask = 0;
    for (std::uint32_t mask = 1; mask < (1u << p); ++mask) {
        std::vector<index_t> S;
        for (index_t j = 0; j < p; ++j)
            if (mask >> j & 1u) S.push_back(j);
        const auto s = Eigen::Index(S.size());
        Mat GS(s, s);
        Vec cS(s);
        for (Eigen::Index a = 0; a < s; ++a) {
            cS(a) = c(Eigen::Index(S[a]));
            for (Eigen::Index b = 0; b < s; ++b) GS(a, b) = G(Eigen::Index(S[a]), Eigen::Index(S[b]));
        }
        Eigen::LDLT<Mat> ldlt(GS);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-12 ||
            ldlt.vectorD().minCoeff() <= 1e-12 * gscale) {
            best.skipped.push_back(mask);
            continue;
        }
        const double fit = cS.dot(ldlt.solve(cS));
        const double obj = 0.5 * std::max(yy - fit, 0.0) + n * nu * double(S.size());
        if (obj < best.objective) {
            best.objective = obj;
            best_mask = mask;
        }
    }
    for (index_t j = 0; j < p; ++j)
        if (best_mask >> j & 1u) best.support.push_back(j);
    best.beta = *detail::restricted_ols(X, y, best.support);
    best.objective = detail::half_rss(X, y, best.beta) + n * nu * double(best.support.size());
    return best;
}

/// Minimizes ||y - X b||^2 + 2*sigma2*j over prefix supports {0..j-1}.
/// Uses one Householder QR: the prefix residual drops by (Q'y)_k^2 per column.
/// The returned objective is on that (un-halved) scale.
inline L0Solution l0_nested(const Mat& X, const Vec& y, double sigma2)
{
    if (X.rows() != y.size()) throw Error("l0_nested: X and y disagree on n");
    const index_t p = index_t(X.cols());
    const index_t n = index_t(X.rows());
    const index_t m = std::min(n, p);
    Eigen::HouseholderQR<Mat> qr(X);
    const Vec qty = qr.householderQ().transpose() * y;
    const Mat& R = qr.matrixQR();
    double rmax = 0.0;
    for (index_t k = 0; k < m; ++k) rmax = std::max(rmax, std::abs(R(Eigen::Index(k), Eigen::Index(k))));

    L0Solution out;
    out.nu = sigma2;
    double rss = y.squaredNorm();
    double best = rss;
    index_t best_j = 0;
    bool deficient = false;
    for (index_t k = 0; k < p; ++k) {
        if (k >= m || deficient || std::abs(R(Eigen::Index(k), Eigen::Index(k))) <= 1e-10 * rmax) {
            // a dependent column leaves every longer prefix rank deficient
            deficient = true;
            out.skipped.push_back(k + 1);
            continue;
        }
        rss -= qty(Eigen::Index(k)) * qty(Eigen::Index(k));
        const double obj = std::max(rss, 0.0) + 2.0 * sigma2 * double(k + 1);
        if (obj < best) {
            best = obj;
            best_j = k + 1;
        }
    }
    out.beta = Vec::Zero(Eigen::Index(p));
    if (best_j > 0) {
        const auto j = Eigen::Index(best_j);
        const Vec b = R.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(qty.head(j));
        out.beta.head(j) = b;
    }
    for (index_t k = 0; k < best_j; ++k) out.support.push_back(k);
    out.objective = (y - X * out.beta).squaredNorm() + 2.0 * sigma2 * double(best_j);
    return out;
}

/// Scales every column to x_j'x_j = n.
inline Mat normalize_columns(Mat X)
{
    const double n = double(X.rows());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double s = X.col(j).norm();
        if (s > 0.0) X.col(j) *= std::sqrt(n) / s;
    }
    return X;
}

// ---------------------------------------------------------------------------
// Restricted eigenvalue

struct REResult
{
    double value = 0.0; // best Rayleigh quotient found: an upper bound on the true constant
    Vec direction;
};

namespace detail {

// Euclidean projection of x onto the l1 ball of radius r.
inline Vec project_l1(const Vec& x, double r)
{
    if (r <= 0.0) return Vec::Zero(x.size());
    if (x.cwiseAbs().sum() <= r) return x;
    std::vector<double> a(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) a[i] = std::abs(x(i));
    std::sort(a.begin(), a.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (index_t k = 0; k < a.size(); ++k) {
        cum += a[k];
        const double t = (cum - r) / double(k + 1);
        if (k + 1 == a.size() || a[k + 1] <= t) {
            theta = t;
            break;
        }
    }
    Vec out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = std::copysign(std::max(std::abs(x(i)) - theta, 0.0), x(i));
    return out;
}

struct Cone
{
    std::vector<index_t> S, Sc;
    double radius_factor = 0.0; // L * sqrt(s)

    // Feasible point near v: shrink the off-support block into the l1 ball the
    // on-support norm allows, then normalize.
    Vec retract(const Vec& v) const
    {
        Vec out = v;
        double ns = 0.0;
        for (auto j : S) ns += v(Eigen::Index(j)) * v(Eigen::Index(j));
        ns = std::sqrt(ns);
        Vec off(Eigen::Index(Sc.size()));
        for (index_t k = 0; k < Sc.size(); ++k) off(Eigen::Index(k)) = v(Eigen::Index(Sc[k]));
        off = project_l1(off, radius_factor * ns);
        for (index_t k = 0; k < Sc.size(); ++k) out(Eigen::Index(Sc[k])) = off(Eigen::Index(k));
        const double nrm = out.norm();
        return nrm > 0.0 ? Vec(out / nrm) : out;
    }

    bool contains(const Vec& v, double slack = 1e-9) const
    {
        double ns = 0.0, off = 0.0;
        for (auto j : S) ns += v(Eigen::Index(j)) * v(Eigen::Index(j));
        for (auto j : Sc) off += std::abs(v(Eigen::Index(j)));
        return off <= radius_factor * std::sqrt(ns) * (1.0 + slack) + 1e-300;
    }
};

inline double rayleigh(const Mat& G, const Vec& v) { return v.dot(G * v) / v.squaredNorm(); }

// Projected gradient descent on the Rayleigh quotient with backtracking.
inline Vec local_search(const Mat& G, const Cone& cone, Vec v, int iters)
{
    v = cone.retract(v);
    if (v.norm() == 0.0) return v;
    double f = rayleigh(G, v);
    double step = 1.0 / std::max(G.diagonal().maxCoeff(), 1e-300);
    for (int it = 0; it < iters && step > 1e-14; ++it) {
        const Vec g = 2.0 * (G * v - f * v);
        const Vec cand = cone.retract(v - step * g);
        if (cand.norm() == 0.0) {
            step *= 0.5;
            continue;
        }
        const double fc = rayleigh(G, cand);
        if (fc < f - 1e-15 * std::abs(f)) {
            v = cand;
            f = fc;
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    return v;
}

} // namespace detail

/// Multi-start projected local search for min ||Xv||^2/(n||v||^2) over the
/// cone ||v_Sc||_1 <= L sqrt(s) ||v_S||_2. The returned value is attained by a
/// feasible direction, so it bounds the true constant from above.
inline REResult restricted_eigenvalue(const Mat& X,
                                      const std::vector<index_t>& S,
                                      double L,
                                      int restarts = 20,
                                      std::uint64_t seed = 1,
                                      const std::vector<Vec>& extra_starts = {})
{
    if (S.empty()) throw Error("restricted_eigenvalue: S must be nonempty");
    if (!(L >= 0.0)) throw Error("restricted_eigenvalue: L must be nonnegative");
    const Eigen::Index p = X.cols();
    const Mat G = X.transpose() * X / double(X.rows());
    detail::Cone cone;
    std::vector<char> in(p, 0);
    for (auto j : S) {
        if (Eigen::Index(j) >= p) throw Error("restricted_eigenvalue: support index out of range");
        in[j] = 1;
    }
    cone.S = S;
    for (Eigen::Index j = 0; j < p; ++j)
        if (!in[j]) cone.Sc.push_back(index_t(j));
    cone.radius_factor = L * std::sqrt(double(S.size()));

    std::vector<Vec> starts = extra_starts;
    {
        // smallest eigenvector of the full Gram and of the on-support block
        Eigen::SelfAdjointEigenSolver<Mat> es(G);
        starts.push_back(es.eigenvectors().col(0));
        const Mat GS = detail::columns(detail::columns(G, S).transpose(), S);
        Eigen::SelfAdjointEigenSolver<Mat> ess(GS);
        Vec v = Vec::Zero(p);
        for (index_t k = 0; k < S.size(); ++k) v(Eigen::Index(S[k])) = ess.eigenvectors()(Eigen::Index(k), 0);
        starts.push_back(v);
    }
    if (S.size() <= 4) {
        for (std::uint32_t signs = 0; signs < (1u << S.size()); ++signs) {
            // sign pattern on S, off-support mass along -G_{Sc,S} v_S (the
            // direction that cancels the most of Xv)
            Vec v = Vec::Zero(p);
            for (index_t k = 0; k < S.size(); ++k) v(Eigen::Index(S[k])) = (signs >> k & 1u) ? -1.0 : 1.0;
            Vec g = G * v;
            for (auto j : cone.Sc) v(Eigen::Index(j)) = -g(Eigen::Index(j));
            starts.push_back(v);
        }
    }
    std::mt19937_64 rng(mix_seed(seed, "re"));
    std::normal_distribution<double> N(0.0, 1.0);
    for (int r = 0; r < restarts; ++r) {
        Vec v(p);
        for (Eigen::Index j = 0; j < p; ++j) v(j) = N(rng);
        starts.push_back(v);
    }

    REResult best;
    best.value = inf;
    for (auto& v0 : starts) {
        if (v0.size() != p) continue;
        Vec v = detail::local_search(G, cone, v0, 400);
        if (v.norm() == 0.0 || !cone.contains(v)) continue;
        const double f = detail::rayleigh(G, v);
        if (f < best.value) {
            best.value = f;
            best.direction = v;
        }
    }
    if (!std::isfinite(best.value)) throw Error("restricted_eigenvalue: no feasible direction found");
    return best;
}

/// Estimates over increasing L, seeding each search with the previous best
/// direction. Nested cones make the sequence non-increasing.
inline std::vector<double> restricted_eigenvalue_ladder(const Mat& X,
                                                        const std::vector<index_t>& S,
                                                        std::vector<double> Ls,
                                                        int restarts = 20,
                                                        std::uint64_t seed = 1)
{
    for (index_t k = 1; k < Ls.size(); ++k)
        if (Ls[k] < Ls[k - 1]) throw Error("restricted_eigenvalue_ladder: L values must be non-decreasing");
    std::vector<double> out;
    std::vector<Vec> carry;
    for (double L : Ls) {
        auto r = restricted_eigenvalue(X, S, L, restarts, seed, carry);
        if (!out.empty()) r.value = std::min(r.value, out.back());
        out.push_back(r.value);
        carry = {r.direction};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Irrepresentability

struct Irrepresentability
{
    double value = 0.0;
    index_t index = 0; // attaining column (meaningful when S^c is nonempty)
    std::vector<double> per_column; // |x_j' X_S (X_S'X_S)^-1 v| for j in S^c, in column order
};

inline Irrepresentability irrepresentability(const Mat& X, const std::vector<index_t>& S, const Vec& v)
{
    if (Eigen::Index(S.size()) != v.size()) throw Error("irrepresentability: v must have one entry per support column");
    if (S.empty()) return {};
    const Mat XS = detail::columns(X, S);
    const Mat GS = XS.transpose() * XS;
    Eigen::LDLT<Mat> ldlt(GS);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-12)
        throw Error("irrepresentability: X_S'X_S is singular");
    const Vec a = XS * ldlt.solve(v);
    Irrepresentability out;
    std::vector<char> in(X.cols(), 0);
    for (auto j : S) in[j] = 1;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (in[j]) continue;
        const double val = std::abs(X.col(j).dot(a));
        out.per_column.push_back(val);
        if (val > out.value || out.per_column.size() == 1) {
            out.value = val;
            out.index = index_t(j);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weighted-L1 fit used by the theorem checks

/// argmin 0.5*||X b - y||^2 + n*lambda*sum omega_j |b_j|, no intercept,
/// solved to a tight tolerance.
inline Vec weighted_lasso(const Mat& X, const Vec& y, double lambda, const Vec& omega)
{
    std::vector<Column> cols;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        cols.push_back(Column::dense(std::vector<double>(X.col(j).data(), X.col(j).data() + X.rows())));
    Dataset d(std::move(cols), std::vector<double>(y.data(), y.data() + y.size()), Family::gaussian);
    CoordinateDescent cd(d, Family::gaussian);
    SegmentProblem pb;
    pb.lambda = lambda;
    pb.omega.assign(omega.data(), omega.data() + omega.size());
    pb.beta.assign(index_t(X.cols()), 0.0);
    pb.intercept = false;
    pb.thresh = std::max(1e-20 * y.squaredNorm(), 1e-300);
    pb.kkt_tol = 1e-10;
    const auto sol = cd.solve_segment(pb);
    if (!sol.converged) throw Error("weighted_lasso: coordinate descent did not converge");
    return Eigen::Map<const Vec>(sol.beta.data(), Eigen::Index(sol.beta.size()));
}

inline std::vector<index_t> support_of(const Vec& b)
{
    std::vector<index_t> s;
    for (Eigen::Index j = 0; j < b.size(); ++j)
        if (b(j) != 0.0) s.push_back(index_t(j));
    return s;
}

// ---------------------------------------------------------------------------
// Prediction bound and its companions

struct BoundCheck
{
    double lhs = 0.0;
    double rhs = 0.0;
    double L = 0.0;
    double re_estimate = 0.0;
    bool precondition_holds = false;
    bool conclusive = false; // lhs <= rhs with the upper-bound RE estimate
    L0Solution oracle;
    Vec fit;
};

namespace detail {

inline double omega_min_off(const Vec& omega, const std::vector<index_t>& S)
{
    std::vector<char> in(omega.size(), 0);
    for (auto j : S) in[j] = 1;
    double m = inf;
    for (Eigen::Index j = 0; j < omega.size(); ++j)
        if (!in[j]) m = std::min(m, omega(j));
    return m;
}

inline double omega_norm_on(const Vec& omega, const std::vector<index_t>& S)
{
    double s = 0.0;
    for (auto j : S) s += omega(Eigen::Index(j)) * omega(Eigen::Index(j));
    return std::sqrt(s);
}

} // namespace detail

/// ||X(bhat - b_nu)||^2/n <= 4 lambda^2 ||omega_S||^2 / phi^2(L,S), given
/// omega_min(S^c) * lambda > sqrt(2 nu).
inline BoundCheck theorem1_check(const Mat& X,
                                 const Vec& y,
                                 double nu,
                                 double lambda,
                                 const Vec& omega,
                                 int restarts = 20,
                                 std::uint64_t seed = 1)
{
    BoundCheck bc;
    bc.oracle = l0_exhaustive(X, y, nu);
    const auto& S = bc.oracle.support;
    const double margin = detail::omega_min_off(omega, S) - std::sqrt(2.0 * nu) / lambda;
    bc.precondition_holds = margin > 0.0;
    if (!bc.precondition_holds) return bc;
    bc.fit = weighted_lasso(X, y, lambda, omega);
    const double n = double(X.rows());
    bc.lhs = (X * (bc.fit - bc.oracle.beta)).squaredNorm() / n;
    const double wS = detail::omega_norm_on(omega, S);
    if (S.empty()) {
        bc.rhs = 0.0;
        bc.conclusive = bc.lhs <= 1e-20 * std::max(1.0, y.squaredNorm());
        return bc;
    }
    bc.L = wS / std::sqrt(double(S.size())) / margin;
    bc.re_estimate = restricted_eigenvalue(X, S, bc.L, restarts, seed).value;
    bc.rhs = bc.re_estimate > 0.0 ? 4.0 * lambda * lambda * wS * wS / bc.re_estimate : inf;
    bc.conclusive = bc.lhs <= bc.rhs * (1.0 + 1e-9);
    return bc;
}

struct SignRecoveryReport
{
    bool stated_condition = false;        // |x_j'A omega_S| <= 1 - sqrt(2nu)/(lambda omega_j)
    bool conservative_condition = false; // sum_k |(x_j'A)_k| omega_k <= omega_j - sqrt(2nu)/lambda
    bool beta_min_condition = false;     // restricted solution keeps the oracle's signs
    bool applicable = false;             // both no-false-positive conditions hold
    bool no_false_positives = false;
    bool signs_match = false;
    bool violation = false;
    L0Solution oracle;
    Vec fit;
};

inline SignRecoveryReport sign_recovery_check(const Mat& X, const Vec& y, double nu, double lambda, const Vec& omega)
{
    SignRecoveryReport r;
    r.oracle = l0_exhaustive(X, y, nu);
    const auto& S = r.oracle.support;
    const double n = double(X.rows());
    const double eps = std::sqrt(2.0 * nu) / lambda;
    r.fit = weighted_lasso(X, y, lambda, omega);
    std::vector<char> in(X.cols(), 0);
    for (auto j : S) in[j] = 1;

    if (S.empty()) {
        r.stated_condition = r.conservative_condition = r.beta_min_condition = true;
        for (Eigen::Index j = 0; j < X.cols(); ++j)
            if (!(omega(j) > eps)) r.stated_condition = r.conservative_condition = false;
    } else {
        const Mat XS = detail::columns(X, S);
        Eigen::LDLT<Mat> ldlt(XS.transpose() * XS);
        if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-12) return r;
        Vec wS(Eigen::Index(S.size())), sgn(Eigen::Index(S.size()));
        for (index_t k = 0; k < S.size(); ++k) {
            wS(Eigen::Index(k)) = omega(Eigen::Index(S[k]));
            sgn(Eigen::Index(k)) = r.oracle.beta(Eigen::Index(S[k])) > 0.0 ? 1.0 : -1.0;
        }
        const Mat A = XS * ldlt.solve(Mat::Identity(XS.cols(), XS.cols())); // X_S (X_S'X_S)^-1
        r.stated_condition = r.conservative_condition = true;
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            if (in[j]) continue;
            const Vec xa = A.transpose() * X.col(j);
            const double wj = omega(j);
            if (!(wj > 0.0)) {
                r.stated_condition = r.conservative_condition = false;
                continue;
            }
            if (std::abs(xa.dot(wS)) > 1.0 - eps / wj) r.stated_condition = false;
            if (xa.cwiseAbs().dot(wS) > wj - eps) r.conservative_condition = false;
        }
        const Vec shift = n * lambda * ldlt.solve(wS.cwiseProduct(sgn));
        r.beta_min_condition = true;
        for (index_t k = 0; k < S.size(); ++k) {
            const double b = r.oracle.beta(Eigen::Index(S[k]));
            const double restricted = b - shift(Eigen::Index(k));
            if (!(restricted * b > 0.0)) r.beta_min_condition = false;
        }
    }
    r.applicable = r.stated_condition && r.conservative_condition;

    r.no_false_positives = true;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        if (!in[j] && r.fit(j) != 0.0) r.no_false_positives = false;
    r.signs_match = r.no_false_positives;
    for (auto j : S) {
        const double a = r.fit(Eigen::Index(j)), b = r.oracle.beta(Eigen::Index(j));
        if (!(a * b > 0.0)) r.signs_match = false;
    }
    if (r.applicable && !r.no_false_positives) r.violation = true;
    if (r.applicable && r.beta_min_condition && !r.signs_match) r.violation = true;
    return r;
}

struct FalseDiscoveryReport
{
    index_t false_discoveries = 0;
    double bound = 0.0;
    double re_estimate = 0.0;
    bool precondition_holds = false;
    bool conclusive = false;
};

/// |S^c n Shat| <= sum_{j in S^c n Shat} 1/omega_j * (2||omega_S||/phi + sqrt(2nu)/lambda).
inline FalseDiscoveryReport false_discovery_bound(const Mat& X,
                                                  const Vec& y,
                                                  double nu,
                                                  double lambda,
                                                  const Vec& omega,
                                                  int restarts = 20,
                                                  std::uint64_t seed = 1)
{
    FalseDiscoveryReport r;
    const auto oracle = l0_exhaustive(X, y, nu);
    const auto& S = oracle.support;
    const double margin = detail::omega_min_off(omega, S) - std::sqrt(2.0 * nu) / lambda;
    r.precondition_holds = margin > 0.0;
    if (!r.precondition_holds) return r;
    const Vec fit = weighted_lasso(X, y, lambda, omega);
    std::vector<char> in(X.cols(), 0);
    for (auto j : S) in[j] = 1;
    double inv_sum = 0.0;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        if (!in[j] && fit(j) != 0.0) {
            ++r.false_discoveries;
            inv_sum += 1.0 / omega(j);
        }
    if (r.false_discoveries == 0) {
        r.conclusive = true;
        return r;
    }
    const double wS = detail::omega_norm_on(omega, S);
    double term = 0.0;
    if (!S.empty()) {
        const double L = wS / std::sqrt(double(S.size())) / margin;
        r.re_estimate = restricted_eigenvalue(X, S, L, restarts, seed).value;
        term = r.re_estimate > 0.0 ? 2.0 * wS / std::sqrt(r.re_estimate) : inf;
    }
    r.bound = inv_sum * (term + std::sqrt(2.0 * nu) / lambda);
    r.conclusive = double(r.false_discoveries) <= r.bound * (1.0 + 1e-9);
    return r;
}

// ---------------------------------------------------------------------------
// Stagewise lemma and the joint-objective equivalence

struct Lemma1Report
{
    double cov2 = 0.0;
    double mse_drop = 0.0;
    bool holds = false;
};

/// cov^2(x_j, e^S) <= MSE_S - MSE_{S+j} for a unit-variance x_j, with
/// intercept-including least squares fits.
inline Lemma1Report lemma1_check(const Mat& X, const Vec& y, const std::vector<index_t>& S, index_t j)
{
    const Eigen::Index n = X.rows();
    const double nn = double(n);
    auto design = [&](const std::vector<index_t>& cols) {
        Mat D(n, Eigen::Index(cols.size() + 1));
        D.col(0).setOnes();
        for (index_t k = 0; k < cols.size(); ++k) D.col(Eigen::Index(k + 1)) = X.col(Eigen::Index(cols[k]));
        return D;
    };
    auto residual = [&](const Mat& D) {
        Eigen::ColPivHouseholderQR<Mat> qr(D);
        qr.setThreshold(1e-10);
        if (qr.rank() < D.cols()) throw Error("lemma1_check: design is rank deficient");
        return Vec(y - D * qr.solve(y));
    };
    const Vec xj = X.col(Eigen::Index(j));
    const double var = (xj.array() - xj.mean()).square().sum() / nn;
    if (std::abs(var - 1.0) > 1e-8) throw Error("lemma1_check: column must have unit population variance");
    const Vec eS = residual(design(S));
    bool in_S = std::find(S.begin(), S.end(), j) != S.end();
    auto S2 = S;
    if (!in_S) S2.push_back(j);
    const Vec eS2 = in_S ? eS : residual(design(S2));
    const double cov = ((xj.array() - xj.mean()) * (eS.array() - eS.mean())).sum() / nn;
    Lemma1Report r;
    r.cov2 = cov * cov;
    r.mse_drop = (eS.squaredNorm() - eS2.squaredNorm()) / nn;
    r.holds = r.cov2 <= r.mse_drop + 1e-10 * (1.0 + eS.squaredNorm() / nn);
    return r;
}

struct Prop1Report
{
    std::vector<double> tau_hat;
    double joint = 0.0;
    double log_objective = 0.0;
    double difference = 0.0;
    double constant = 0.0; // p * shape * (1 - log(shape * gamma))
};

/// Joint objective phi^-1 l + sum[tau_j (1/gamma + |b_j|) - s log tau_j] at its
/// conditional mode tau_j = gamma s/(1 + gamma |b_j|), against the log penalty
/// objective phi^-1 l + sum s log(1 + gamma |b_j|).
inline Prop1Report prop1_equivalence(const Vec& beta, double gamma, double shape, double phi, double loss_value)
{
    if (!(gamma > 0.0) || !(shape > 0.0) || !(phi > 0.0))
        throw Error("prop1_equivalence: gamma, shape and phi must be positive");
    Prop1Report r;
    double joint = loss_value / phi, logobj = loss_value / phi;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        const double b = std::abs(beta(j));
        const double tau = gamma * shape / (1.0 + gamma * b);
        r.tau_hat.push_back(tau);
        joint += tau * (1.0 / gamma + b) - shape * std::log(tau);
        logobj += shape * std::log1p(gamma * b);
    }
    r.joint = joint;
    r.log_objective = logobj;
    r.difference = joint - logobj;
    r.constant = double(beta.size()) * shape * (1.0 - std::log(shape * gamma));
    return r;
}

/// The joint objective at an arbitrary tau.
inline double joint_objective(const Vec& beta, const std::vector<double>& tau, double gamma, double shape, double phi, double loss_value)
{
    double v = loss_value / phi;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        v += tau[index_t(j)] * (1.0 / gamma + std::abs(beta(j))) - shape * std::log(tau[index_t(j)]);
    return v;
}

} // namespace pose::verify
