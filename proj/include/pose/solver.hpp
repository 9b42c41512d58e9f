#pragma once

#include <cmath>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "common.hpp"
#include "data.hpp"
#include "family.hpp"

namespace pose {

/// One weighted-L1 penalized problem along a path. The effective penalty on
/// coordinate j is n * lambda * omega[j] * |beta_j|.
struct SegmentProblem
{
    double lambda = 0.0;
    std::vector<double> omega;
    double alpha = 0.0;              // warm start
    std::vector<double> beta;        // warm start, length p
    std::vector<double> last_zero_gradient; // carried between segments; empty means zeros
    double thresh = 1e-7;            // absolute, on max_j vh_j * delta_j^2 over a full pass
    bool intercept = true;
    bool accelerate = false;
    index_t max_passes = 100000;
    index_t max_irls = 500;
    // After the threshold test passes, KKT slack is confirmed against
    // kkt_tol * n * lambda * omega_j; failures tighten thresh and resume.
    double kkt_tol = 1e-4;
    bool trace = false;              // record the objective after every pass
};

struct SegmentSolution
{
    double alpha = 0.0;
    std::vector<double> beta;
    std::vector<index_t> support;
    index_t cd_passes = 0;
    index_t irls_iterations = 0;
    index_t accepted_accelerations = 0;
    bool converged = false;
    bool diverged = false;
    std::vector<double> last_zero_gradient;
    double objective = 0.0; // loss + n*lambda*sum omega_j |beta_j|
    double deviance = 0.0;
    double first_pass_change = 0.0; // max vh*delta^2 over the first full pass
    std::vector<double> pass_objectives; // filled when trace is on
};

struct KktReport
{
    std::vector<double> slack;          // per column, >= 0
    double worst_slack = 0.0;
    index_t worst_index = 0;
    double worst_relative = 0.0;        // slack / (n lambda omega_j); unpenalized columns use the largest penalty
    index_t worst_relative_index = 0;
};

/// Change in beta_j that minimizes 0.5*vh*(b+delta)^2 + vg*delta + penalty*|b+delta|
/// (the quadratic expanded around the current value b).
inline double coordinate_step(double vg, double vh, double b, double penalty) noexcept
{
    const double ghb = vg - vh * b;
    if (std::abs(ghb) < penalty) return -b;
    const double sgn = ghb > 0.0 ? 1.0 : (ghb < 0.0 ? -1.0 : 0.0);
    return -(vg - sgn * penalty) / vh;
}

/// Secant extrapolation from three successive iterates; coordinates without a
/// usable contraction estimate keep their current value.
inline std::vector<double> qn_proposal(std::span<const double> theta0,
                                       std::span<const double> theta_m1,
                                       std::span<const double> theta_m2)
{
    std::vector<double> out(theta0.begin(), theta0.end());
    for (index_t l = 0; l < out.size(); ++l) {
        const double u = theta_m1[l] - theta_m2[l];
        const double v = theta0[l] - theta_m1[l];
        if (u == 0.0 || u == v) continue;
        const double w = u / (u - v);
        out[l] = (1.0 - w) * theta_m1[l] + w * theta0[l];
    }
    return out;
}

/// Returns the secant proposal only when it strictly lowers `objective`.
template <class Objective>
std::optional<std::vector<double>> qn_accelerate(std::span<const double> theta0,
                                                 std::span<const double> theta_m1,
                                                 std::span<const double> theta_m2,
                                                 Objective&& objective)
{
    auto prop = qn_proposal(theta0, theta_m1, theta_m2);
    if (!(objective(std::span<const double>(prop)) < objective(theta0))) return std::nullopt;
    return prop;
}

inline KktReport kkt_check(const Dataset& d,
                           Family family,
                           double alpha,
                           std::span<const double> beta,
                           double lambda,
                           std::span<const double> omega)
{
    const auto eta = linear_predictor(d, alpha, beta);
    const auto y = d.y();
    std::vector<double> resid(d.n());
    for (index_t i = 0; i < d.n(); ++i) resid[i] = y[i] - mean_of(family, eta[i]);
    const double nl = double(d.n()) * lambda;
    KktReport rep;
    rep.slack.resize(d.p());
    // unpenalized columns are measured against the largest penalty
    double maxpen = 0.0;
    for (index_t j = 0; j < d.p(); ++j) maxpen = std::max(maxpen, nl * omega[j]);
    if (!(maxpen > 0.0)) maxpen = nl;
    for (index_t j = 0; j < d.p(); ++j) {
        const double g = -d.column(j).dot(resid);
        const double pen = nl * omega[j];
        double s;
        if (beta[j] != 0.0)
            s = std::abs(g + pen * (beta[j] > 0.0 ? 1.0 : -1.0));
        else
            s = std::max(0.0, std::abs(g) - pen);
        rep.slack[j] = s;
        if (s > rep.worst_slack) {
            rep.worst_slack = s;
            rep.worst_index = j;
        }
        const double rel = s / (pen > 0.0 ? pen : maxpen);
        if (rel > rep.worst_relative) {
            rep.worst_relative = rel;
            rep.worst_relative_index = j;
        }
    }
    return rep;
}

/// Coordinate descent for penalized weighted least squares, wrapped in IRLS for
/// the binomial family. Owns mutable scratch; one instance per thread.
class CoordinateDescent
{
public:
    CoordinateDescent(const Dataset& data, Family family)
        : data_(&data), family_(family), n_(data.n()), p_(data.p())
    {
        if (family == Family::binomial)
            for (double yi : data.y())
                if (yi < 0.0 || yi > 1.0) throw Error("binomial response outside [0,1]");
    }

    const Dataset& data() const noexcept { return *data_; }
    Family family() const noexcept { return family_; }

    /// Solves the segment exactly (Gaussian) or by IRLS (binomial).
    SegmentSolution solve_segment(const SegmentProblem& pb)
    {
        load(pb);
        SegmentSolution sol;
        double thresh = pb.thresh;
        const double thresh_floor = pb.thresh * 1e-8;
        for (bool first = true;; first = false) {
            const double keep = sol.first_pass_change;
            if (family_ == Family::gaussian)
                solve_gaussian(pb, thresh, sol);
            else
                solve_irls(pb, thresh, sol);
            if (!first) sol.first_pass_change = keep;
            if (!sol.converged || pb.kkt_tol <= 0.0 || pb.lambda <= 0.0) break;
            const auto rep = kkt_check(*data_, family_, alpha_, beta_, pb.lambda, omega_);
            if (rep.worst_relative < pb.kkt_tol || thresh <= thresh_floor) break;
            thresh *= 1e-2;
        }
        finish(pb, sol);
        return sol;
    }

    /// One penalized weighted-least-squares solve for fixed weights v and
    /// working response z, warm-started from pb.
    SegmentSolution solve_wls(const SegmentProblem& pb, std::span<const double> v, std::span<const double> z)
    {
        load(pb);
        SegmentSolution sol;
        set_working(v, z);
        run_wls(pb, pb.thresh, sol);
        sol.cd_passes = passes_;
        finish(pb, sol);
        return sol;
    }

    /// z - (current residual) as tracked incrementally; compare against a full recompute.
    std::vector<double> incremental_eta() const
    {
        std::vector<double> eta(n_);
        for (index_t i = 0; i < n_; ++i) eta[i] = z_[i] - (r_[i] + shift_);
        return eta;
    }

private:
    void load(const SegmentProblem& pb)
    {
        if (pb.omega.size() != p_) throw Error("segment problem: omega has wrong length");
        if (!(pb.thresh > 0.0)) throw Error("segment problem: thresh must be positive");
        if (!(pb.lambda >= 0.0)) throw Error("segment problem: lambda must be nonnegative");
        omega_ = pb.omega;
        nlam_ = double(n_) * pb.lambda;
        alpha_ = pb.intercept ? pb.alpha : 0.0;
        beta_ = pb.beta.empty() ? std::vector<double>(p_, 0.0) : pb.beta;
        if (beta_.size() != p_) throw Error("segment problem: beta has wrong length");
        lzg_ = pb.last_zero_gradient.empty() ? std::vector<double>(p_, 0.0) : pb.last_zero_gradient;
        intercept_ = pb.intercept;
        passes_ = 0;
        accepted_ = 0;
        trace_.clear();
    }

    void set_working(std::span<const double> v, std::span<const double> z)
    {
        const bool unit = std::all_of(v.begin(), v.end(), [](double x) { return x == 1.0; });
        z_.assign(z.begin(), z.end());
        if (unit && unit_weights_ && have_curvature_ && intercept_ == curvature_intercept_) {
            v_.assign(v.begin(), v.end());
            return; // Gaussian curvature depends on X only
        }
        v_.assign(v.begin(), v.end());
        unit_weights_ = unit;
        sumv_ = 0.0;
        for (double x : v_) sumv_ += x;
        vx_.assign(p_, 0.0);
        vh_.assign(p_, 0.0);
        for (index_t j = 0; j < p_; ++j) {
            const auto& c = data_->column(j);
            double vx = 0.0, vxx = 0.0, vnz = 0.0;
            c.for_each_nonzero([&](index_t i, double x) {
                vx += v_[i] * x;
                vxx += v_[i] * x * x;
                vnz += v_[i];
            });
            vx_[j] = vx;
            if (!intercept_) {
                vh_[j] = vxx;
            } else {
                const double m = vx / sumv_;
                double h = 0.0;
                c.for_each_nonzero([&](index_t i, double x) { h += v_[i] * (x - m) * (x - m); });
                if (c.is_sparse()) h += m * m * (sumv_ - vnz);
                vh_[j] = h <= 1e-13 * vxx ? 0.0 : h;
            }
        }
        have_curvature_ = true;
        curvature_intercept_ = intercept_;
    }

    void recompute_residuals()
    {
        r_ = z_;
        for (index_t i = 0; i < n_; ++i) r_[i] -= alpha_;
        for (index_t j = 0; j < p_; ++j)
            if (beta_[j] != 0.0) data_->column(j).axpy(-beta_[j], r_);
        shift_ = 0.0;
    }

    // Returns sumv * delta^2 for the intercept move.
    double center_intercept()
    {
        if (!intercept_) return 0.0;
        double s = 0.0;
        for (index_t i = 0; i < n_; ++i) s += v_[i] * (r_[i] + shift_);
        const double a = s / sumv_;
        alpha_ += a;
        shift_ -= a;
        return sumv_ * a * a;
    }

    double penalty() const
    {
        double s = 0.0;
        for (index_t j = 0; j < p_; ++j) s += omega_[j] * std::abs(beta_[j]);
        return nlam_ * s;
    }

    double wls_objective() const
    {
        double s = 0.0;
        for (index_t i = 0; i < n_; ++i) {
            const double r = r_[i] + shift_;
            s += v_[i] * r * r;
        }
        return 0.5 * s + penalty();
    }

    // Visits coordinate j; returns vh_j * delta^2.
    double visit(index_t j)
    {
        const double vh = vh_[j];
        if (vh <= 0.0) return 0.0;
        const auto& c = data_->column(j);
        const double vxr = unit_weights_ ? c.dot(r_) : c.dot(v_, r_);
        const double vg = -(vxr + shift_ * vx_[j]);
        const double b = beta_[j];
        if (b == 0.0) lzg_[j] = vg;
        const double delta = coordinate_step(vg, vh, b, nlam_ * omega_[j]);
        if (delta == 0.0) return 0.0;
        beta_[j] = b + delta;
        c.axpy(-delta, r_);
        if (intercept_) {
            const double a = vx_[j] / sumv_ * delta;
            alpha_ -= a;
            shift_ += a;
        }
        return vh * delta * delta;
    }

    double full_pass()
    {
        double m = 0.0;
        for (index_t j = 0; j < p_; ++j) m = std::max(m, visit(j));
        ++passes_;
        active_.clear();
        for (index_t j = 0; j < p_; ++j)
            if (vh_[j] > 0.0 && (beta_[j] != 0.0 || omega_[j] == 0.0)) active_.push_back(j);
        return m;
    }

    double active_pass()
    {
        double m = 0.0;
        for (index_t j : active_) m = std::max(m, visit(j));
        ++passes_;
        return m;
    }

    std::vector<double> theta() const
    {
        std::vector<double> t(p_ + 1);
        t[0] = alpha_;
        std::copy(beta_.begin(), beta_.end(), t.begin() + 1);
        return t;
    }

    double objective_at(std::span<const double> t)
    {
        std::vector<double> r = z_;
        for (index_t i = 0; i < n_; ++i) r[i] -= t[0];
        double pen = 0.0;
        for (index_t j = 0; j < p_; ++j) {
            if (t[j + 1] == 0.0) continue;
            data_->column(j).axpy(-t[j + 1], r);
            pen += omega_[j] * std::abs(t[j + 1]);
        }
        double s = 0.0;
        for (index_t i = 0; i < n_; ++i) s += v_[i] * r[i] * r[i];
        return 0.5 * s + nlam_ * pen;
    }

    void try_accelerate(std::deque<std::vector<double>>& snaps)
    {
        snaps.push_back(theta());
        if (snaps.size() < 3) return;
        if (snaps.size() > 3) snaps.pop_front();
        auto prop = qn_accelerate(snaps[2], snaps[1], snaps[0],
                                  [&](std::span<const double> t) { return objective_at(t); });
        snaps.clear();
        if (!prop) return;
        alpha_ = (*prop)[0];
        for (index_t j = 0; j < p_; ++j) beta_[j] = (*prop)[j + 1];
        recompute_residuals();
        center_intercept();
        ++accepted_;
        if (trace_on_) trace_.push_back(wls_objective());
    }

    // Full pass, then active-set passes until they settle, then a confirming
    // full pass; stops when a full pass moves nothing by more than thresh.
    void run_wls(const SegmentProblem& pb, double thresh, SegmentSolution& sol)
    {
        trace_on_ = pb.trace;
        recompute_residuals();
        const double moved = center_intercept();
        if (trace_on_) trace_.push_back(wls_objective());
        bool first = true;
        index_t since_recompute = 0;
        sol.converged = false;
        while (passes_ < pb.max_passes) {
            double m = full_pass();
            if (trace_on_) trace_.push_back(wls_objective());
            if (first) {
                m = std::max(m, moved);
                sol.first_pass_change = m;
                first = false;
            }
            if (m < thresh) {
                sol.converged = true;
                break;
            }
            std::deque<std::vector<double>> snaps;
            while (passes_ < pb.max_passes) {
                const double ma = active_pass();
                if (trace_on_) trace_.push_back(wls_objective());
                if (ma < thresh) break;
                if (pb.accelerate) try_accelerate(snaps);
            }
            if (++since_recompute >= 200) {
                recompute_residuals();
                center_intercept();
                since_recompute = 0;
            }
        }
    }

    void solve_gaussian(const SegmentProblem& pb, double thresh, SegmentSolution& sol)
    {
        if (ones_.size() != n_) ones_.assign(n_, 1.0);
        set_working(ones_, data_->y());
        run_wls(pb, thresh, sol);
        sol.cd_passes = passes_;
    }

    double true_objective(std::span<const double> eta) const
    {
        return loss(eta, data_->y(), family_) + penalty();
    }

    void solve_irls(const SegmentProblem& pb, double thresh, SegmentSolution& sol)
    {
        const auto y = data_->y();
        auto eta = linear_predictor(*data_, alpha_, beta_);
        double obj = true_objective(eta);
        sol.converged = false;
        for (index_t it = 0; it < pb.max_irls; ++it) {
            const auto w = irls_working(eta, y, family_);
            const double old_alpha = alpha_;
            const auto old_beta = beta_;
            set_working(w.v, w.z);
            SegmentSolution inner;
            run_wls(pb, thresh, inner);
            ++sol.irls_iterations;
            if (sol.irls_iterations == 1) sol.first_pass_change = inner.first_pass_change;

            auto new_eta = linear_predictor(*data_, alpha_, beta_);
            double new_obj = true_objective(new_eta);
            int halvings = 0;
            while (!(new_obj <= obj + 1e-12 * std::abs(obj)) && halvings < 30) {
                alpha_ = 0.5 * (alpha_ + old_alpha);
                for (index_t j = 0; j < p_; ++j) {
                    beta_[j] = 0.5 * (beta_[j] + old_beta[j]);
                    if (old_beta[j] == 0.0 && std::abs(beta_[j]) < 1e-300) beta_[j] = 0.0;
                }
                new_eta = linear_predictor(*data_, alpha_, beta_);
                new_obj = true_objective(new_eta);
                ++halvings;
            }
            if (!(new_obj <= obj + 1e-12 * std::abs(obj))) {
                alpha_ = old_alpha;
                beta_ = old_beta;
                sol.diverged = true;
                break;
            }
            eta = std::move(new_eta);
            obj = new_obj;
            if (deviance(eta, y, family_) < 1e-8 * double(n_)) {
                sol.diverged = true; // saturated fit: separation
                break;
            }
            if (inner.first_pass_change < thresh && halvings == 0) {
                sol.converged = true;
                break;
            }
        }
        sol.cd_passes += passes_;
        passes_ = 0;
    }

    void finish(const SegmentProblem& pb, SegmentSolution& sol)
    {
        (void)pb;
        sol.alpha = alpha_;
        sol.beta = beta_;
        sol.support.clear();
        for (index_t j = 0; j < p_; ++j)
            if (beta_[j] != 0.0) sol.support.push_back(j);
        sol.accepted_accelerations = accepted_;
        sol.last_zero_gradient = lzg_;
        const auto eta = linear_predictor(*data_, alpha_, beta_);
        bool finite = std::isfinite(alpha_);
        for (double b : beta_) finite = finite && std::isfinite(b);
        if (!finite) {
            sol.converged = false;
            sol.diverged = true;
            sol.objective = inf;
            sol.deviance = inf;
            return;
        }
        sol.deviance = deviance(eta, data_->y(), family_);
        sol.objective = 0.5 * sol.deviance + penalty();
        sol.pass_objectives = trace_;
    }

    const Dataset* data_;
    Family family_;
    index_t n_, p_;

    std::vector<double> omega_, beta_, lzg_;
    double alpha_ = 0.0;
    double nlam_ = 0.0;
    bool intercept_ = true;

    std::vector<double> v_, z_, r_, vx_, vh_, ones_;
    double sumv_ = 0.0;
    double shift_ = 0.0;
    bool unit_weights_ = false;
    bool have_curvature_ = false;
    bool curvature_intercept_ = true;

    std::vector<index_t> active_;
    index_t passes_ = 0;
    index_t accepted_ = 0;
    bool trace_on_ = false;
    std::vector<double> trace_;
};

} // namespace pose
