#include "pinnlab/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pinnlab {

namespace {

// Minimizer of the quadratic through (a, fa, da) and (b, fb).
double quad_min(double a, double fa, double da, double b, double fb) {
    double d = b - a;
    double denom = fb - fa - da * d;
    if (std::abs(denom) < 1e-300) return 0.5 * (a + b);
    double t = a - 0.5 * da * d * d / denom;
    return t;
}

}  // namespace

Eigen::VectorXd Lbfgs::apply_inverse_hessian(const Eigen::VectorXd& v) const {
    Eigen::VectorXd q = v;
    std::vector<double> alpha(pairs_.size());
    for (std::size_t i = pairs_.size(); i-- > 0;) {
        alpha[i] = pairs_[i].rho * pairs_[i].s.dot(q);
        q -= alpha[i] * pairs_[i].y;
    }
    if (!pairs_.empty()) {
        const Pair& last = pairs_.back();
        q *= last.s.dot(last.y) / last.y.dot(last.y);
    }
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
        double beta = pairs_[i].rho * pairs_[i].y.dot(q);
        q += (alpha[i] - beta) * pairs_[i].s;
    }
    return q;
}

Lbfgs::StepResult Lbfgs::step(Eigen::VectorXd& x, const Objective& fn) {
    StepResult res;

    Eigen::VectorXd g(x.size());
    double f0;
    if (have_grad_) {
        g = last_grad_;
        f0 = last_loss_;
    } else {
        f0 = fn(x, g);
        ++res.evaluations;
    }
    res.loss = f0;
    res.grad_norm = g.norm();
    if (res.grad_norm < cfg_.grad_tol) {
        res.converged = true;
        return res;
    }

    Eigen::VectorXd p = -apply_inverse_hessian(g);
    double dphi0 = g.dot(p);
    if (dphi0 >= 0.0) {
        // Not a descent direction; fall back to steepest descent.
        p = -g;
        dphi0 = g.dot(p);
        pairs_.clear();
    }

    // Strong-Wolfe line search: bracketing phase followed by zoom.
    const double c1 = cfg_.c1, c2 = cfg_.c2;
    int evals = 0;
    Eigen::VectorXd g_trial(x.size());
    auto phi = [&](double a, double& dphi) {
        double f = fn(x + a * p, g_trial);
        ++evals;
        dphi = g_trial.dot(p);
        return f;
    };

    double accepted = -1.0, f_accepted = 0.0;
    double a_prev = 0.0, f_prev = f0, d_prev = dphi0;
    double a = pairs_.empty() ? std::min(1.0, 1.0 / std::max(res.grad_norm, 1e-12)) : 1.0;

    double lo = -1.0, hi = -1.0, f_lo = 0.0, d_lo = 0.0, f_hi = 0.0;
    bool zooming = false;
    while (evals < cfg_.max_line_search) {
        if (!zooming) {
            double d;
            double f = phi(a, d);
            if (f > f0 + c1 * a * dphi0 || (evals > 1 && f >= f_prev)) {
                lo = a_prev; f_lo = f_prev; d_lo = d_prev;
                hi = a; f_hi = f;
                zooming = true;
                continue;
            }
            if (std::abs(d) <= -c2 * dphi0) {
                accepted = a; f_accepted = f;
                break;
            }
            if (d >= 0.0) {
                lo = a; f_lo = f; d_lo = d;
                hi = a_prev; f_hi = f_prev;
                zooming = true;
                continue;
            }
            a_prev = a; f_prev = f; d_prev = d;
            a *= 2.0;
        } else {
            double trial = quad_min(lo, f_lo, d_lo, hi, f_hi);
            double span = std::abs(hi - lo);
            double lo_edge = std::min(lo, hi) + 0.1 * span;
            double hi_edge = std::max(lo, hi) - 0.1 * span;
            if (!(trial >= lo_edge && trial <= hi_edge)) trial = 0.5 * (lo + hi);
            double d;
            double f = phi(trial, d);
            if (f > f0 + c1 * trial * dphi0 || f >= f_lo) {
                hi = trial; f_hi = f;
            } else {
                if (std::abs(d) <= -c2 * dphi0) {
                    accepted = trial; f_accepted = f;
                    break;
                }
                if (d * (hi - lo) >= 0.0) {
                    hi = lo; f_hi = f_lo;
                }
                lo = trial; f_lo = f; d_lo = d;
            }
            if (span < 1e-16 * std::max(1.0, std::abs(lo))) break;
        }
    }
    res.evaluations += evals;

    if (accepted < 0.0) {
        pairs_.clear();
        have_grad_ = false;
        res.line_search_failed = true;
        return res;
    }

    Eigen::VectorXd x_new = x + accepted * p;
    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g_trial - g;
    double sy = s.dot(y);
    if (sy > cfg_.curvature_floor) {
        pairs_.push_back({std::move(s), std::move(y), 1.0 / sy});
        while (pairs_.size() > static_cast<std::size_t>(cfg_.history)) pairs_.pop_front();
    }

    x = std::move(x_new);
    last_grad_ = g_trial;
    last_loss_ = f_accepted;
    have_grad_ = true;
    res.loss = f_accepted;
    res.grad_norm = g_trial.norm();
    return res;
}

}  // namespace pinnlab
