#include "odereg/quasi_newton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>

namespace odereg {

std::string to_string(BfgsStatus s) {
    switch (s) {
        case BfgsStatus::Converged: return "converged";
        case BfgsStatus::MaxIterations: return "max_iterations";
        case BfgsStatus::LineSearchFailed: return "line_search_failed";
        case BfgsStatus::NonFiniteStart: return "non_finite_start";
    }
    return "?";
}

namespace {

struct Trial {
    double alpha = 0.0;
    double f = 0.0;
    double d = 0.0;  // directional derivative
    Eigen::VectorXd x;
    Eigen::VectorXd g;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), or NaN.
double cubic_min(double a, double fa, double da, double b, double fb, double db) {
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    return b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
}

class LineSearch {
public:
    LineSearch(const ObjectiveFn& f, const BfgsOptions& opt, const Eigen::VectorXd& x, const Eigen::VectorXd& p,
               double f0, double d0, std::size_t& evals)
        : f_(f), opt_(opt), x_(x), p_(p), f0_(f0), d0_(d0), eps_(1e-14 * std::abs(f0)), evals_(evals) {}

    // Strong-Wolfe step, or false when none was found within the budget.
    bool run(double alpha, Trial& out) {
        Trial prev{0.0, f0_, d0_, x_, {}};
        for (std::size_t i = 0; used_ < opt_.max_line_evals; ++i) {
            Trial cur = eval(alpha);
            if (!decrease(cur) || (i > 0 && higher(cur, prev))) return zoom(prev, cur, out);
            if (std::abs(cur.d) <= -opt_.c2 * d0_) {
                out = std::move(cur);
                return true;
            }
            if (cur.d >= 0.0) return zoom(cur, prev, out);
            prev = std::move(cur);
            alpha *= 2.0;
        }
        return fallback(out);
    }

private:
    Trial eval(double alpha) {
        ++evals_;
        ++used_;
        Trial t;
        t.alpha = alpha;
        t.x = x_ + alpha * p_;
        t.g.resize(x_.size());
        t.f = f_(t.x, t.g);
        t.d = std::isfinite(t.f) ? t.g.dot(p_) : std::numeric_limits<double>::quiet_NaN();
        if (decrease(t) && (!best_ || t.f < best_->f)) best_ = t;
        return t;
    }

    // Armijo, or the approximate Wolfe test once f is flat to rounding.
    bool decrease(const Trial& t) const {
        if (!std::isfinite(t.f)) return false;
        if (t.f <= f0_ + opt_.c1 * t.alpha * d0_) return true;
        return t.f <= f0_ + eps_ && t.d <= (2.0 * opt_.c1 - 1.0) * d0_;
    }

    // Values closer than rounding are compared through derivatives instead.
    bool higher(const Trial& a, const Trial& b) const { return a.f >= b.f && a.f - b.f > eps_; }

    bool zoom(Trial lo, Trial hi, Trial& out) {
        while (used_ < opt_.max_line_evals) {
            const double span = hi.alpha - lo.alpha;
            double a = std::isfinite(hi.f) ? cubic_min(lo.alpha, lo.f, lo.d, hi.alpha, hi.f, hi.d)
                                           : std::numeric_limits<double>::quiet_NaN();
            const double a_min = std::min(lo.alpha, hi.alpha) + 0.1 * std::abs(span);
            const double a_max = std::max(lo.alpha, hi.alpha) - 0.1 * std::abs(span);
            if (!std::isfinite(a) || a < a_min || a > a_max) a = lo.alpha + 0.5 * span;
            if (std::abs(span) < 1e-14 * std::max(1.0, std::abs(lo.alpha))) break;
            Trial cur = eval(a);
            if (!decrease(cur) || higher(cur, lo)) {
                hi = std::move(cur);
                continue;
            }
            if (std::abs(cur.d) <= -opt_.c2 * d0_) {
                out = std::move(cur);
                return true;
            }
            if (cur.d * span >= 0.0) hi = lo;
            lo = std::move(cur);
        }
        return fallback(out);
    }

    // Accept the best sufficient-decrease point even if curvature failed.
    bool fallback(Trial& out) {
        if (!best_) return false;
        out = *best_;
        return true;
    }

    const ObjectiveFn& f_;
    const BfgsOptions& opt_;
    const Eigen::VectorXd& x_;
    const Eigen::VectorXd& p_;
    double f0_;
    double d0_;
    double eps_;
    std::size_t& evals_;
    std::size_t used_ = 0;
    std::optional<Trial> best_;
};

}  // namespace

BfgsResult bfgs_minimize(const ObjectiveFn& f, Eigen::VectorXd x0, const BfgsOptions& options) {
    const Eigen::Index n = x0.size();
    BfgsResult res;
    res.x = std::move(x0);
    res.grad.resize(n);
    res.f = f(res.x, res.grad);
    res.evaluations = 1;
    if (!std::isfinite(res.f) || !res.grad.allFinite()) {
        res.status = BfgsStatus::NonFiniteStart;
        return res;
    }
    if (n == 0 || res.grad.lpNorm<Eigen::Infinity>() < options.grad_tol) {
        res.status = BfgsStatus::Converged;
        return res;
    }

    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool scaled = false;
    for (res.iterations = 0; res.iterations < options.max_iter;) {
        Eigen::VectorXd p = -h * res.grad;
        double d0 = res.grad.dot(p);
        if (!(d0 < 0.0)) {
            h.setIdentity();
            scaled = false;
            p = -res.grad;
            d0 = res.grad.dot(p);
        }
        const double alpha0 = scaled ? 1.0 : std::min(1.0, 1.0 / res.grad.lpNorm<Eigen::Infinity>());
        Trial step;
        LineSearch ls(f, options, res.x, p, res.f, d0, res.evaluations);
        if (!ls.run(alpha0, step)) {
            res.status = BfgsStatus::LineSearchFailed;
            return res;
        }
        ++res.iterations;
        const Eigen::VectorXd s = step.x - res.x;
        const Eigen::VectorXd y = step.g - res.grad;
        res.x = std::move(step.x);
        res.grad = std::move(step.g);
        res.f = step.f;
        if (res.grad.lpNorm<Eigen::Infinity>() < options.grad_tol) {
            res.status = BfgsStatus::Converged;
            return res;
        }
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled) {
                h *= sy / y.squaredNorm();
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd hy = h * y;
            const double yhy = y.dot(hy);
            h += (rho * rho * yhy + rho) * s * s.transpose() - rho * (hy * s.transpose() + s * hy.transpose());
        }
    }
    res.status = BfgsStatus::MaxIterations;
    return res;
}

}  // namespace odereg
