#include "odereg/dopri5.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "odereg/errors.hpp"

namespace odereg {

namespace {

// Dormand & Prince (1980) tableau.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                 a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// Dense output weights (Hairer, Norsett & Wanner, contd5).
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;

}  // namespace

Dopri5::Dopri5(Rhs rhs, double t0, Eigen::VectorXd y0, Dopri5Options options)
    : rhs_(std::move(rhs)), opt_(options), t_start_(t0), t_(t0), h_(0.0), y_(std::move(y0)) {
    const auto n = y_.size();
    f_.resize(n);
    for (auto* v : {&k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &ytmp_, &ynew_, &err_}) v->resize(n);
    rhs_(t_, y_, f_);
    if (!f_.allFinite()) throw SolverError("dopri5: non-finite derivative at the initial point", t_);
    h_ = opt_.initial_step > 0.0 ? opt_.initial_step : initial_step();
}

double Dopri5::initial_step() {
    // Hairer's starting-step heuristic.
    const Eigen::ArrayXd scale = opt_.atol + opt_.rtol * y_.array().abs();
    const double d0 = std::sqrt((y_.array() / scale).square().mean());
    const double d1n = std::sqrt((f_.array() / scale).square().mean());
    double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
    ytmp_ = y_ + h0 * f_;
    rhs_(t_ + h0, ytmp_, k2_);
    const double d2 = std::sqrt(((k2_ - f_).array() / scale).square().mean()) / h0;
    const double dmax = std::max(d1n, d2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 1.0 / 5.0);
    double h = std::min(100.0 * h0, h1);
    if (opt_.max_step > 0.0) h = std::min(h, opt_.max_step);
    return h;
}

void Dopri5::step() {
    const auto n = y_.size();
    for (;;) {
        if (segments_.size() >= opt_.max_steps) throw SolverError("dopri5: step budget exhausted", t_);
        double h = h_;
        if (opt_.max_step > 0.0) h = std::min(h, opt_.max_step);
        if (h <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t_)))
            throw SolverError("dopri5: step size underflow", t_);

        ytmp_ = y_ + h * a21 * f_;
        rhs_(t_ + c2 * h, ytmp_, k2_);
        ytmp_ = y_ + h * (a31 * f_ + a32 * k2_);
        rhs_(t_ + c3 * h, ytmp_, k3_);
        ytmp_ = y_ + h * (a41 * f_ + a42 * k2_ + a43 * k3_);
        rhs_(t_ + c4 * h, ytmp_, k4_);
        ytmp_ = y_ + h * (a51 * f_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
        rhs_(t_ + c5 * h, ytmp_, k5_);
        ytmp_ = y_ + h * (a61 * f_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
        rhs_(t_ + h, ytmp_, k6_);
        ynew_ = y_ + h * (a71 * f_ + a73 * k3_ + a74 * k4_ + a75 * k5_ + a76 * k6_);
        rhs_(t_ + h, ynew_, k7_);

        err_ = h * (e1 * f_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
        double err = 0.0;
        bool finite = ynew_.allFinite() && k7_.allFinite();
        if (finite) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const double sc = opt_.atol + opt_.rtol * std::max(std::abs(y_[i]), std::abs(ynew_[i]));
                const double r = err_[i] / sc;
                err += r * r;
            }
            err = std::sqrt(err / static_cast<double>(n));
            finite = std::isfinite(err);
        }
        if (!finite) {
            h_ = h * kMinFactor;
            continue;
        }

        double factor = err == 0.0 ? kMaxFactor : kSafety * std::pow(err, -0.2);
        factor = std::clamp(factor, kMinFactor, kMaxFactor);
        if (err > 1.0) {
            h_ = h * std::max(kMinFactor, factor);
            continue;
        }

        Segment seg{t_, h, Eigen::Matrix<double, Eigen::Dynamic, 5>(n, 5)};
        const Eigen::VectorXd ydiff = ynew_ - y_;
        const Eigen::VectorXd bspl = h * f_ - ydiff;
        seg.coef.col(0) = y_;
        seg.coef.col(1) = ydiff;
        seg.coef.col(2) = bspl;
        seg.coef.col(3) = ydiff - h * k7_ - bspl;
        seg.coef.col(4) = h * (d1 * f_ + d3 * k3_ + d4 * k4_ + d5 * k5_ + d6 * k6_ + d7 * k7_);
        segments_.push_back(std::move(seg));

        t_ += h;
        y_ = ynew_;
        f_ = k7_;
        h_ = h * factor;
        return;
    }
}

void Dopri5::extend_to(double t) {
    if (!std::isfinite(t)) throw SolverError("dopri5: non-finite target time", t_);
    while (t_ < t) step();
}

const Dopri5::Segment& Dopri5::find(double t) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](double v, const Segment& s) { return v < s.t0; });
    if (it != segments_.begin()) --it;
    return *it;
}

void Dopri5::eval(double t, Eigen::VectorXd& out) const {
    if (segments_.empty() || t <= t_start_) {
        out = segments_.empty() ? y_ : segments_.front().coef.col(0);
        if (t < t_start_ || (segments_.empty() && t != t_start_))
            throw SolverError("dopri5: evaluation outside the integrated range", t_);
        return;
    }
    if (t > t_) throw SolverError("dopri5: evaluation beyond the integrated range", t_);
    const Segment& s = find(t);
    const double th = (t - s.t0) / s.h;
    const double th1 = 1.0 - th;
    out = s.coef.col(0) + th * (s.coef.col(1) + th1 * (s.coef.col(2) + th * (s.coef.col(3) + th1 * s.coef.col(4))));
}

double Dopri5::eval_component(double t, Eigen::Index i) const {
    if (segments_.empty() || t <= t_start_) {
        if (t < t_start_ || (segments_.empty() && t != t_start_))
            throw SolverError("dopri5: evaluation outside the integrated range", t_);
        return segments_.empty() ? y_[i] : segments_.front().coef(i, 0);
    }
    if (t > t_) throw SolverError("dopri5: evaluation beyond the integrated range", t_);
    const Segment& s = find(t);
    const double th = (t - s.t0) / s.h;
    const double th1 = 1.0 - th;
    const auto& c = s.coef;
    return c(i, 0) + th * (c(i, 1) + th1 * (c(i, 2) + th * (c(i, 3) + th1 * c(i, 4))));
}

}  // namespace odereg
