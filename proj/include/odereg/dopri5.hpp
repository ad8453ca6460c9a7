#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace odereg {

struct Dopri5Options {
    double rtol = 1e-8;
    double atol = 1e-10;
    double initial_step = 0.0;  // 0 selects a starting step automatically
    double max_step = 0.0;      // 0 means unbounded
    std::size_t max_steps = 200000;
};

/// Adaptive Dormand-Prince 5(4) integrator with continuous (4th order) dense output.
///
/// The integration is open-ended: extend_to() keeps stepping until the
/// trajectory covers the requested time, and the final step is never clipped
/// to the target. The accepted step sequence therefore depends only on the
/// initial condition and the right-hand side, so values read from the dense
/// output do not change when the horizon is later extended.
///
/// Once no further extension is needed the object can be shared read-only.
class Dopri5 {
public:
    using Rhs = std::function<void(double t, const Eigen::VectorXd& y, Eigen::VectorXd& dydt)>;

    Dopri5(Rhs rhs, double t0, Eigen::VectorXd y0, Dopri5Options options = {});

    /// Step until t_end() >= t. Throws SolverError on step-size underflow or a
    /// non-finite state.
    void extend_to(double t);

    /// Take exactly one accepted step.
    void step();

    double t_start() const noexcept { return t_start_; }
    double t_end() const noexcept { return t_; }
    const Eigen::VectorXd& y_end() const noexcept { return y_; }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(y_.size()); }
    std::size_t steps() const noexcept { return segments_.size(); }

    /// Dense solution at t in [t_start(), t_end()].
    void eval(double t, Eigen::VectorXd& out) const;
    double eval_component(double t, Eigen::Index component) const;

private:
    struct Segment {
        double t0;
        double h;
        Eigen::Matrix<double, Eigen::Dynamic, 5> coef;
    };

    double initial_step();
    const Segment& find(double t) const;

    Rhs rhs_;
    Dopri5Options opt_;
    double t_start_;
    double t_;
    double h_;
    Eigen::VectorXd y_;
    Eigen::VectorXd f_;  // rhs at (t_, y_), first-same-as-last
    std::vector<Segment> segments_;
    Eigen::VectorXd k2_, k3_, k4_, k5_, k6_, k7_, ytmp_, ynew_, err_;
};

}  // namespace odereg
