#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include <Eigen/Core>

namespace odereg {

struct BfgsOptions {
    double grad_tol = 1e-6;      ///< stop when ||grad||_inf < grad_tol
    std::size_t max_iter = 100;
    double c1 = 1e-4;            ///< sufficient decrease
    double c2 = 0.9;             ///< curvature (strong Wolfe)
    std::size_t max_line_evals = 40;
};

enum class BfgsStatus { Converged, MaxIterations, LineSearchFailed, NonFiniteStart };

std::string to_string(BfgsStatus s);

struct BfgsResult {
    Eigen::VectorXd x;
    double f = 0.0;
    Eigen::VectorXd grad;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    BfgsStatus status = BfgsStatus::MaxIterations;
};

/// f(x, grad) returns the value and writes the gradient. A non-finite value
/// marks x as infeasible; the line search then backtracks.
using ObjectiveFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// Dense BFGS on the inverse Hessian with a strong-Wolfe line search
/// (bracketing plus safeguarded cubic zoom). Once f is flat to rounding, the
/// line search falls back to the approximate Wolfe conditions, so the
/// gradient can still be driven down.
BfgsResult bfgs_minimize(const ObjectiveFn& f, Eigen::VectorXd x0, const BfgsOptions& options = {});

}  // namespace odereg
