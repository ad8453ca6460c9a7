#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "odereg/data.hpp"
#include "odereg/likelihood.hpp"
#include "odereg/model.hpp"
#include "odereg/quasi_newton.hpp"

namespace odereg {

struct FitOptions {
    double outer_tol = 1e-8;       ///< stop when one outer sweep gains less than this
    double grad_tol = 1e-5;        ///< converged requires ||score||_inf below this
    std::size_t max_outer = 200;
    std::uint64_t seed = 0;        ///< random start of the Cox variant
    BfgsOptions inner;             ///< per-block solver (grad_tol 1e-6, 100 iterations)
    bool polish = true;            ///< joint quasi-Newton pass over all free coordinates at the end
    Execution execution = Execution::Parallel;
    Dopri5Options ode{1e-10, 1e-12};  ///< tighter than the solver default
};

struct FitResult {
    ModelSpec spec;
    Model model;
    ParamVector theta_hat;
    ParamVector theta_init;
    double loglik = 0.0;
    std::size_t outer_iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;     ///< ||score||_inf over free parameters
    std::vector<double> trace;      ///< loglik after initialization and after every block update
    std::string message;
};

/// Lower median of the pooled event times. Throws DomainError without events.
double choose_t0(const Dataset& data);

/// Fix the bases of `spec` on `data`.
///
/// gamma lives on [0, max observed time]; g on [0, g_upper]. Quantile knots for
/// g are placed at `g_values` (means at the event times), which must then be
/// given. Both knot counts use N = total number of events.
Model realize_model(const Dataset& data, const ModelSpec& spec, double g_upper = 0.0,
                    const std::vector<double>& g_values = {});

struct StartingPoint {
    Model model;
    ParamVector theta;
};

/// Cox variant: beta and a drawn from U(-0.1, 0.1) with `seed`. Other variants:
/// a Cox-variant fit supplies beta (rescaled so beta_1 = 1 under that
/// constraint) and a = b = 0. Its fitted means at the event times place the g
/// knots, and their 0.95 quantile is the upper end of the g basis.
StartingPoint init_theta(const Dataset& data, const ModelSpec& spec, const FitOptions& options = {});

/// Block coordinate ascent from a given start.
FitResult fit_from(const Dataset& data, const Model& model, const ParamVector& start, const FitOptions& options = {},
                   const ModelSpec& spec = {});

/// init_theta followed by fit_from. Throws InitializationError when the
/// objective is not finite at the start.
FitResult fit(const Dataset& data, const ModelSpec& spec, const FitOptions& options = {});

}  // namespace odereg
