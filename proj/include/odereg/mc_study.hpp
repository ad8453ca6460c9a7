#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "odereg/estimator.hpp"
#include "odereg/inference.hpp"
#include "odereg/simulate.hpp"

namespace odereg {

struct McOptions {
    int setting = 1;
    std::size_t n = 1000;
    std::size_t reps = 200;
    ModelSpec spec;             ///< estimator; usually setting_catalog(setting).fit_spec
    FitOptions fit;
    CovMethod cov = CovMethod::Information;
    std::size_t resamples = 0;  ///< 0 selects default_resamples(spec.variant)
    std::uint64_t seed = 1;
    double ci_level = 0.95;
    std::size_t curve_points = 0;  ///< > 0 also summarizes the fitted alpha and q curves
};

/// Outcome of one simulate -> fit -> infer pipeline.
struct McReplicate {
    std::size_t index = 0;
    bool ok = false;
    bool converged = false;
    std::string error;
    Eigen::VectorXd beta;  ///< full beta estimate
    Eigen::VectorXd se;    ///< standard errors (0 for fixed coordinates)
    double seconds = 0.0;
    std::vector<CurveBand> curves;  ///< alpha then q, on the study grids
};

struct McRow {
    std::string name;
    double truth = 0.0;
    double bias = 0.0;  ///< mean estimate minus truth
    double se = 0.0;    ///< standard deviation of the estimates
    double ese = 0.0;   ///< mean estimated standard error
    double cp = 0.0;    ///< coverage of the Wald intervals
    std::size_t used = 0;
};

/// Pointwise average of fitted curves against the truth.
struct McCurve {
    std::string kind;  ///< "alpha" or "q"
    std::vector<double> x, truth, mean, lower, upper, coverage;
};

struct McSummary {
    std::vector<McRow> rows;
    std::vector<McCurve> curves;
    std::size_t reps = 0;
    std::size_t failed = 0;       ///< fit or inference raised an error
    std::size_t unconverged = 0;  ///< finished without meeting the gradient tolerance
    double mean_seconds = 0.0;
    std::vector<McReplicate> replicates;
};

/// Bias / SE / ESE / CP for each free beta over the usable replicates.
std::vector<McRow> summarize(const std::vector<McReplicate>& reps, const Eigen::VectorXd& truth,
                             const std::vector<std::size_t>& coefficients, double ci_level = 0.95);

/// Replicate r simulates from stream (seed, r); replicates run in parallel.
McSummary mc_study(const McOptions& options);

/// Run a single replicate (exposed for tests and the CLI).
McReplicate run_replicate(const TrueModel& truth, const McOptions& options, std::size_t index);

}  // namespace odereg
