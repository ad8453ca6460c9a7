#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "odereg/data.hpp"
#include "odereg/model.hpp"

namespace odereg {

enum class CovMethod { Information, Resampling };

std::string to_string(CovMethod m);
CovMethod parse_cov_method(std::string_view name);  ///< "info" | "resample"

/// Covariance of the free parameters.
struct CovarianceEstimate {
    CovMethod method = CovMethod::Information;
    Eigen::MatrixXd B_hat;   ///< (1/n) sum_i s_i s_i'
    Eigen::MatrixXd A_hat;   ///< slope matrix; equals B_hat for the information method
    Eigen::MatrixXd sigma;   ///< covariance of theta_hat (already divided by n)
    std::size_t n = 0;
    std::size_t resamples = 0;        ///< replicates used (resampling only)
    std::size_t failed_resamples = 0;

    Eigen::VectorXd se() const;
};

/// B_hat from per-subject scores; sigma = B_hat^{-1} / n.
/// Throws RankDeficiencyError (with the null direction) when B_hat is singular.
CovarianceEstimate empirical_information(const Dataset& data, const Model& model, const ParamVector& theta_hat);

/// Least-squares slope of S on Z without intercept: row r of the result
/// regresses column r of S on the columns of Z. Z and S are replicates x p.
Eigen::MatrixXd regress_slope(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& S);

/// Slope matrix A_hat by resampling: Z_b ~ N(0, I), S_b = sqrt(n) * score(theta_hat + Z_b / sqrt(n)),
/// A_hat = -(slope of S on Z), so that A_hat approximates B_hat under a Poisson working model.
/// Replicate b draws from its own stream derived from (seed, b).
/// Returns the estimate together with the replicate counts.
struct SlopeEstimate {
    Eigen::MatrixXd A_hat;
    std::size_t used = 0;
    std::size_t failed = 0;
};
SlopeEstimate resample_slope(const Dataset& data, const Model& model, const ParamVector& theta_hat,
                             std::size_t resamples, std::uint64_t seed);

/// sigma = A^{-1} B A^{-T} / n. Throws RankDeficiencyError for singular A.
CovarianceEstimate sandwich(const Eigen::MatrixXd& A_hat, const Eigen::MatrixXd& B_hat, std::size_t n);

/// empirical_information, or resample_slope + sandwich.
CovarianceEstimate estimate_covariance(const Dataset& data, const Model& model, const ParamVector& theta_hat,
                                       CovMethod method, std::size_t resamples, std::uint64_t seed);

/// Default number of resamples for a variant.
std::size_t default_resamples(Variant v);

struct CoefficientRow {
    std::string name;
    double estimate = 0.0;
    double se = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double z = 0.0;
    double p_value = 0.0;
};

/// Wald intervals and two-sided normal p-values for every free parameter.
std::vector<CoefficientRow> coefficient_table(const Model& model, const ParamVector& theta_hat,
                                              const CovarianceEstimate& cov, double ci_level = 0.95);

double normal_quantile(double p);

/// Pointwise band for exp(component) on a grid, by the delta method on the log scale.
struct CurveBand {
    std::vector<double> x;
    std::vector<double> value;
    std::vector<double> lower;
    std::vector<double> upper;
};

enum class CurveKind { Alpha, Q };

/// exp(log_shift + gamma(t)) for Alpha or exp(log_shift + g(u)) for Q on
/// `points` evenly spaced values of [from, to]. A fixed component gets a
/// zero-width band; an absent one is identically exp(log_shift).
CurveBand curve_band(const Model& model, const ParamVector& theta_hat, const CovarianceEstimate& cov, CurveKind kind,
                     double from, double to, std::size_t points = 200, double ci_level = 0.95, double log_shift = 0.0);

}  // namespace odereg
