#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "odereg/data.hpp"
#include "odereg/dopri5.hpp"
#include "odereg/model.hpp"

namespace odereg {

/// Gauss-Legendre order used on every knot piece of the baseline integral.
inline constexpr std::size_t kBaselineQuadratureOrder = 10;

/// R(t) = int_0^t exp(gamma(s)) ds and J_m(t) = int_0^t A_m(s) exp(gamma(s)) ds.
///
/// Shared by all subjects: the transformed time of subject i is
/// exp(x_i'beta) * R(t). For a spline gamma the cumulative values at the
/// breakpoints are precomputed, so each query integrates a single partial
/// piece. A fixed gamma is integrated on 16 equal pieces of [0, t]; an absent
/// gamma gives R(t) = t.
class BaselineIntegral {
public:
    BaselineIntegral(const Component& gamma, const Eigen::VectorXd& a);

    double cumulative(double t) const;
    /// R(t), and J(t) written to `grad` (length dim_a) when gamma is a spline.
    double cumulative(double t, std::span<double> grad) const;

private:
    // Adds the Gauss-Legendre integral over [lo, hi] to r (and grad).
    void integrate(double lo, double hi, double& r, double* grad) const;

    const Component& gamma_;
    const Eigen::VectorXd& a_;
    std::vector<double> breaks_;
    std::vector<double> cum_r_;
    std::vector<double> cum_j_;  // breaks_.size() x dim, row-major
    std::size_t dim_ = 0;
};

/// Transformed time exp(x'beta) * int_0^t exp(gamma(s)) ds. Throws DomainError for t < 0.
double transformed_time(const Subject& subject, const Model& model, const ParamVector& theta, double t);

/// Dense solution of the covariate-free equation
///   d mu~/d t~ = exp(g(mu~)),  mu~(0) = 0,
/// jointly with the sensitivities G~_m = d mu~/d b_m, which satisfy
///   G~_m' = f~ B_m(mu~) + f~ g'(mu~) G~_m,  G~_m(0) = 0.
///
/// One solution serves every subject. An absent g gives mu~ = t~ without
/// integration. The horizon can be extended; values already available never
/// change when it is (see Dopri5).
class SharedMeanSolution {
public:
    SharedMeanSolution(const Component& g, Eigen::VectorXd b, Dopri5Options options = {});

    /// Integrate far enough to evaluate at t~ = horizon.
    void ensure(double horizon);
    double horizon() const noexcept;

    bool has_sensitivities() const noexcept { return g_.is_spline(); }
    std::size_t dim_b() const noexcept { return static_cast<std::size_t>(b_.size()); }
    const Eigen::VectorXd& coefficients() const noexcept { return b_; }

    double mean(double t_tilde) const;
    /// mu~ at t_tilde; sensitivities written to `sens` (length dim_b()).
    double mean(double t_tilde, Eigen::VectorXd& work, std::span<double> sens) const;

    /// exp(g(mu)), the rate of the shared equation at state mu.
    double rate(double mu) const;

private:
    const Component& g_;
    Eigen::VectorXd b_;
    std::unique_ptr<Dopri5> solver_;
};

/// Solve the shared equation on [0, horizon]. Throws SolverError on failure.
SharedMeanSolution solve_shared(const Component& g, const Eigen::VectorXd& b, double horizon,
                                Dopri5Options options = {});

/// Conditional means (and optionally their parameter sensitivities) along a time grid.
struct MeanPath {
    std::vector<double> times;
    std::vector<double> mu;
    Eigen::MatrixXd sens;  ///< times x full_dim; empty when not requested
};

/// mu_i(t) = mu~(t~_i(t)) at each of `times` (a subset of [0, censor]).
MeanPath mean_at(const Subject& subject, const Model& model, const ParamVector& theta,
                 std::span<const double> times, Dopri5Options options = {});

/// As mean_at, plus G(t) = d mu_i(t) / d theta in full coordinates:
///   d mu / d beta_k = mu~'(t~) t~ x_k
///   d mu / d a_m    = mu~'(t~) exp(x'beta) J_m(t)
///   d mu / d b_m    = G~_m(t~)
MeanPath sensitivities_at(const Subject& subject, const Model& model, const ParamVector& theta,
                          std::span<const double> times, Dopri5Options options = {});

/// Batched version: one shared solve for the whole dataset; each subject's
/// path is evaluated at its event times followed by its censoring time.
std::vector<MeanPath> mean_paths(const Dataset& data, const Model& model, const ParamVector& theta,
                                 bool with_sensitivities, Dopri5Options options = {});

}  // namespace odereg
