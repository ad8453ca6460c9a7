#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "odereg/data.hpp"
#include "odereg/model.hpp"

namespace odereg {

using Rng = std::mt19937_64;

/// Data-generating truth: mu_x'(t) = alpha(t) exp(x'beta) q(mu_x(t)), events from
/// the NHPP with cumulative intensity xi * mu_x(t), xi a mean-one Gamma frailty.
struct TrueModel {
    int setting = 0;  ///< catalog id, 0 for user-defined truths
    std::function<double(double)> alpha;
    std::function<double(double)> q;
    Eigen::VectorXd beta;
    std::function<Eigen::VectorXd(Rng&)> covariates;
    std::function<double(Rng&)> censor;
    bool frailty = false;
    double frailty_shape = 2.0;  ///< Gamma(shape, rate = shape): mean 1, variance 1/shape
    double max_censor = 0.0;     ///< upper end of the censoring law

    /// Optional closed forms int_0^t alpha and int_0^u 1/q; quadrature otherwise.
    std::function<double(double)> alpha_integral;
    std::function<double(double)> inv_q_integral;

    /// Reporting metadata: recommended estimator and anchor.
    ModelSpec fit_spec;
    std::optional<double> t0;
    std::string description;
};

/// Settings 1-6. Throws DomainError for other ids.
TrueModel setting_catalog(int id);

/// int_0^t alpha(s) ds.
double alpha_integral(const TrueModel& truth, double t);
/// int_0^u 1/q(v) dv.
double inv_q_integral(const TrueModel& truth, double u);

/// mu_x(t) for linear predictor eta = x'beta, by solving int_0^mu 1/q = exp(eta) int_0^t alpha.
double true_mean(const TrueModel& truth, double eta, double t);

/// Event times in (0, censor] of one process with linear predictor eta and frailty xi.
/// t_k solves xi * mu_x(t_k) = s_k, s_k the partial sums of unit exponentials; the
/// reciprocal equation dt/du = 1 / (alpha(t) e^eta q(u)) is integrated in u and
/// each time is refined by one Newton step.
std::vector<double> event_times(const TrueModel& truth, double eta, double censor, double xi, Rng& rng,
                                std::vector<double>* partial_sums = nullptr);

struct SubjectDraw {
    Subject subject;
    double xi = 1.0;
    std::vector<double> partial_sums;  ///< s_1 .. s_k of the accepted events
};

/// Covariates, censoring time, frailty and events of one subject.
SubjectDraw simulate_subject_traced(const TrueModel& truth, Rng& rng);
Subject simulate_subject(const TrueModel& truth, Rng& rng);

/// n subjects; subject i uses its own stream derived from (seed, i), so datasets
/// are reproducible and independent of the thread count.
Dataset simulate_dataset(const TrueModel& truth, std::size_t n, std::uint64_t seed);

/// Draw from N(mean, sd) truncated to [lo, hi] by rejection.
double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi);

}  // namespace odereg
