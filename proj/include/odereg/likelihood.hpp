#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "odereg/data.hpp"
#include "odereg/dopri5.hpp"
#include "odereg/mean_ode.hpp"
#include "odereg/model.hpp"

namespace odereg {

/// Per-subject loop: OpenMP-parallel, or the plain serial loop kept as a reference.
/// Both reduce in subject order, so they return bitwise identical results.
enum class Execution { Parallel, Serial };

struct EvalRequest {
    bool gradient = false;
    bool subject_scores = false;
    Execution execution = Execution::Parallel;
    Dopri5Options ode;
};

/// Sieve log pseudo-likelihood
///   l(theta) = (1/n) sum_i [ sum_j { x_i'beta + gamma(t_ij) + g(mu_i(t_ij)) } - mu_i(c_i) ]
/// and its gradient in full coordinates.
struct Evaluation {
    double loglik = 0.0;
    Eigen::VectorXd gradient;              ///< full coordinates, averaged over subjects
    std::vector<double> contributions;     ///< per-subject terms (not averaged)
    Eigen::MatrixXd subject_scores;        ///< n x full_dim, not averaged; empty unless requested
};

/// `shared`, when given, must have been built from model.g and theta.b; it is
/// extended as needed and can be reused across calls that share b.
Evaluation evaluate(const Dataset& data, const Model& model, const ParamVector& theta,
                    const EvalRequest& request = {}, SharedMeanSolution* shared = nullptr);

double loglik(const Dataset& data, const Model& model, const ParamVector& theta,
              Execution execution = Execution::Parallel);

/// Gradient of loglik with respect to the free parameters.
Eigen::VectorXd score(const Dataset& data, const Model& model, const ParamVector& theta,
                      Execution execution = Execution::Parallel);

/// Row i is subject i's un-averaged score in free coordinates; the row mean equals score().
Eigen::MatrixXd per_subject_scores(const Dataset& data, const Model& model, const ParamVector& theta,
                                   Execution execution = Execution::Parallel);

/// Negative average log pseudo-likelihood in free coordinates, for minimization.
///
/// Caches the shared mean solution and reuses it while b is unchanged, so
/// updates of beta and a only re-evaluate transformed times.
class Objective {
public:
    Objective(const Dataset& data, const Model& model, Execution execution = Execution::Parallel,
              Dopri5Options ode = {});
    Objective(const Objective&) = delete;
    Objective& operator=(const Objective&) = delete;

    const Parameterization& parameterization() const noexcept { return param_; }
    const Model& model() const noexcept { return model_; }

    double value(const Eigen::VectorXd& free);
    double value(const Eigen::VectorXd& free, Eigen::VectorXd& gradient);

    std::size_t evaluations() const noexcept { return evaluations_; }
    std::size_t shared_solves() const noexcept { return shared_solves_; }

private:
    SharedMeanSolution& shared_for(const Eigen::VectorXd& b);

    const Dataset& data_;
    const Model& model_;
    Parameterization param_;
    EvalRequest request_;
    std::unique_ptr<SharedMeanSolution> shared_;
    std::size_t evaluations_ = 0;
    std::size_t shared_solves_ = 0;
};

}  // namespace odereg
