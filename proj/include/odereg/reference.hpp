#pragma once

#include <vector>

#include <Eigen/Core>

#include "odereg/data.hpp"
#include "odereg/dopri5.hpp"
#include "odereg/model.hpp"

/// Plain serial implementations kept as a check on the parallel kernels.
namespace odereg::reference {

struct Evaluation {
    double loglik = 0.0;
    Eigen::VectorXd gradient;  ///< full coordinates, averaged over subjects
    std::vector<double> contributions;
};

/// Subject by subject, each with its own mean solve and dense basis evaluations.
Evaluation evaluate(const Dataset& data, const Model& model, const ParamVector& theta, Dopri5Options ode = {});

}  // namespace odereg::reference
