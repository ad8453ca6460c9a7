#include "odereg/reference.hpp"

#include <vector>

#include "odereg/errors.hpp"
#include "odereg/mean_ode.hpp"

namespace odereg::reference {

Evaluation evaluate(const Dataset& data, const Model& model, const ParamVector& theta, Dopri5Options ode) {
    if (data.empty()) throw DomainError("loglik: empty dataset");
    const auto nb = static_cast<Eigen::Index>(model.dim_beta());
    const auto na = static_cast<Eigen::Index>(model.dim_a());
    const auto full = static_cast<Eigen::Index>(model.full_dim());

    Evaluation out;
    out.gradient = Eigen::VectorXd::Zero(full);
    double total = 0.0;
    for (const Subject& s : data.subjects) {
        std::vector<double> times = s.events;
        times.push_back(s.censor);
        const MeanPath path = sensitivities_at(s, model, theta, times, ode);
        const double eta = s.x.dot(theta.beta);

        double value = 0.0;
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(full);
        for (std::size_t j = 0; j < s.events.size(); ++j) {
            const double t = s.events[j];
            const double mu = path.mu[j];
            value += eta + model.gamma.value(theta.a, t) + model.g.value(theta.b, mu);
            grad.head(nb) += s.x;
            if (model.gamma.is_spline()) {
                const std::vector<double> basis = model.gamma.basis().eval(t);
                for (Eigen::Index m = 0; m < na; ++m) grad[nb + m] += basis[static_cast<std::size_t>(m)];
            }
            if (model.g.is_spline()) {
                const std::vector<double> basis = model.g.basis().eval(mu);
                for (std::size_t m = 0; m < basis.size(); ++m) grad[nb + na + static_cast<Eigen::Index>(m)] += basis[m];
            }
            grad += model.g.derivative(theta.b, mu) * path.sens.row(static_cast<Eigen::Index>(j)).transpose();
        }
        value -= path.mu.back();
        grad -= path.sens.row(path.sens.rows() - 1).transpose();

        out.contributions.push_back(value);
        total += value;
        out.gradient += grad;
    }
    const double n = static_cast<double>(data.size());
    out.loglik = total / n;
    out.gradient /= n;
    return out;
}

}  // namespace odereg::reference
