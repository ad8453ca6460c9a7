#include "odereg/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "odereg/errors.hpp"

namespace odereg {

namespace {

// Adds w times the nonzero basis values at x into dst.
void add_local(const Component& comp, double x, double w, double* dst) {
    const SplineBasis::Local loc = comp.basis().local(x);
    for (std::size_t k = 0; k < loc.count; ++k) dst[loc.first + k] += w * loc.value[k];
}

struct Workspace {
    std::vector<double> j;
    std::vector<double> gs;
    std::vector<double> dmu;
    Eigen::VectorXd ode;
};

// Subject i's log pseudo-likelihood term; its full-coordinate score goes to `row` when non-null.
double subject_term(const Subject& s, const Model& model, const ParamVector& theta,
                    const BaselineIntegral& baseline, const SharedMeanSolution& shared,
                    double* row, Workspace& ws) {
    const std::size_t nb = model.dim_beta();
    const std::size_t na = model.dim_a();
    const std::size_t ng = model.dim_b();
    const std::size_t full = nb + na + ng;
    const double eta = s.x.dot(theta.beta);
    const double scale = std::exp(eta);
    const bool grad = row != nullptr;
    if (grad) {
        std::fill(row, row + full, 0.0);
        ws.j.resize(na);
        ws.gs.resize(ng);
        ws.dmu.resize(full);
    }

    // mu at t and, when requested, d mu / d theta into ws.dmu.
    auto mean_at_time = [&](double t) {
        const double r = grad ? baseline.cumulative(t, ws.j) : baseline.cumulative(t);
        const double tt = scale * r;
        if (!grad) return shared.mean(tt);
        const double mu = shared.mean(tt, ws.ode, ws.gs);
        const double h = shared.rate(mu);
        for (std::size_t p = 0; p < nb; ++p) ws.dmu[p] = h * tt * s.x[static_cast<Eigen::Index>(p)];
        for (std::size_t m = 0; m < na; ++m) ws.dmu[nb + m] = h * scale * ws.j[m];
        for (std::size_t m = 0; m < ng; ++m) ws.dmu[nb + na + m] = ws.gs[m];
        return mu;
    };

    double value = 0.0;
    for (double t : s.events) {
        const double mu = mean_at_time(t);
        value += eta + model.gamma.value(theta.a, t) + model.g.value(theta.b, mu);
        if (!grad) continue;
        for (std::size_t p = 0; p < nb; ++p) row[p] += s.x[static_cast<Eigen::Index>(p)];
        if (model.gamma.is_spline()) add_local(model.gamma, t, 1.0, row + nb);
        if (model.g.is_spline()) add_local(model.g, mu, 1.0, row + nb + na);
        const double gder = model.g.derivative(theta.b, mu);
        if (gder != 0.0)
            for (std::size_t k = 0; k < full; ++k) row[k] += gder * ws.dmu[k];
    }
    value -= mean_at_time(s.censor);
    if (grad)
        for (std::size_t k = 0; k < full; ++k) row[k] -= ws.dmu[k];
    return value;
}

}  // namespace

Evaluation evaluate(const Dataset& data, const Model& model, const ParamVector& theta,
                    const EvalRequest& request, SharedMeanSolution* shared) {
    if (data.empty()) throw DomainError("loglik: empty dataset");
    const BaselineIntegral baseline(model.gamma, theta.a);

    double horizon = 0.0;
    for (const auto& s : data.subjects)
        horizon = std::max(horizon, std::exp(s.x.dot(theta.beta)) * baseline.cumulative(s.censor));
    std::unique_ptr<SharedMeanSolution> local;
    if (!shared) {
        local = std::make_unique<SharedMeanSolution>(model.g, theta.b, request.ode);
        shared = local.get();
    }
    try {
        shared->ensure(horizon);
    } catch (const SolverError& e) {
        for (const auto& s : data.subjects)
            if (std::exp(s.x.dot(theta.beta)) * baseline.cumulative(s.censor) > e.last_time())
                throw SolverError("subject " + s.id + ": " + e.what(), e.last_time());
        throw;
    }

    const std::size_t n = data.size();
    const std::size_t full = model.full_dim();
    const bool grad = request.gradient || request.subject_scores;
    Evaluation out;
    out.contributions.assign(n, 0.0);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows;
    if (grad) rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(full));

    std::exception_ptr failure;
    const bool parallel = request.execution == Execution::Parallel;
    const auto count = static_cast<std::ptrdiff_t>(n);
    const SharedMeanSolution& sol = *shared;
#pragma omp parallel if (parallel)
    {
        Workspace ws;
#pragma omp for schedule(dynamic, 16)
        for (std::ptrdiff_t i = 0; i < count; ++i) {
            const auto& s = data.subjects[static_cast<std::size_t>(i)];
            try {
                double* row = grad ? rows.row(i).data() : nullptr;
                out.contributions[static_cast<std::size_t>(i)] = subject_term(s, model, theta, baseline, sol, row, ws);
            } catch (const SolverError& e) {
#pragma omp critical(odereg_loglik_failure)
                if (!failure)
                    failure = std::make_exception_ptr(
                        SolverError("subject " + s.id + ": " + e.what(), e.last_time()));
            } catch (...) {
#pragma omp critical(odereg_loglik_failure)
                if (!failure) failure = std::current_exception();
            }
        }
    }
    if (failure) std::rethrow_exception(failure);

    double total = 0.0;
    for (double c : out.contributions) total += c;
    const double inv_n = 1.0 / static_cast<double>(n);
    out.loglik = total * inv_n;
    if (request.gradient) {
        out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(full));
        for (std::size_t i = 0; i < n; ++i) out.gradient += rows.row(static_cast<Eigen::Index>(i)).transpose();
        out.gradient *= inv_n;
    }
    if (request.subject_scores) out.subject_scores = rows;
    return out;
}

double loglik(const Dataset& data, const Model& model, const ParamVector& theta, Execution execution) {
    EvalRequest req;
    req.execution = execution;
    return evaluate(data, model, theta, req).loglik;
}

Eigen::VectorXd score(const Dataset& data, const Model& model, const ParamVector& theta, Execution execution) {
    EvalRequest req;
    req.gradient = true;
    req.execution = execution;
    return Parameterization(model).pull_back(evaluate(data, model, theta, req).gradient);
}

Eigen::MatrixXd per_subject_scores(const Dataset& data, const Model& model, const ParamVector& theta,
                                   Execution execution) {
    EvalRequest req;
    req.subject_scores = true;
    req.execution = execution;
    const Parameterization param(model);
    return evaluate(data, model, theta, req).subject_scores * param.jacobian();
}

// ---- Objective -------------------------------------------------------------

Objective::Objective(const Dataset& data, const Model& model, Execution execution, Dopri5Options ode)
    : data_(data), model_(model), param_(model) {
    request_.execution = execution;
    request_.ode = ode;
}

SharedMeanSolution& Objective::shared_for(const Eigen::VectorXd& b) {
    if (!shared_ || shared_->coefficients() != b) {
        shared_ = std::make_unique<SharedMeanSolution>(model_.g, b, request_.ode);
        ++shared_solves_;
    }
    return *shared_;
}

double Objective::value(const Eigen::VectorXd& free) {
    ++evaluations_;
    const ParamVector theta = param_.to_params(free);
    try {
        const Evaluation ev = evaluate(data_, model_, theta, request_, &shared_for(theta.b));
        return std::isfinite(ev.loglik) ? -ev.loglik : std::numeric_limits<double>::infinity();
    } catch (const SolverError&) {
        shared_.reset();
        return std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
        return std::numeric_limits<double>::infinity();
    }
}

double Objective::value(const Eigen::VectorXd& free, Eigen::VectorXd& gradient) {
    EvalRequest req = request_;
    req.gradient = true;
    ++evaluations_;
    const ParamVector theta = param_.to_params(free);
    try {
        const Evaluation ev = evaluate(data_, model_, theta, req, &shared_for(theta.b));
        gradient = -param_.pull_back(ev.gradient);
        if (!std::isfinite(ev.loglik) || !gradient.allFinite()) return std::numeric_limits<double>::infinity();
        return -ev.loglik;
    } catch (const SolverError&) {
        shared_.reset();
    } catch (const DomainError&) {
    }
    gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(param_.free_dim()));
    return std::numeric_limits<double>::infinity();
}

}  // namespace odereg
