#include "odereg/mean_ode.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <boost/math/quadrature/gauss.hpp>

#include "odereg/errors.hpp"

namespace odereg {

namespace {

struct GaussRule {
    std::array<double, kBaselineQuadratureOrder> node{};
    std::array<double, kBaselineQuadratureOrder> weight{};
};

const GaussRule& gauss_rule() {
    static const GaussRule rule = [] {
        using Gauss = boost::math::quadrature::gauss<double, kBaselineQuadratureOrder>;
        const auto& x = Gauss::abscissa();
        const auto& w = Gauss::weights();
        GaussRule r;
        std::size_t k = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] == 0.0) {
                r.node[k] = 0.0;
                r.weight[k++] = w[i];
                continue;
            }
            r.node[k] = -x[i];
            r.weight[k++] = w[i];
            r.node[k] = x[i];
            r.weight[k++] = w[i];
        }
        return r;
    }();
    return rule;
}

constexpr std::size_t kFixedPieces = 16;

}  // namespace

// ---- BaselineIntegral ------------------------------------------------------

BaselineIntegral::BaselineIntegral(const Component& gamma, const Eigen::VectorXd& a) : gamma_(gamma), a_(a) {
    if (!gamma_.is_spline()) return;
    dim_ = gamma_.dim();
    breaks_ = gamma_.basis().breakpoints();
    if (breaks_.front() > 0.0) breaks_.insert(breaks_.begin(), 0.0);
    cum_r_.assign(breaks_.size(), 0.0);
    cum_j_.assign(breaks_.size() * dim_, 0.0);
    for (std::size_t k = 1; k < breaks_.size(); ++k) {
        double r = cum_r_[k - 1];
        double* j = &cum_j_[k * dim_];
        std::copy_n(&cum_j_[(k - 1) * dim_], dim_, j);
        integrate(breaks_[k - 1], breaks_[k], r, j);
        cum_r_[k] = r;
    }
}

void BaselineIntegral::integrate(double lo, double hi, double& r, double* grad) const {
    if (hi <= lo) return;
    const GaussRule& rule = gauss_rule();
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    if (gamma_.is_spline()) {
        const SplineBasis& basis = gamma_.basis();
        for (std::size_t q = 0; q < kBaselineQuadratureOrder; ++q) {
            const double s = mid + half * rule.node[q];
            const SplineBasis::Local loc = basis.local(s);
            double gam = 0.0;
            for (std::size_t k = 0; k < loc.count; ++k) gam += a_[static_cast<Eigen::Index>(loc.first + k)] * loc.value[k];
            const double w = half * rule.weight[q] * std::exp(gam);
            r += w;
            if (grad)
                for (std::size_t k = 0; k < loc.count; ++k) grad[loc.first + k] += w * loc.value[k];
        }
        return;
    }
    for (std::size_t q = 0; q < kBaselineQuadratureOrder; ++q) {
        const double s = mid + half * rule.node[q];
        r += half * rule.weight[q] * std::exp(gamma_.value(a_, s));
    }
}

double BaselineIntegral::cumulative(double t) const { return cumulative(t, {}); }

double BaselineIntegral::cumulative(double t, std::span<double> grad) const {
    if (!(t >= 0.0)) throw DomainError("baseline integral: time must be nonnegative and finite");
    if (gamma_.is_none()) return t;
    if (gamma_.is_fixed()) {
        double r = 0.0;
        const double width = t / static_cast<double>(kFixedPieces);
        for (std::size_t k = 0; k < kFixedPieces; ++k)
            integrate(width * static_cast<double>(k), width * static_cast<double>(k + 1), r, nullptr);
        return r;
    }
    // Last breakpoint not above t.
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - breaks_.begin()) - 1;
    double r = cum_r_[k];
    double* g = nullptr;
    if (!grad.empty()) {
        std::copy_n(&cum_j_[k * dim_], dim_, grad.data());
        g = grad.data();
    }
    integrate(breaks_[k], t, r, g);
    return r;
}

double transformed_time(const Subject& subject, const Model& model, const ParamVector& theta, double t) {
    if (!(t >= 0.0)) throw DomainError("transformed_time: time must be nonnegative");
    const BaselineIntegral baseline(model.gamma, theta.a);
    return std::exp(subject.x.dot(theta.beta)) * baseline.cumulative(t);
}

// ---- SharedMeanSolution ----------------------------------------------------

SharedMeanSolution::SharedMeanSolution(const Component& g, Eigen::VectorXd b, Dopri5Options options)
    : g_(g), b_(std::move(b)) {
    if (g_.is_none()) return;
    const Component* comp = &g_;
    Eigen::VectorXd coef = b_;
    Eigen::VectorXd y0 = Eigen::VectorXd::Zero(1 + static_cast<Eigen::Index>(g_.dim()));
    Dopri5::Rhs rhs;
    if (g_.is_spline()) {
        rhs = [comp, coef](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
            const SplineBasis::Local loc = comp->basis().local(y[0]);
            double val = 0.0;
            double slope = 0.0;
            for (std::size_t k = 0; k < loc.count; ++k) {
                const double c = coef[static_cast<Eigen::Index>(loc.first + k)];
                val += c * loc.value[k];
                slope += c * loc.slope[k];
            }
            const double f = std::exp(val);
            dy[0] = f;
            const double fs = f * slope;
            for (Eigen::Index m = 1; m < y.size(); ++m) dy[m] = fs * y[m];
            for (std::size_t k = 0; k < loc.count; ++k) dy[static_cast<Eigen::Index>(1 + loc.first + k)] += f * loc.value[k];
        };
    } else {
        rhs = [comp](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
            dy[0] = std::exp(comp->fixed_function().value(y[0]));
        };
    }
    solver_ = std::make_unique<Dopri5>(std::move(rhs), 0.0, std::move(y0), options);
}

void SharedMeanSolution::ensure(double horizon) {
    if (!std::isfinite(horizon) || horizon < 0.0)
        throw SolverError("shared mean: horizon must be finite and nonnegative", 0.0);
    if (solver_) solver_->extend_to(horizon);
}

double SharedMeanSolution::horizon() const noexcept {
    return solver_ ? solver_->t_end() : std::numeric_limits<double>::infinity();
}

double SharedMeanSolution::mean(double t_tilde) const {
    if (!solver_) return t_tilde;
    return solver_->eval_component(t_tilde, 0);
}

double SharedMeanSolution::mean(double t_tilde, Eigen::VectorXd& work, std::span<double> sens) const {
    if (!solver_) return t_tilde;
    if (!has_sensitivities()) return solver_->eval_component(t_tilde, 0);
    solver_->eval(t_tilde, work);
    for (std::size_t m = 0; m < sens.size(); ++m) sens[m] = work[static_cast<Eigen::Index>(m + 1)];
    return work[0];
}

double SharedMeanSolution::rate(double mu) const { return std::exp(g_.value(b_, mu)); }

SharedMeanSolution solve_shared(const Component& g, const Eigen::VectorXd& b, double horizon, Dopri5Options options) {
    SharedMeanSolution sol(g, b, options);
    sol.ensure(horizon);
    return sol;
}

// ---- per-subject paths -----------------------------------------------------

namespace {

MeanPath path_with(const Subject& subject, const Model& model, const ParamVector& theta,
                   std::span<const double> times, const BaselineIntegral& baseline,
                   const SharedMeanSolution& shared, bool with_sens) {
    const std::size_t nb = model.dim_beta();
    const std::size_t na = model.dim_a();
    const std::size_t ng = model.dim_b();
    const double eta = subject.x.dot(theta.beta);
    const double scale = std::exp(eta);

    MeanPath out;
    out.times.assign(times.begin(), times.end());
    out.mu.resize(times.size());
    if (with_sens) out.sens = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(times.size()),
                                                    static_cast<Eigen::Index>(nb + na + ng));
    std::vector<double> j(na);
    std::vector<double> gs(ng);
    Eigen::VectorXd work;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        if (!(t >= 0.0)) throw DomainError("mean path: times must be nonnegative");
        const double r = with_sens ? baseline.cumulative(t, j) : baseline.cumulative(t);
        const double tt = scale * r;
        const double mu = with_sens ? shared.mean(tt, work, gs) : shared.mean(tt);
        out.mu[k] = mu;
        if (!with_sens) continue;
        const double rate = shared.rate(mu);
        const auto row = static_cast<Eigen::Index>(k);
        for (std::size_t p = 0; p < nb; ++p) out.sens(row, static_cast<Eigen::Index>(p)) = rate * tt * subject.x[static_cast<Eigen::Index>(p)];
        for (std::size_t m = 0; m < na; ++m) out.sens(row, static_cast<Eigen::Index>(nb + m)) = rate * scale * j[m];
        for (std::size_t m = 0; m < ng; ++m) out.sens(row, static_cast<Eigen::Index>(nb + na + m)) = gs[m];
    }
    return out;
}

MeanPath single_subject(const Subject& subject, const Model& model, const ParamVector& theta,
                        std::span<const double> times, Dopri5Options options, bool with_sens) {
    const BaselineIntegral baseline(model.gamma, theta.a);
    const double scale = std::exp(subject.x.dot(theta.beta));
    double horizon = 0.0;
    for (double t : times) {
        if (!(t >= 0.0)) throw DomainError("mean path: times must be nonnegative");
        horizon = std::max(horizon, scale * baseline.cumulative(t));
    }
    const SharedMeanSolution shared = solve_shared(model.g, theta.b, horizon, options);
    return path_with(subject, model, theta, times, baseline, shared, with_sens);
}

}  // namespace

MeanPath mean_at(const Subject& subject, const Model& model, const ParamVector& theta,
                 std::span<const double> times, Dopri5Options options) {
    return single_subject(subject, model, theta, times, options, false);
}

MeanPath sensitivities_at(const Subject& subject, const Model& model, const ParamVector& theta,
                          std::span<const double> times, Dopri5Options options) {
    return single_subject(subject, model, theta, times, options, true);
}

std::vector<MeanPath> mean_paths(const Dataset& data, const Model& model, const ParamVector& theta,
                                 bool with_sensitivities, Dopri5Options options) {
    const BaselineIntegral baseline(model.gamma, theta.a);
    double horizon = 0.0;
    for (const auto& s : data.subjects)
        horizon = std::max(horizon, std::exp(s.x.dot(theta.beta)) * baseline.cumulative(s.censor));
    const SharedMeanSolution shared = solve_shared(model.g, theta.b, horizon, options);

    std::vector<MeanPath> out(data.size());
    const auto n = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(dynamic, 32)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const Subject& s = data.subjects[static_cast<std::size_t>(i)];
        std::vector<double> times = s.events;
        times.push_back(s.censor);
        out[static_cast<std::size_t>(i)] = path_with(s, model, theta, times, baseline, shared, with_sensitivities);
    }
    return out;
}

}  // namespace odereg
