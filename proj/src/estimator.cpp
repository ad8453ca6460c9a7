#include "odereg/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "odereg/errors.hpp"
#include "odereg/mean_ode.hpp"
#include "odereg/spline.hpp"

namespace odereg {

double choose_t0(const Dataset& data) {
    const std::vector<double> pooled = data.pooled_event_times();
    if (pooled.empty()) throw DomainError("choose_t0: no events");
    return pooled[(pooled.size() - 1) / 2];
}

namespace {

// Upper end of the g basis, as a quantile of the starting means at event
// times. Beyond it g continues linearly.
constexpr double kGBoundaryQuantile = 0.95;

bool has_gamma_spline(Variant v) { return v != Variant::AM; }
bool has_g_spline(Variant v) { return v == Variant::AM || v == Variant::Flex; }

std::vector<double> distinct(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

SplineBasis build_basis(const SplineConfig& cfg, std::size_t total_events, const std::vector<double>& values,
                        double lower, double upper) {
    const std::size_t count = knot_count(total_events, cfg.exponent);
    return SplineBasis(cfg.order, make_knots(values, cfg.rule, count, lower, upper), lower, upper);
}

// Cox-variant spec used to start the other variants.
ModelSpec cox_start_spec(const ModelSpec& spec) {
    ModelSpec cox = ModelSpec::for_variant(Variant::Cox);
    if (has_gamma_spline(spec.variant)) cox.gamma_config = spec.gamma_config;
    return cox;
}

}  // namespace

Model realize_model(const Dataset& data, const ModelSpec& spec, double g_upper, const std::vector<double>& g_values) {
    const std::size_t total = data.total_events();
    if (total == 0) throw DomainError("fit: the dataset has no events");
    Model m;
    m.variant = spec.variant;
    m.num_covariates = data.num_covariates;
    m.fix_beta1 = spec.fix_beta1;
    if (has_gamma_spline(spec.variant)) {
        const std::vector<double> times = distinct(data.pooled_event_times());
        m.gamma = Component::spline(build_basis(spec.gamma_config, total, times, 0.0, data.max_time()));
    }
    if (spec.variant == Variant::LT) {
        if (!spec.known_g) throw ValidationError("the lt variant needs a known q function");
        m.g = Component::fixed(*spec.known_g);
    } else if (has_g_spline(spec.variant)) {
        if (!(g_upper > 0.0)) throw DomainError("realize_model: g boundary must be positive");
        const std::vector<double> values = distinct(g_values);
        if (spec.g_config.rule == KnotRule::Quantile && values.empty())
            throw DomainError("realize_model: quantile knots for g need mean values");
        m.g = Component::spline(build_basis(spec.g_config, total, values, 0.0, g_upper));
    }
    if (spec.t0) {
        m.t0 = *spec.t0;
    } else if (spec.anchor_at_median) {
        m.t0 = choose_t0(data);
    }
    if (m.t0 && !m.gamma.is_spline()) throw ValidationError("the anchor t0 needs an estimated alpha");
    return m;
}

StartingPoint init_theta(const Dataset& data, const ModelSpec& spec, const FitOptions& options) {
    if (spec.variant == Variant::Cox) {
        StartingPoint sp{realize_model(data, spec), {}};
        sp.theta = ParamVector::zeros(sp.model);
        std::mt19937_64 rng(options.seed);
        std::uniform_real_distribution<double> unif(-0.1, 0.1);
        for (Eigen::Index k = 0; k < sp.theta.beta.size(); ++k) sp.theta.beta[k] = unif(rng);
        for (Eigen::Index k = 0; k < sp.theta.a.size(); ++k) sp.theta.a[k] = unif(rng);
        if (sp.model.fix_beta1) sp.theta.beta[0] = 1.0;
        if (sp.model.t0) {
            // Project onto gamma(t0) = 0 through the elimination map.
            const Parameterization param(sp.model);
            sp.theta = param.to_params(param.to_free(sp.theta));
        }
        return sp;
    }

    const ModelSpec cox_spec = cox_start_spec(spec);
    const FitResult cox = fit(data, cox_spec, options);

    double g_upper = 0.0;
    std::vector<double> g_values;
    if (has_g_spline(spec.variant)) {
        const std::vector<MeanPath> paths = mean_paths(data, cox.model, cox.theta_hat, false, options.ode);
        for (std::size_t i = 0; i < paths.size(); ++i) {
            const MeanPath& p = paths[i];
            g_values.insert(g_values.end(), p.mu.begin(), p.mu.end() - 1);
        }
        if (!g_values.empty()) {
            std::vector<double> sorted = g_values;
            std::sort(sorted.begin(), sorted.end());
            g_upper = sorted[static_cast<std::size_t>(kGBoundaryQuantile * static_cast<double>(sorted.size() - 1))];
        }
        if (!(g_upper > 0.0)) {
            for (const auto& p : paths) g_upper = std::max(g_upper, p.mu.back());
        }
        std::erase_if(g_values, [g_upper](double v) { return v > g_upper; });
    }

    StartingPoint sp{realize_model(data, spec, g_upper, g_values), {}};
    sp.theta = ParamVector::zeros(sp.model);
    sp.theta.beta = cox.theta_hat.beta;
    if (sp.model.fix_beta1) {
        if (sp.theta.beta[0] > 0.1) sp.theta.beta /= sp.theta.beta[0];
        sp.theta.beta[0] = 1.0;
    }
    return sp;
}

namespace {

// Objective restricted to one block of free coordinates.
class BlockView {
public:
    BlockView(Objective& obj, Eigen::VectorXd& free, Eigen::Index first, Eigen::Index size)
        : obj_(obj), free_(free), first_(first), size_(size) {}

    double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
        Eigen::VectorXd trial = free_;
        trial.segment(first_, size_) = x;
        Eigen::VectorXd full_grad;
        const double f = obj_.value(trial, full_grad);
        grad = full_grad.segment(first_, size_);
        return f;
    }

private:
    Objective& obj_;
    Eigen::VectorXd& free_;
    Eigen::Index first_;
    Eigen::Index size_;
};

}  // namespace

FitResult fit_from(const Dataset& data, const Model& model, const ParamVector& start, const FitOptions& options,
                   const ModelSpec& spec) {
    FitResult res;
    res.spec = spec;
    res.model = model;
    res.theta_init = start;

    Objective obj(data, res.model, options.execution, options.ode);
    const Parameterization& param = obj.parameterization();
    Eigen::VectorXd free = param.to_free(start);
    Eigen::VectorXd grad;
    double f = obj.value(free, grad);
    if (!std::isfinite(f)) throw InitializationError("objective is not finite at the starting point");
    res.trace.push_back(-f);

    const auto nb = static_cast<Eigen::Index>(param.beta_free());
    const auto ns = static_cast<Eigen::Index>(param.spline_free());
    bool inner_failed = false;

    auto run_block = [&](Eigen::Index first, Eigen::Index size) {
        if (size == 0) return;
        BlockView view(obj, free, first, size);
        const BfgsResult r = bfgs_minimize(std::ref(view), free.segment(first, size), options.inner);
        if (r.f <= f) {
            free.segment(first, size) = r.x;
            f = r.f;
        }
        if (r.status == BfgsStatus::LineSearchFailed || r.status == BfgsStatus::NonFiniteStart) inner_failed = true;
        res.trace.push_back(-f);
    };

    bool small_step = false;
    for (res.outer_iterations = 0; res.outer_iterations < options.max_outer;) {
        const double before = f;
        inner_failed = false;
        run_block(nb, ns);
        run_block(0, nb);
        ++res.outer_iterations;
        if (before - f < options.outer_tol) {
            small_step = true;
            break;
        }
    }

    if (options.polish && param.free_dim() > 0) {
        BfgsOptions joint = options.inner;
        joint.grad_tol = std::min(joint.grad_tol, options.grad_tol);
        auto whole = [&obj](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return obj.value(x, g); };
        const BfgsResult r = bfgs_minimize(whole, free, joint);
        if (r.f <= f) {
            free = r.x;
            f = r.f;
        }
        res.trace.push_back(-f);
    }

    obj.value(free, grad);
    res.gradient_norm = grad.size() ? grad.lpNorm<Eigen::Infinity>() : 0.0;
    res.theta_hat = param.to_params(free);
    res.loglik = -f;
    res.converged = res.gradient_norm < options.grad_tol;
    if (res.converged)
        res.message = "converged";
    else if (inner_failed)
        res.message = "line search failed; returning best point found";
    else if (!small_step)
        res.message = "outer iteration limit reached";
    else
        res.message = "objective stalled above the gradient tolerance";
    return res;
}

FitResult fit(const Dataset& data, const ModelSpec& spec, const FitOptions& options) {
    if (data.empty()) throw DomainError("fit: empty dataset");
    const StartingPoint sp = init_theta(data, spec, options);
    return fit_from(data, sp.model, sp.theta, options, spec);
}

}  // namespace odereg
