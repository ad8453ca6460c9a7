#include "odereg/simulate.hpp"

#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "odereg/dopri5.hpp"
#include "odereg/errors.hpp"
#include "odereg/rng.hpp"

namespace odereg {

double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
    std::normal_distribution<double> normal(mean, sd);
    for (;;) {
        const double v = normal(rng);
        if (v >= lo && v <= hi) return v;
    }
}

namespace {

double integrate(const std::function<double(double)>& f, double hi) {
    if (hi <= 0.0) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, hi, 15, 1e-14);
}

std::function<Eigen::VectorXd(Rng&)> normal_covariates(double sd, double bound) {
    return [sd, bound](Rng& rng) {
        Eigen::VectorXd x(3);
        for (Eigen::Index k = 0; k < 3; ++k) x[k] = truncated_normal(rng, 0.0, sd, -bound, bound);
        return x;
    };
}

std::function<double(Rng&)> uniform_censor(double lo, double hi) {
    return [lo, hi](Rng& rng) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
}

ModelSpec spec_with(Variant v, std::size_t order, KnotRule rule, double exponent) {
    ModelSpec s = ModelSpec::for_variant(v);
    s.gamma_config = {order, rule, exponent};
    s.g_config = {order, rule, exponent};
    return s;
}

void cox_truth(TrueModel& m) {
    m.alpha = [](double t) { return t * t + 1.0; };
    m.alpha_integral = [](double t) { return t * t * t / 3.0 + t; };
    m.q = [](double) { return 1.0; };
    m.inv_q_integral = [](double u) { return u; };
    m.covariates = normal_covariates(0.5, 4.0);
    m.censor = uniform_censor(0.0, 2.0);
    m.max_censor = 2.0;
    m.fit_spec = spec_with(Variant::Cox, 5, KnotRule::Equal, 1.0 / 7.0);
}

void aft_truth(TrueModel& m) {
    m.alpha = [](double) { return 1.0; };
    m.alpha_integral = [](double t) { return t; };
    m.q = [](double u) { return 2.0 / (u + 1.0); };
    m.inv_q_integral = [](double u) { return (u * u + 2.0 * u) / 4.0; };
    m.covariates = normal_covariates(0.5, 4.0);
    m.censor = uniform_censor(1.0, 3.0);
    m.max_censor = 3.0;
    m.fit_spec = spec_with(Variant::AM, 4, KnotRule::Equal, 0.2);
}

}  // namespace

TrueModel setting_catalog(int id) {
    TrueModel m;
    m.setting = id;
    m.beta = Eigen::VectorXd::Ones(3);
    switch (id) {
        case 1:
            cox_truth(m);
            m.description = "Cox-type: alpha(t) = t^2 + 1, q = 1";
            break;
        case 2:
            aft_truth(m);
            m.description = "AFT-type: alpha = 1, q(u) = 2 / (u + 1)";
            break;
        case 3:
            m.alpha = [](double t) { return 0.2 / (1.0 + t); };
            m.alpha_integral = [](double t) { return 0.2 * std::log1p(t); };
            m.q = [](double u) { return 1.0 / (u / 2.0 + 1.0); };
            m.inv_q_integral = [](double u) { return u + u * u / 4.0; };
            m.covariates = [](Rng& rng) {
                Eigen::VectorXd x(3);
                x[0] = truncated_normal(rng, 0.0, 1.0, -1.0, 1.0);
                x[1] = truncated_normal(rng, 0.0, 1.0, -1.0, 1.0);
                x[2] = std::bernoulli_distribution(0.5)(rng) ? 1.0 : 0.0;
                return x;
            };
            m.censor = [](Rng& rng) { return std::min(std::uniform_real_distribution<double>(2.0, 6.0)(rng), 4.0); };
            m.max_censor = 4.0;
            m.fit_spec = spec_with(Variant::LT, 4, KnotRule::Quantile, 0.2);
            m.fit_spec.known_g = parse_known_q("rational:1,0.5");
            m.description = "transformation: alpha(t) = 0.2 / (1 + t), q(u) = 1 / (u / 2 + 1)";
            break;
        case 4:
            m.alpha = [](double t) { return t + 1.0; };
            m.alpha_integral = [](double t) { return t * t / 2.0 + t; };
            m.q = [](double u) { return 2.0 / (u + 1.0); };
            m.inv_q_integral = [](double u) { return (u * u + 2.0 * u) / 4.0; };
            m.covariates = normal_covariates(0.5, 4.0);
            m.censor = uniform_censor(1.0, 3.0);
            m.max_censor = 3.0;
            m.fit_spec = spec_with(Variant::Flex, 4, KnotRule::Quantile, 0.2);
            m.fit_spec.t0 = 2.0;
            m.fit_spec.anchor_at_median = false;
            m.t0 = 2.0;
            m.description = "general transformation: alpha(t) = t + 1, q(u) = 2 / (u + 1)";
            break;
        case 5:
            cox_truth(m);
            m.frailty = true;
            m.description = "Cox-type with Gamma frailty: alpha(t) = t^2 + 1, q = 1";
            break;
        case 6:
            aft_truth(m);
            m.frailty = true;
            m.description = "AFT-type with Gamma frailty: alpha = 1, q(u) = 2 / (u + 1)";
            break;
        default:
            throw DomainError("setting_catalog: unknown setting " + std::to_string(id) + " (expected 1..6)");
    }
    return m;
}

double alpha_integral(const TrueModel& truth, double t) {
    return truth.alpha_integral ? truth.alpha_integral(t) : integrate(truth.alpha, t);
}

double inv_q_integral(const TrueModel& truth, double u) {
    if (truth.inv_q_integral) return truth.inv_q_integral(u);
    const auto& q = truth.q;
    return integrate([&q](double v) { return 1.0 / q(v); }, u);
}

double true_mean(const TrueModel& truth, double eta, double t) {
    if (!(t >= 0.0)) throw DomainError("true_mean: time must be nonnegative");
    const double target = std::exp(eta) * alpha_integral(truth, t);
    if (target <= 0.0) return 0.0;
    auto h = [&](double u) { return inv_q_integral(truth, u) - target; };
    double hi = std::max(target, 1e-12);
    while (h(hi) < 0.0) hi *= 2.0;
    boost::uintmax_t iters = 200;
    const auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-15 * std::max(1.0, std::abs(b)); };
    const auto r = boost::math::tools::toms748_solve(h, 0.0, hi, -target, h(hi), tol, iters);
    return 0.5 * (r.first + r.second);
}

std::vector<double> event_times(const TrueModel& truth, double eta, double censor, double xi, Rng& rng,
                                std::vector<double>* partial_sums) {
    std::vector<double> out;
    if (partial_sums) partial_sums->clear();
    const double scale = std::exp(eta);
    const auto& alpha = truth.alpha;
    const auto& q = truth.q;
    Dopri5 inverse([&](double u, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        dy[0] = 1.0 / (alpha(y[0]) * scale * q(u));
    }, 0.0, Eigen::VectorXd::Zero(1));
    std::exponential_distribution<double> unit(1.0);
    double s = 0.0;
    for (;;) {
        s += unit(rng);
        const double u = s / xi;
        inverse.extend_to(u);
        double t = inverse.eval_component(u, 0);
        // One Newton step on exp(eta) R0(t) = F0(u).
        t -= (scale * alpha_integral(truth, t) - inv_q_integral(truth, u)) / (scale * alpha(t));
        if (!(t <= censor)) break;
        out.push_back(t);
        if (partial_sums) partial_sums->push_back(s);
    }
    return out;
}

SubjectDraw simulate_subject_traced(const TrueModel& truth, Rng& rng) {
    SubjectDraw d;
    d.subject.x = truth.covariates(rng);
    double c = 0.0;
    while (!(c > 0.0)) c = truth.censor(rng);
    d.subject.censor = c;
    if (truth.frailty) {
        std::gamma_distribution<double> gamma(truth.frailty_shape, 1.0 / truth.frailty_shape);
        d.xi = gamma(rng);
    }
    d.subject.events = event_times(truth, d.subject.x.dot(truth.beta), c, d.xi, rng, &d.partial_sums);
    return d;
}

Subject simulate_subject(const TrueModel& truth, Rng& rng) { return simulate_subject_traced(truth, rng).subject; }

Dataset simulate_dataset(const TrueModel& truth, std::size_t n, std::uint64_t seed) {
    Dataset data;
    data.num_covariates = static_cast<std::size_t>(truth.beta.size());
    data.subjects.resize(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        Rng rng(stream_seed(seed, static_cast<std::uint64_t>(i)));
        Subject s = simulate_subject(truth, rng);
        s.id = std::to_string(i + 1);
        data.subjects[static_cast<std::size_t>(i)] = std::move(s);
    }
    return data;
}

}  // namespace odereg
