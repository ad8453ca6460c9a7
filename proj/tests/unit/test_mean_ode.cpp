#include <doctest.h>

#include <cmath>
#include <random>

#include "odereg/dopri5.hpp"
#include "odereg/errors.hpp"
#include "odereg/mean_ode.hpp"
#include "oracles.hpp"

using namespace odereg;

namespace {

LogFunction log_aft_q() {
    return {[](double u) { return std::log(2.0 / (u + 1.0)); }, [](double u) { return -1.0 / (u + 1.0); }, "aft"};
}

LogFunction log_quadratic_alpha() {
    return {[](double t) { return std::log(t * t + 1.0); }, [](double t) { return 2.0 * t / (t * t + 1.0); }, "t^2+1"};
}

Model flex_model() {
    Model m;
    m.variant = Variant::Flex;
    m.num_covariates = 2;
    m.gamma = Component::spline(SplineBasis(4, {0.8, 1.9}, 0.0, 3.0));
    m.g = Component::spline(SplineBasis(4, {1.5, 3.0}, 0.0, 6.0));
    return m;
}

ParamVector random_theta(const Model& m, std::mt19937_64& rng, double sd = 0.3) {
    std::normal_distribution<double> z(0.0, sd);
    ParamVector th = ParamVector::zeros(m);
    for (auto* v : {&th.beta, &th.a, &th.b})
        for (Eigen::Index k = 0; k < v->size(); ++k) (*v)[k] = z(rng);
    return th;
}

Subject subject_with(Eigen::VectorXd x, double censor) {
    Subject s;
    s.id = "a";
    s.x = std::move(x);
    s.censor = censor;
    return s;
}

}  // namespace

TEST_SUITE("dopri5") {

TEST_CASE("exponential decay and dense output") {
    Dopri5 ode([](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = -y; }, 0.0,
               Eigen::VectorXd::Ones(1), {1e-10, 1e-12});
    ode.extend_to(5.0);
    CHECK(ode.t_end() >= 5.0);
    for (double t = 0.0; t <= 5.0; t += 0.173) CHECK(std::abs(ode.eval_component(t, 0) - std::exp(-t)) < 1e-9);
}

TEST_CASE("harmonic oscillator keeps both components accurate") {
    Eigen::VectorXd y0(2);
    y0 << 0.0, 1.0;
    Dopri5 ode(
        [](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
            dy.resize(2);
            dy[0] = y[1];
            dy[1] = -y[0];
        },
        0.0, y0, {1e-10, 1e-12});
    ode.extend_to(10.0);
    Eigen::VectorXd out;
    ode.eval(7.3, out);
    CHECK(std::abs(out[0] - std::sin(7.3)) < 1e-8);
    CHECK(std::abs(out[1] - std::cos(7.3)) < 1e-8);
}

TEST_CASE("extending the horizon leaves earlier values unchanged") {
    auto rhs = [](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = (1.0 + t) * y.array().cos().matrix(); };
    Dopri5 a(rhs, 0.0, Eigen::VectorXd::Zero(1));
    Dopri5 b(rhs, 0.0, Eigen::VectorXd::Zero(1));
    a.extend_to(1.0);
    const double before = a.eval_component(0.77, 0);
    a.extend_to(4.0);
    b.extend_to(4.0);
    CHECK(a.eval_component(0.77, 0) == before);
    CHECK(b.eval_component(0.77, 0) == before);
}

TEST_CASE("finite-time blow-up raises SolverError with the last time reached") {
    Dopri5 ode([](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = y.array().square().matrix(); }, 0.0,
               Eigen::VectorXd::Ones(1));
    try {
        ode.extend_to(2.0);
        FAIL("expected a solver failure");
    } catch (const SolverError& e) {
        CHECK(e.last_time() > 0.9);
        CHECK(e.last_time() < 1.001);
    }
}

}

TEST_SUITE("meanode") {

TEST_CASE("transformed time examples") {
    Model m;
    m.num_covariates = 1;
    m.gamma = Component::spline(SplineBasis(4, {1.0}, 0.0, 2.0));
    ParamVector th = ParamVector::zeros(m);
    th.beta[0] = std::log(2.0);
    const Subject s = subject_with(Eigen::VectorXd::Ones(1), 2.0);
    CHECK(transformed_time(s, m, th, 1.5) == doctest::Approx(3.0).epsilon(1e-14));
    th.beta[0] = 0.0;
    CHECK(transformed_time(s, m, th, 0.0) == 0.0);
    CHECK_THROWS_AS(transformed_time(s, m, th, -0.1), DomainError);
}

TEST_CASE("baseline quadrature agrees with adaptive Simpson") {
    std::mt19937_64 rng(17);
    const Model m = flex_model();
    std::uniform_real_distribution<double> when(0.0, 3.0);
    for (int r = 0; r < 25; ++r) {
        const ParamVector th = random_theta(m, rng, 0.5);
        const BaselineIntegral base(m.gamma, th.a);
        const double t = when(rng);
        const double ref = oracle::simpson([&](double s) { return std::exp(m.gamma.value(th.a, s)); }, 0.0, t);
        CHECK(std::abs(base.cumulative(t) - ref) <= 1e-10 * ref);

        std::vector<double> j(m.dim_a());
        base.cumulative(t, j);
        for (std::size_t k = 0; k < j.size(); ++k) {
            const double jref = oracle::simpson(
                [&](double s) { return m.gamma.basis().eval(s)[k] * std::exp(m.gamma.value(th.a, s)); }, 0.0, t);
            CHECK(std::abs(j[k] - jref) <= 1e-10 * std::max(ref, 1e-3));
        }
    }
}

TEST_CASE("shared solution: unit rate and closed form") {
    Model m;
    m.g = Component::spline(SplineBasis(4, {1.0}, 0.0, 4.0));
    const Eigen::VectorXd b = Eigen::VectorXd::Zero(5);
    const SharedMeanSolution unit = solve_shared(m.g, b, 3.0);
    CHECK(std::abs(unit.mean(3.0) - 3.0) < 1e-8);

    const Component aft = Component::fixed(log_aft_q());
    const SharedMeanSolution sol = solve_shared(aft, Eigen::VectorXd(), 5.0);
    CHECK(sol.mean(1.0) == doctest::Approx(1.2360680).epsilon(1e-7));
    const SharedMeanSolution tight = solve_shared(aft, Eigen::VectorXd(), 5.0, Dopri5Options{1e-10, 1e-12});
    for (double t = 0.0; t <= 5.0; t += 0.25) {
        const double exact = -1.0 + std::sqrt(1.0 + 4.0 * t);
        CHECK(std::abs(sol.mean(t) - exact) <= 1e-7 * exact);
        CHECK(std::abs(tight.mean(t) - exact) < 1e-8);
    }

    double prev = -1.0;
    for (double t = 0.0; t <= 5.0; t += 0.01) {
        const double v = sol.mean(t);
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("absent g gives the identity") {
    const SharedMeanSolution sol = solve_shared(Component::none(), Eigen::VectorXd(), 10.0);
    CHECK(sol.mean(7.25) == 7.25);
}

TEST_CASE("Cox mean with alpha(t) = t^2 + 1") {
    Model m;
    m.num_covariates = 1;
    m.gamma = Component::fixed(log_quadratic_alpha());
    const ParamVector th = ParamVector::zeros(m);
    const Subject s = subject_with(Eigen::VectorXd::Zero(1), 2.0);
    const std::vector<double> times{0.0, 1.0, 2.0};
    const MeanPath p = mean_at(s, m, th, times);
    CHECK(p.mu[0] == 0.0);
    CHECK(p.mu[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(p.mu[2] == doctest::Approx(8.0 / 3.0 + 2.0).epsilon(1e-12));
}

TEST_CASE("shared transform equals the direct per-subject solve") {
    std::mt19937_64 rng(23);
    const Model m = flex_model();
    std::normal_distribution<double> z(0.0, 0.5);
    std::uniform_real_distribution<double> c(0.5, 3.0);
    double worst = 0.0;
    for (int r = 0; r < 50; ++r) {
        const ParamVector th = random_theta(m, rng);
        Eigen::VectorXd x(2);
        x << z(rng), z(rng);
        const double censor = c(rng);
        const std::vector<double> times{0.1 * censor, 0.5 * censor, censor};
        const MeanPath p = mean_at(subject_with(x, censor), m, th, times);
        const std::vector<double> ref = oracle::direct_mean(m, th, x, times);
        for (std::size_t k = 0; k < times.size(); ++k) worst = std::max(worst, std::abs(p.mu[k] - ref[k]) / ref[k]);
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("covariate shift scales transformed time") {
    std::mt19937_64 rng(29);
    const Model m = flex_model();
    const ParamVector th = random_theta(m, rng);
    Eigen::VectorXd x(2);
    x << 0.3, -0.2;
    const double delta = 0.4;
    // Shifting x'beta by delta through the first covariate.
    Eigen::VectorXd xs = x;
    xs[0] += delta / th.beta[0];
    const std::vector<double> times{0.4, 1.1, 2.0};
    const MeanPath shifted = mean_at(subject_with(xs, 2.0), m, th, times);
    const BaselineIntegral base(m.gamma, th.a);
    double horizon = 0.0;
    for (double t : times) horizon = std::max(horizon, std::exp(x.dot(th.beta) + delta) * base.cumulative(t));
    const SharedMeanSolution sol = solve_shared(m.g, th.b, horizon);
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double tt = std::exp(delta) * std::exp(x.dot(th.beta)) * base.cumulative(times[k]);
        CHECK(shifted.mu[k] == doctest::Approx(sol.mean(tt)).epsilon(1e-8));
    }
}

TEST_CASE("mean paths are nondecreasing and start at zero") {
    std::mt19937_64 rng(31);
    const Model m = flex_model();
    const ParamVector th = random_theta(m, rng);
    std::vector<double> times;
    for (double t = 0.0; t <= 3.0; t += 0.05) times.push_back(t);
    Eigen::VectorXd x(2);
    x << 0.5, 0.1;
    const MeanPath p = sensitivities_at(subject_with(x, 3.0), m, th, times);
    CHECK(p.mu[0] == 0.0);
    CHECK(p.sens.row(0).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t k = 1; k < times.size(); ++k) CHECK(p.mu[k] >= p.mu[k - 1]);
}

TEST_CASE("Cox sensitivities: d mu / d beta_k = mu x_k") {
    Model m;
    m.variant = Variant::Cox;
    m.num_covariates = 3;
    m.gamma = Component::spline(SplineBasis(5, {0.7, 1.4}, 0.0, 2.0));
    std::mt19937_64 rng(37);
    const ParamVector th = random_theta(m, rng);
    Eigen::VectorXd x(3);
    x << 0.2, -0.4, 1.1;
    const std::vector<double> times{0.3, 1.0, 2.0};
    const MeanPath p = sensitivities_at(subject_with(x, 2.0), m, th, times);
    for (std::size_t t = 0; t < times.size(); ++t)
        for (Eigen::Index k = 0; k < 3; ++k)
            CHECK(p.sens(static_cast<Eigen::Index>(t), k) == doctest::Approx(p.mu[t] * x[k]).epsilon(1e-12));
}

TEST_CASE("sensitivities match finite differences") {
    std::mt19937_64 rng(41);
    const Model m = flex_model();
    const Dopri5Options tight{1e-12, 1e-14};
    double worst = 0.0;
    for (int r = 0; r < 20; ++r) {
        const ParamVector th = random_theta(m, rng);
        Eigen::VectorXd x(2);
        x << 0.4, -0.3;
        const std::vector<double> times{0.6, 2.5};
        const Subject s = subject_with(x, 2.5);
        const MeanPath p = sensitivities_at(s, m, th, times, tight);
        const Eigen::VectorXd flat = th.flat();
        for (Eigen::Index k = 0; k < flat.size(); ++k) {
            const double h = 1e-6;
            Eigen::VectorXd up = flat;
            Eigen::VectorXd dn = flat;
            up[k] += h;
            dn[k] -= h;
            const MeanPath pu = mean_at(s, m, ParamVector::from_flat(m, up), times, tight);
            const MeanPath pd = mean_at(s, m, ParamVector::from_flat(m, dn), times, tight);
            for (std::size_t t = 0; t < times.size(); ++t) {
                const double fd = (pu.mu[t] - pd.mu[t]) / (2.0 * h);
                const double an = p.sens(static_cast<Eigen::Index>(t), k);
                worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd), 1e-3));
            }
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("finite-difference error of a b-sensitivity decays at second order") {
    std::mt19937_64 rng(43);
    const Model m = flex_model();
    const ParamVector th = random_theta(m, rng);
    const Dopri5Options tight{1e-13, 1e-15};
    Eigen::VectorXd x(2);
    x << 0.1, 0.2;
    const Subject s = subject_with(x, 3.0);
    const std::vector<double> times{3.0};
    const double an = sensitivities_at(s, m, th, times, tight).sens(0, 2 + 6 + 2);
    auto fd = [&](double h) {
        Eigen::VectorXd up = th.flat();
        Eigen::VectorXd dn = th.flat();
        up[2 + 6 + 2] += h;
        dn[2 + 6 + 2] -= h;
        return (mean_at(s, m, ParamVector::from_flat(m, up), times, tight).mu[0] -
                mean_at(s, m, ParamVector::from_flat(m, dn), times, tight).mu[0]) /
               (2.0 * h);
    };
    const double e1 = std::abs(fd(0.2) - an);
    const double e2 = std::abs(fd(0.1) - an);
    REQUIRE(e1 > 1e-9);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("batched paths equal single-subject paths") {
    const Dataset data = oracle::random_dataset(40, 2, 5);
    const Model m = flex_model();
    std::mt19937_64 rng(47);
    const ParamVector th = random_theta(m, rng);
    const auto paths = mean_paths(data, m, th, true);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Subject& s = data.subjects[i];
        std::vector<double> times = s.events;
        times.push_back(s.censor);
        const MeanPath one = sensitivities_at(s, m, th, times);
        for (std::size_t k = 0; k < times.size(); ++k) CHECK(paths[i].mu[k] == doctest::Approx(one.mu[k]).epsilon(1e-13));
        CHECK((paths[i].sens - one.sens).cwiseAbs().maxCoeff() < 1e-12);
    }
}

}
