#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "odereg/errors.hpp"
#include "odereg/likelihood.hpp"
#include "odereg/reference.hpp"
#include "oracles.hpp"

using namespace odereg;

namespace {

Model variant_model(Variant v, std::size_t d = 2) {
    Model m;
    m.variant = v;
    m.num_covariates = d;
    if (v != Variant::AM) m.gamma = Component::spline(SplineBasis(4, {0.9, 1.8}, 0.0, 3.0));
    if (v == Variant::AM || v == Variant::Flex) m.g = Component::spline(SplineBasis(4, {1.2, 2.5}, 0.0, 5.0));
    if (v == Variant::LT) m.g = Component::fixed(parse_known_q("rational:1,0.5"));
    if (v == Variant::Flex) {
        m.fix_beta1 = true;
        m.t0 = 1.0;
    }
    return m;
}

ParamVector random_theta(const Model& m, std::mt19937_64& rng, double sd = 0.3) {
    std::normal_distribution<double> z(0.0, sd);
    const Parameterization param(m);
    Eigen::VectorXd f(static_cast<Eigen::Index>(param.free_dim()));
    for (Eigen::Index k = 0; k < f.size(); ++k) f[k] = z(rng);
    ParamVector th = param.to_params(f);
    th.b *= 0.3;  // keeps the linear extension of g from blowing up
    return th;
}

// Greville abscissae: coefficients that make the spline equal its argument.
Eigen::VectorXd identity_coefficients(const SplineBasis& b) {
    const auto k = oracle::clamped_knots(b.order(), b.interior_knots(), b.lower(), b.upper());
    Eigen::VectorXd c(static_cast<Eigen::Index>(b.dim()));
    for (std::size_t j = 0; j < b.dim(); ++j) {
        double s = 0.0;
        for (std::size_t r = 1; r < b.order(); ++r) s += k[j + r];
        c[static_cast<Eigen::Index>(j)] = b.order() > 1 ? s / static_cast<double>(b.order() - 1) : k[j];
    }
    return c;
}

const Variant kVariants[] = {Variant::Cox, Variant::AM, Variant::LT, Variant::Flex};

}  // namespace

TEST_SUITE("likelihood") {

TEST_CASE("unit intensity with one event") {
    Model m;
    m.num_covariates = 1;
    Dataset data;
    data.num_covariates = 1;
    data.subjects.push_back({"s1", Eigen::VectorXd::Zero(1), {0.5}, 1.0});
    CHECK(loglik(data, m, ParamVector::zeros(m)) == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("no events leaves only the censoring term") {
    const Model m = variant_model(Variant::Flex);
    std::mt19937_64 rng(2);
    const ParamVector th = random_theta(m, rng);
    Dataset data;
    data.num_covariates = 2;
    Eigen::VectorXd x(2);
    x << 0.3, -0.6;
    data.subjects.push_back({"s1", x, {}, 2.2});
    const std::vector<double> times{2.2};
    CHECK(loglik(data, m, th) == doctest::Approx(-oracle::direct_mean(m, th, x, times)[0]).epsilon(1e-8));
}

TEST_CASE("matches direct assembly with known alpha and q") {
    Model m;
    m.num_covariates = 2;
    m.gamma = Component::fixed(
        {[](double t) { return std::log(t * t + 1.0); }, [](double t) { return 2.0 * t / (t * t + 1.0); }, "t2"});
    m.g = Component::fixed(parse_known_q("rational:2,1"));
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Dataset data = oracle::random_dataset(30, 2, seed);
        ParamVector th = ParamVector::zeros(m);
        th.beta << 0.4, -0.7;
        double total = 0.0;
        for (const auto& s : data.subjects) {
            std::vector<double> times = s.events;
            times.push_back(s.censor);
            const auto mu = oracle::direct_mean(m, th, s.x, times);
            for (std::size_t j = 0; j < s.events.size(); ++j)
                total += s.x.dot(th.beta) + std::log(s.events[j] * s.events[j] + 1.0) + std::log(2.0 / (1.0 + mu[j]));
            total -= mu.back();
        }
        const double expected = total / static_cast<double>(data.size());
        CHECK(std::abs(loglik(data, m, th) - expected) < 1e-7 * std::abs(expected));
    }
}

TEST_CASE("score matches finite differences for every variant") {
    const Dopri5Options tight{1e-12, 1e-14};
    for (Variant v : kVariants) {
        CAPTURE(to_string(v));
        const Model m = variant_model(v);
        const Parameterization param(m);
        std::mt19937_64 rng(100 + static_cast<int>(v));
        double worst = 0.0;
        for (int draw = 0; draw < 20; ++draw) {
            const Dataset data = oracle::random_dataset(25, 2, 1000 + static_cast<std::uint64_t>(draw));
            const ParamVector th = random_theta(m, rng);
            EvalRequest req;
            req.gradient = true;
            req.ode = tight;
            const Eigen::VectorXd g = param.pull_back(evaluate(data, m, th, req).gradient);
            req.gradient = false;
            const Eigen::VectorXd f = param.to_free(th);
            for (Eigen::Index k = 0; k < f.size(); ++k) {
                const double h = 1e-6;
                Eigen::VectorXd up = f;
                Eigen::VectorXd dn = f;
                up[k] += h;
                dn[k] -= h;
                const double fd = (evaluate(data, m, param.to_params(up), req).loglik -
                                   evaluate(data, m, param.to_params(dn), req).loglik) /
                                  (2.0 * h);
                worst = std::max(worst, std::abs(fd - g[k]) / std::max(std::abs(fd), 1e-3));
            }
        }
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("Cox score for a subject without events") {
    Model m = variant_model(Variant::Cox, 3);
    std::mt19937_64 rng(4);
    const ParamVector th = random_theta(m, rng);
    Dataset data;
    data.num_covariates = 3;
    Eigen::VectorXd x(3);
    x << 0.5, -1.0, 0.25;
    data.subjects.push_back({"s", x, {}, 1.7});
    const std::vector<double> times{1.7};
    const double mu = oracle::direct_mean(m, th, x, times)[0];
    const Eigen::VectorXd g = score(data, m, th);
    for (Eigen::Index k = 0; k < 3; ++k) CHECK(g[k] == doctest::Approx(-mu * x[k]).epsilon(1e-9));
}

TEST_CASE("per-subject scores average to the score") {
    for (Variant v : kVariants) {
        CAPTURE(to_string(v));
        const Model m = variant_model(v);
        std::mt19937_64 rng(7);
        const ParamVector th = random_theta(m, rng);
        const Dataset data = oracle::random_dataset(60, 2, 8);
        const Eigen::MatrixXd rows = per_subject_scores(data, m, th);
        const Eigen::VectorXd g = score(data, m, th);
        CHECK((rows.colwise().mean().transpose() - g).cwiseAbs().maxCoeff() < 1e-12);

        Dataset one;
        one.num_covariates = 2;
        one.subjects.push_back(data.subjects[3]);
        CHECK((per_subject_scores(one, m, th).row(0).transpose() - score(one, m, th)).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("zero covariates and no events give a zero beta block under Cox") {
    const Model m = variant_model(Variant::Cox);
    std::mt19937_64 rng(9);
    const ParamVector th = random_theta(m, rng);
    Dataset data = oracle::random_dataset(5, 2, 10);
    data.subjects[2].x.setZero();
    data.subjects[2].events.clear();
    const Eigen::MatrixXd rows = per_subject_scores(data, m, th);
    CHECK(rows(2, 0) == 0.0);
    CHECK(rows(2, 1) == 0.0);
}

TEST_CASE("Cox objective is concave in (beta, a)") {
    const Model m = variant_model(Variant::Cox);
    const Parameterization param(m);
    std::mt19937_64 rng(12);
    for (int draw = 0; draw < 5; ++draw) {
        const Dataset data = oracle::random_dataset(50, 2, 200 + static_cast<std::uint64_t>(draw));
        const ParamVector th = random_theta(m, rng);
        const Eigen::VectorXd f = param.to_free(th);
        const auto p = f.size();
        Eigen::MatrixXd h(p, p);
        for (Eigen::Index k = 0; k < p; ++k) {
            const double e = 1e-5;
            Eigen::VectorXd up = f;
            Eigen::VectorXd dn = f;
            up[k] += e;
            dn[k] -= e;
            h.col(k) = (score(data, m, param.to_params(up)) - score(data, m, param.to_params(dn))) / (2.0 * e);
        }
        const Eigen::MatrixXd sym = 0.5 * (h + h.transpose());
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues().maxCoeff() < 1e-8);
    }
}

TEST_CASE("shifting every a_k changes the objective without an intercept") {
    const Model m = variant_model(Variant::Cox);
    std::mt19937_64 rng(13);
    const ParamVector th = random_theta(m, rng);
    const Dataset data = oracle::random_dataset(40, 2, 14);
    const Eigen::VectorXd g = score(data, m, th);
    // Direction: +1 on every a coefficient.
    CHECK(std::abs(g.segment(2, static_cast<Eigen::Index>(m.dim_a())).sum()) > 1e-6);
}

TEST_CASE("parallel and serial evaluation are bitwise identical") {
    for (Variant v : kVariants) {
        const Model m = variant_model(v);
        std::mt19937_64 rng(15);
        const ParamVector th = random_theta(m, rng);
        const Dataset data = oracle::random_dataset(300, 2, 16);
        EvalRequest par;
        par.gradient = true;
        par.subject_scores = true;
        EvalRequest ser = par;
        ser.execution = Execution::Serial;
        const Evaluation a = evaluate(data, m, th, par);
        const Evaluation b = evaluate(data, m, th, ser);
        CHECK(a.loglik == b.loglik);
        CHECK(a.gradient == b.gradient);
        CHECK(a.subject_scores == b.subject_scores);
    }
}

TEST_CASE("kernel agrees with the serial reference") {
    for (Variant v : kVariants) {
        CAPTURE(to_string(v));
        const Model m = variant_model(v);
        std::mt19937_64 rng(18);
        const ParamVector th = random_theta(m, rng);
        const Dataset data = oracle::random_dataset(80, 2, 19);
        EvalRequest req;
        req.gradient = true;
        const Evaluation fast = evaluate(data, m, th, req);
        const reference::Evaluation slow = reference::evaluate(data, m, th);
        CHECK(std::abs(fast.loglik - slow.loglik) < 1e-12 * std::max(1.0, std::abs(slow.loglik)));
        CHECK((fast.gradient - slow.gradient).cwiseAbs().maxCoeff() < 1e-11);
        for (std::size_t i = 0; i < data.size(); ++i)
            CHECK(fast.contributions[i] == doctest::Approx(slow.contributions[i]).epsilon(1e-12));
    }
}

TEST_CASE("solver failure names the subject") {
    Model m = variant_model(Variant::AM);
    ParamVector th = ParamVector::zeros(m);
    th.b = 5.0 * identity_coefficients(m.g.basis());  // g(u) = 5u: blow-up at t~ = 0.2
    const Dataset data = oracle::random_dataset(10, 2, 20);
    try {
        loglik(data, m, th);
        FAIL("expected a solver failure");
    } catch (const SolverError& e) {
        CHECK(std::string(e.what()).find("subject s") != std::string::npos);
    }
}

TEST_CASE("objective reports +inf on failure and caches the shared solve") {
    Model m = variant_model(Variant::AM);
    const Dataset data = oracle::random_dataset(50, 2, 21);
    Objective obj(data, m);
    const Parameterization& param = obj.parameterization();
    ParamVector th = ParamVector::zeros(m);
    Eigen::VectorXd f = param.to_free(th);
    Eigen::VectorXd g;
    const double base = obj.value(f, g);
    CHECK(std::isfinite(base));
    CHECK(obj.shared_solves() == 1);
    f[0] += 0.1;  // beta only
    obj.value(f, g);
    CHECK(obj.shared_solves() == 1);
    CHECK(obj.value(f) == doctest::Approx(-loglik(data, m, param.to_params(f))).epsilon(1e-14));

    th.b = 5.0 * identity_coefficients(m.g.basis());
    const double bad = obj.value(param.to_free(th), g);
    CHECK(std::isinf(bad));
    CHECK(g.size() == f.size());
    CHECK(obj.evaluations() == 4);
}

}
