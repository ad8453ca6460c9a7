#include <doctest.h>

#include <cmath>
#include <map>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "odereg/errors.hpp"
#include "odereg/rng.hpp"
#include "odereg/simulate.hpp"

using namespace odereg;

namespace {

TrueModel unit_rate() {
    TrueModel t;
    t.alpha = [](double) { return 1.0; };
    t.q = [](double) { return 1.0; };
    t.alpha_integral = [](double s) { return s; };
    t.inv_q_integral = [](double u) { return u; };
    t.beta = Eigen::VectorXd::Zero(1);
    t.covariates = [](Rng&) { return Eigen::VectorXd::Zero(1); };
    t.censor = [](Rng&) { return 2.0; };
    t.max_censor = 2.0;
    return t;
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("unit-rate process averages mu(c) events") {
    const TrueModel truth = unit_rate();
    Rng rng(1);
    double total = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const Subject s = simulate_subject(truth, rng);
        total += static_cast<double>(s.events.size());
        CHECK(std::is_sorted(s.events.begin(), s.events.end()));
        if (!s.events.empty()) CHECK(s.events.back() <= s.censor);
    }
    CHECK(std::abs(total / n - 2.0) < 0.02);
}

TEST_CASE("setting 2 counts follow the closed-form mean") {
    const TrueModel truth = setting_catalog(2);
    Rng rng(2);
    const std::vector<double> grid{0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    std::vector<double> counts(grid.size(), 0.0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const std::vector<double> ev = event_times(truth, 0.0, 3.0, 1.0, rng);
        for (std::size_t g = 0; g < grid.size(); ++g)
            counts[g] += static_cast<double>(std::upper_bound(ev.begin(), ev.end(), grid[g]) - ev.begin());
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double exact = -1.0 + std::sqrt(1.0 + 4.0 * grid[g]);
        CHECK(std::abs(counts[g] / n - exact) < 0.03);
        CHECK(true_mean(truth, 0.0, grid[g]) == doctest::Approx(exact).epsilon(1e-12));
    }
}

TEST_CASE("frailty has mean one") {
    const TrueModel truth = setting_catalog(5);
    Rng rng(3);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double xi = simulate_subject_traced(truth, rng).xi;
        sum += xi;
        sq += xi * xi;
    }
    CHECK(std::abs(sum / n - 1.0) < 0.01);
    CHECK(std::abs(sq / n - 1.0 - 0.5) < 0.03);
}

TEST_CASE("event times invert the cumulative mean") {
    for (int id = 1; id <= 6; ++id) {
        CAPTURE(id);
        const TrueModel truth = setting_catalog(id);
        Rng rng(static_cast<std::uint64_t>(10 + id));
        double worst = 0.0;
        for (int i = 0; i < 200; ++i) {
            const SubjectDraw d = simulate_subject_traced(truth, rng);
            const double eta = d.subject.x.dot(truth.beta);
            REQUIRE(d.partial_sums.size() == d.subject.events.size());
            for (std::size_t k = 0; k < d.subject.events.size(); ++k) {
                const double lhs = d.xi * true_mean(truth, eta, d.subject.events[k]);
                worst = std::max(worst, std::abs(lhs - d.partial_sums[k]) / std::max(1.0, d.partial_sums[k]));
                if (k > 0) CHECK(d.subject.events[k] > d.subject.events[k - 1]);
            }
            if (!d.subject.events.empty()) CHECK(d.subject.events.back() <= d.subject.censor);
        }
        CHECK(worst < 1e-8);
    }
}

TEST_CASE("counts without frailty are Poisson") {
    const TrueModel truth = setting_catalog(1);
    Rng rng(4);
    const double c = 2.0;
    const double mu = true_mean(truth, 0.0, c);
    CHECK(mu == doctest::Approx(8.0 / 3.0 + 2.0).epsilon(1e-12));
    const int n = 20000;
    const int top = 12;  // last cell pools counts >= top
    std::vector<double> observed(top + 1, 0.0);
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<int>(event_times(truth, 0.0, c, 1.0, rng).size());
        observed[static_cast<std::size_t>(std::min(k, top))] += 1.0;
    }
    const boost::math::poisson_distribution<double> pois(mu);
    double chi2 = 0.0;
    for (int k = 0; k <= top; ++k) {
        const double p = k < top ? boost::math::pdf(pois, k) : boost::math::cdf(boost::math::complement(pois, top - 1));
        const double e = n * p;
        chi2 += (observed[static_cast<std::size_t>(k)] - e) * (observed[static_cast<std::size_t>(k)] - e) / e;
    }
    const boost::math::chi_squared_distribution<double> ref(top);
    CHECK(boost::math::cdf(boost::math::complement(ref, chi2)) > 0.01);
}

TEST_CASE("frailty keeps the marginal mean") {
    const TrueModel truth = setting_catalog(5);
    Rng rng(5);
    const double c = 2.0;
    const int n = 40000;
    double sum = 0.0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double xi = std::gamma_distribution<double>(2.0, 0.5)(rng);
        const auto k = static_cast<double>(event_times(truth, 0.0, c, xi, rng).size());
        sum += k;
        sq += k * k;
    }
    const double mean = sum / n;
    const double sd = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - true_mean(truth, 0.0, c)) < 3.0 * sd);
}

TEST_CASE("datasets are reproducible from the seed") {
    const TrueModel truth = setting_catalog(3);
    const Dataset a = simulate_dataset(truth, 50, 9);
    const Dataset b = simulate_dataset(truth, 50, 9);
    const Dataset c = simulate_dataset(truth, 50, 10);
    REQUIRE(a.size() == 50);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.subjects[i].id == b.subjects[i].id);
        CHECK(a.subjects[i].x == b.subjects[i].x);
        CHECK(a.subjects[i].events == b.subjects[i].events);
        CHECK(a.subjects[i].censor == b.subjects[i].censor);
        differs = differs || a.subjects[i].censor != c.subjects[i].censor;
    }
    CHECK(differs);
    CHECK_NOTHROW(a.validate());
}

TEST_CASE("catalog") {
    const TrueModel s1 = setting_catalog(1);
    CHECK(s1.alpha(1.0) == 2.0);
    CHECK(s1.q(3.7) == 1.0);
    CHECK(s1.beta == Eigen::VectorXd::Ones(3));
    CHECK(!s1.frailty);
    CHECK(s1.fit_spec.variant == Variant::Cox);

    const TrueModel s2 = setting_catalog(2);
    CHECK(s2.q(1.0) == 1.0);
    CHECK(s2.fit_spec.variant == Variant::AM);

    const TrueModel s3 = setting_catalog(3);
    CHECK(s3.alpha(1.0) == doctest::Approx(0.1));
    CHECK(s3.q(2.0) == doctest::Approx(0.5));

    const TrueModel s4 = setting_catalog(4);
    REQUIRE(s4.t0.has_value());
    CHECK(*s4.t0 == 2.0);
    CHECK(s4.alpha(2.0) == 3.0);
    CHECK(s4.fit_spec.variant == Variant::Flex);
    CHECK(s4.fit_spec.fix_beta1);

    CHECK(setting_catalog(5).frailty);
    CHECK(setting_catalog(6).frailty);
    CHECK(setting_catalog(5).frailty_shape == 2.0);
    CHECK_THROWS_AS(setting_catalog(0), DomainError);
    CHECK_THROWS_AS(setting_catalog(7), DomainError);

    // Covariate and censoring laws.
    Rng rng(6);
    for (int i = 0; i < 2000; ++i) {
        const Subject a = simulate_subject(s1, rng);
        CHECK(a.x.cwiseAbs().maxCoeff() <= 4.0);
        CHECK(a.censor > 0.0);
        CHECK(a.censor < 2.0);
        const Subject b = simulate_subject(s3, rng);
        CHECK(b.x.head(2).cwiseAbs().maxCoeff() <= 1.0);
        CHECK((b.x[2] == 0.0 || b.x[2] == 1.0));
        CHECK(b.censor >= 2.0);
        CHECK(b.censor <= 4.0);
    }
}

TEST_CASE("truncated normal stays inside its bounds") {
    Rng rng(7);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double v = truncated_normal(rng, 0.0, 1.0, -1.0, 1.0);
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
        sum += v;
    }
    CHECK(std::abs(sum / 20000.0) < 0.02);
}

TEST_CASE("stream seeds differ across indices") {
    std::map<std::uint64_t, int> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) ++seen[stream_seed(42, i)];
    CHECK(seen.size() == 1000);
    CHECK(stream_seed(42, 3) == stream_seed(42, 3));
}

}
