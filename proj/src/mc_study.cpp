#include "odereg/mc_study.hpp"

#include <chrono>
#include <cmath>
#include <exception>

#include "odereg/errors.hpp"
#include "odereg/rng.hpp"

namespace odereg {

namespace {

struct Grids {
    double alpha_to = 0.0;
    double q_to = 0.0;
};

Grids study_grids(const TrueModel& truth) {
    return {truth.max_censor, true_mean(truth, 0.0, truth.max_censor)};
}

// Shift that puts a constrained alpha-hat on the scale of the truth at t0.
double anchor_shift(const TrueModel& truth, const FitResult& fit) {
    if (!fit.model.t0) return 0.0;
    const double t0 = *fit.model.t0;
    return std::log(truth.alpha(t0)) - fit.model.gamma.value(fit.theta_hat.a, t0);
}

}  // namespace

McReplicate run_replicate(const TrueModel& truth, const McOptions& options, std::size_t index) {
    McReplicate rep;
    rep.index = index;
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t seed = stream_seed(options.seed, index);
    try {
        const Dataset data = simulate_dataset(truth, options.n, seed);
        FitOptions fo = options.fit;
        fo.seed = seed;
        const FitResult res = fit(data, options.spec, fo);
        rep.converged = res.converged;
        rep.beta = res.theta_hat.beta;
        const std::size_t resamples = options.resamples ? options.resamples : default_resamples(options.spec.variant);
        const CovarianceEstimate cov =
            estimate_covariance(data, res.model, res.theta_hat, options.cov, resamples, stream_seed(seed, 1));
        const Parameterization param(res.model);
        const Eigen::VectorXd se = cov.se();
        rep.se = Eigen::VectorXd::Zero(rep.beta.size());
        for (Eigen::Index k = 0; k < rep.beta.size(); ++k)
            if (const auto idx = param.beta_free_index(static_cast<std::size_t>(k)))
                rep.se[k] = se[static_cast<Eigen::Index>(*idx)];
        if (options.curve_points > 0) {
            const Grids grids = study_grids(truth);
            const double shift = anchor_shift(truth, res);
            if (res.model.gamma.is_spline())
                rep.curves.push_back(curve_band(res.model, res.theta_hat, cov, CurveKind::Alpha, 0.0, grids.alpha_to,
                                                options.curve_points, options.ci_level, shift));
            else
                rep.curves.emplace_back();
            if (res.model.g.is_spline())
                rep.curves.push_back(curve_band(res.model, res.theta_hat, cov, CurveKind::Q, 0.0, grids.q_to,
                                                options.curve_points, options.ci_level, -shift));
            else
                rep.curves.emplace_back();
        }
        rep.ok = true;
    } catch (const std::exception& e) {
        rep.error = e.what();
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

std::vector<McRow> summarize(const std::vector<McReplicate>& reps, const Eigen::VectorXd& truth,
                             const std::vector<std::size_t>& coefficients, double ci_level) {
    const double zq = normal_quantile(0.5 + 0.5 * ci_level);
    std::vector<McRow> rows;
    for (std::size_t k : coefficients) {
        const auto ki = static_cast<Eigen::Index>(k);
        McRow row;
        row.name = "beta" + std::to_string(k + 1);
        row.truth = truth[ki];
        double sum = 0.0, sum_se = 0.0, covered = 0.0;
        for (const auto& r : reps) {
            if (!r.ok || !r.converged) continue;
            ++row.used;
            sum += r.beta[ki];
            sum_se += r.se[ki];
            if (std::abs(r.beta[ki] - row.truth) <= zq * r.se[ki]) covered += 1.0;
        }
        if (row.used == 0) {
            rows.push_back(row);
            continue;
        }
        const double m = static_cast<double>(row.used);
        const double mean = sum / m;
        double ss = 0.0;
        for (const auto& r : reps)
            if (r.ok && r.converged) ss += (r.beta[ki] - mean) * (r.beta[ki] - mean);
        row.bias = mean - row.truth;
        row.se = row.used > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
        row.ese = sum_se / m;
        row.cp = covered / m;
        rows.push_back(row);
    }
    return rows;
}

McSummary mc_study(const McOptions& options) {
    if (options.reps < 2) throw DomainError("mc_study: need at least two replicates");
    const TrueModel truth = setting_catalog(options.setting);
    McSummary out;
    out.reps = options.reps;
    out.replicates.resize(options.reps);
    const auto count = static_cast<std::ptrdiff_t>(options.reps);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t r = 0; r < count; ++r)
        out.replicates[static_cast<std::size_t>(r)] = run_replicate(truth, options, static_cast<std::size_t>(r));

    double seconds = 0.0;
    for (const auto& r : out.replicates) {
        seconds += r.seconds;
        if (!r.ok)
            ++out.failed;
        else if (!r.converged)
            ++out.unconverged;
    }
    out.mean_seconds = seconds / static_cast<double>(options.reps);

    std::vector<std::size_t> coefs;
    const bool fixed_first = options.spec.fix_beta1;
    for (std::size_t k = fixed_first ? 1 : 0; k < static_cast<std::size_t>(truth.beta.size()); ++k) coefs.push_back(k);
    out.rows = summarize(out.replicates, truth.beta, coefs, options.ci_level);

    if (options.curve_points > 0) {
        const Grids grids = study_grids(truth);
        for (std::size_t which = 0; which < 2; ++which) {
            McCurve curve;
            curve.kind = which == 0 ? "alpha" : "q";
            const auto& fn = which == 0 ? truth.alpha : truth.q;
            const double to = which == 0 ? grids.alpha_to : grids.q_to;
            const std::size_t p = options.curve_points;
            std::size_t used = 0;
            curve.x.resize(p);
            curve.truth.resize(p);
            curve.mean.assign(p, 0.0);
            curve.lower.assign(p, 0.0);
            curve.upper.assign(p, 0.0);
            curve.coverage.assign(p, 0.0);
            for (std::size_t j = 0; j < p; ++j) {
                curve.x[j] = to * static_cast<double>(j) / static_cast<double>(p - 1);
                curve.truth[j] = fn(curve.x[j]);
            }
            for (const auto& r : out.replicates) {
                if (!r.ok || !r.converged || r.curves.size() != 2 || r.curves[which].x.empty()) continue;
                ++used;
                const CurveBand& b = r.curves[which];
                for (std::size_t j = 0; j < p; ++j) {
                    curve.mean[j] += b.value[j];
                    curve.lower[j] += b.lower[j];
                    curve.upper[j] += b.upper[j];
                    if (b.lower[j] <= curve.truth[j] && curve.truth[j] <= b.upper[j]) curve.coverage[j] += 1.0;
                }
            }
            if (used == 0) continue;
            for (std::size_t j = 0; j < p; ++j) {
                curve.mean[j] /= static_cast<double>(used);
                curve.lower[j] /= static_cast<double>(used);
                curve.upper[j] /= static_cast<double>(used);
                curve.coverage[j] /= static_cast<double>(used);
            }
            out.curves.push_back(std::move(curve));
        }
    }
    return out;
}

}  // namespace odereg
