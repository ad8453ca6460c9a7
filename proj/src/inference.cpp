#include "odereg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "odereg/errors.hpp"
#include "odereg/likelihood.hpp"
#include "odereg/rng.hpp"

namespace odereg {

std::string to_string(CovMethod m) { return m == CovMethod::Information ? "info" : "resample"; }

CovMethod parse_cov_method(std::string_view name) {
    if (name == "info") return CovMethod::Information;
    if (name == "resample") return CovMethod::Resampling;
    throw ValidationError("unknown covariance method '" + std::string(name) + "' (expected info|resample)");
}

Eigen::VectorXd CovarianceEstimate::se() const { return sigma.diagonal().cwiseMax(0.0).cwiseSqrt(); }

namespace {

Eigen::MatrixXd symmetric(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Inverse of a symmetric matrix, or RankDeficiencyError naming the weakest direction.
Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& m, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetric(m));
    const Eigen::VectorXd& lam = eig.eigenvalues();
    const double top = lam.cwiseAbs().maxCoeff();
    if (!(lam[0] > 1e-12 * top)) {
        const Eigen::VectorXd v = eig.eigenvectors().col(0);
        throw RankDeficiencyError(std::string(what) + " is singular", std::vector<double>(v.data(), v.data() + v.size()));
    }
    return eig.eigenvectors() * lam.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

CovarianceEstimate empirical_information(const Dataset& data, const Model& model, const ParamVector& theta_hat) {
    const Eigen::MatrixXd s = per_subject_scores(data, model, theta_hat);
    const double n = static_cast<double>(data.size());
    CovarianceEstimate out;
    out.method = CovMethod::Information;
    out.n = data.size();
    out.B_hat = symmetric(s.transpose() * s / n);
    out.A_hat = out.B_hat;
    out.sigma = symmetric(inverse_spd(out.B_hat, "empirical information") / n);
    return out;
}

Eigen::MatrixXd regress_slope(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& S) {
    if (Z.rows() != S.rows()) throw DomainError("regress_slope: Z and S need the same number of rows");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    if (qr.rank() < Z.cols()) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(Z);
        const Eigen::MatrixXd k = lu.kernel();
        throw RankDeficiencyError("regress_slope: design is rank deficient",
                                  std::vector<double>(k.col(0).data(), k.col(0).data() + k.rows()));
    }
    return qr.solve(S).transpose();
}

SlopeEstimate resample_slope(const Dataset& data, const Model& model, const ParamVector& theta_hat,
                             std::size_t resamples, std::uint64_t seed) {
    const Parameterization param(model);
    const auto p = static_cast<Eigen::Index>(param.free_dim());
    if (resamples < param.free_dim() + 1)
        throw DomainError("resample_slope: need at least #free + 1 resamples");
    const Eigen::VectorXd center = param.to_free(theta_hat);
    const double root_n = std::sqrt(static_cast<double>(data.size()));

    Eigen::MatrixXd Z(static_cast<Eigen::Index>(resamples), p);
    Eigen::MatrixXd S(static_cast<Eigen::Index>(resamples), p);
    std::vector<char> ok(resamples, 0);
    const auto count = static_cast<std::ptrdiff_t>(resamples);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t b = 0; b < count; ++b) {
        std::mt19937_64 rng(stream_seed(seed, static_cast<std::uint64_t>(b)));
        std::normal_distribution<double> normal;
        Eigen::VectorXd z(p);
        for (Eigen::Index k = 0; k < p; ++k) z[k] = normal(rng);
        Z.row(b) = z.transpose();
        try {
            const ParamVector theta = param.to_params(center + z / root_n);
            const Eigen::VectorXd s = score(data, model, theta, Execution::Serial);
            if (s.allFinite()) {
                S.row(b) = root_n * s.transpose();
                ok[static_cast<std::size_t>(b)] = 1;
            }
        } catch (const SolverError&) {
        } catch (const DomainError&) {
        }
    }

    SlopeEstimate out;
    std::vector<Eigen::Index> keep;
    for (std::size_t b = 0; b < resamples; ++b)
        if (ok[b]) keep.push_back(static_cast<Eigen::Index>(b));
    out.used = keep.size();
    out.failed = resamples - keep.size();
    if (keep.size() < param.free_dim() + 1)
        throw RankDeficiencyError("resample_slope: too few successful resamples", {});
    out.A_hat = -regress_slope(Z(keep, Eigen::all), S(keep, Eigen::all));
    return out;
}

CovarianceEstimate sandwich(const Eigen::MatrixXd& A_hat, const Eigen::MatrixXd& B_hat, std::size_t n) {
    if (A_hat.rows() != A_hat.cols() || A_hat.rows() != B_hat.rows() || B_hat.rows() != B_hat.cols())
        throw DomainError("sandwich: A and B must be square of equal size");
    if (n == 0) throw DomainError("sandwich: n must be positive");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A_hat);
    if (!lu.isInvertible()) {
        const Eigen::MatrixXd k = lu.kernel();
        throw RankDeficiencyError("sandwich: slope matrix is singular",
                                  std::vector<double>(k.col(0).data(), k.col(0).data() + k.rows()));
    }
    const Eigen::MatrixXd a_inv = lu.inverse();
    CovarianceEstimate out;
    out.method = CovMethod::Resampling;
    out.n = n;
    out.A_hat = A_hat;
    out.B_hat = B_hat;
    out.sigma = symmetric(a_inv * B_hat * a_inv.transpose() / static_cast<double>(n));
    return out;
}

CovarianceEstimate estimate_covariance(const Dataset& data, const Model& model, const ParamVector& theta_hat,
                                       CovMethod method, std::size_t resamples, std::uint64_t seed) {
    CovarianceEstimate info = empirical_information(data, model, theta_hat);
    if (method == CovMethod::Information) return info;
    const SlopeEstimate slope = resample_slope(data, model, theta_hat, resamples, seed);
    CovarianceEstimate out = sandwich(slope.A_hat, info.B_hat, data.size());
    out.resamples = slope.used;
    out.failed_resamples = slope.failed;
    return out;
}

std::size_t default_resamples(Variant v) {
    switch (v) {
        case Variant::AM: return 100;
        case Variant::Flex: return 1500;
        default: return 1000;
    }
}

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

std::vector<CoefficientRow> coefficient_table(const Model& model, const ParamVector& theta_hat,
                                              const CovarianceEstimate& cov, double ci_level) {
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw DomainError("coefficient_table: ci_level must be in (0, 1)");
    const Parameterization param(model);
    const Eigen::VectorXd est = param.to_free(theta_hat);
    const Eigen::VectorXd se = cov.se();
    if (se.size() != est.size()) throw DomainError("coefficient_table: covariance does not match the model");
    const double zq = normal_quantile(0.5 + 0.5 * ci_level);
    const std::vector<std::string> names = param.free_names();
    std::vector<CoefficientRow> rows;
    for (Eigen::Index k = 0; k < est.size(); ++k) {
        CoefficientRow r;
        r.name = names[static_cast<std::size_t>(k)];
        r.estimate = est[k];
        r.se = se[k];
        r.lower = r.estimate - zq * r.se;
        r.upper = r.estimate + zq * r.se;
        r.z = r.se > 0.0 ? r.estimate / r.se : 0.0;
        r.p_value = r.se > 0.0 ? std::erfc(std::abs(r.z) / std::sqrt(2.0)) : 0.0;
        rows.push_back(r);
    }
    return rows;
}

CurveBand curve_band(const Model& model, const ParamVector& theta_hat, const CovarianceEstimate& cov, CurveKind kind,
                     double from, double to, std::size_t points, double ci_level, double log_shift) {
    if (points < 2 || !(to > from)) throw DomainError("curve_band: need at least two points on a nonempty range");
    const Component& comp = kind == CurveKind::Alpha ? model.gamma : model.g;
    const Eigen::VectorXd& coef = kind == CurveKind::Alpha ? theta_hat.a : theta_hat.b;
    const Parameterization param(model);
    const auto offset = static_cast<Eigen::Index>(kind == CurveKind::Alpha ? model.dim_beta()
                                                                            : model.dim_beta() + model.dim_a());
    const double zq = normal_quantile(0.5 + 0.5 * ci_level);

    CurveBand band;
    for (std::size_t k = 0; k < points; ++k) {
        const double x = from + (to - from) * static_cast<double>(k) / static_cast<double>(points - 1);
        const double v = log_shift + comp.value(coef, x);
        double sd = 0.0;
        if (comp.is_spline()) {
            // Gradient of the log curve in full coordinates, pulled back to free ones.
            Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(param.full_dim()));
            const SplineBasis::Local loc = comp.basis().local(x);
            for (std::size_t j = 0; j < loc.count; ++j) full[offset + static_cast<Eigen::Index>(loc.first + j)] = loc.value[j];
            const Eigen::VectorXd g = param.pull_back(full);
            sd = std::sqrt(std::max(0.0, g.dot(cov.sigma * g)));
        }
        band.x.push_back(x);
        band.value.push_back(std::exp(v));
        band.lower.push_back(std::exp(v - zq * sd));
        band.upper.push_back(std::exp(v + zq * sd));
    }
    return band;
}

}  // namespace odereg
