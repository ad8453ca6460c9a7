#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "odereg/spline.hpp"

namespace odereg {

/// Special cases of the rate equation mu'(t) = alpha(t) exp(x'beta) q(mu(t)).
enum class Variant {
    Cox,   ///< q = 1, alpha estimated
    AM,    ///< alpha = 1, q estimated
    LT,    ///< q known, alpha estimated
    Flex,  ///< both estimated, beta_1 = 1 and alpha(t0) = 1
};

std::string to_string(Variant v);
Variant parse_variant(std::string_view name);

/// A known log-scale function (log alpha or log q) with its derivative.
struct LogFunction {
    std::function<double(double)> value;
    std::function<double(double)> derivative;
    std::string label;  ///< round-trippable description, e.g. "rational:1,0.5"
};

/// Parse a named known-q family into log q.
///
///   const            q(u) = 1
///   rational:s,c     q(u) = s / (1 + c u)
LogFunction parse_known_q(std::string_view text);

/// One of the two log-scale functions in the model: absent (identically zero),
/// a spline with free coefficients, or a fixed callable.
class Component {
public:
    static Component none() { return Component{}; }
    static Component spline(SplineBasis basis);
    static Component fixed(LogFunction fn);

    bool is_none() const noexcept { return !basis_ && !fixed_; }
    bool is_spline() const noexcept { return basis_.has_value(); }
    bool is_fixed() const noexcept { return fixed_.has_value(); }

    /// Number of coefficients (zero unless spline).
    std::size_t dim() const noexcept { return basis_ ? basis_->dim() : 0; }
    const SplineBasis& basis() const { return *basis_; }
    const LogFunction& fixed_function() const { return *fixed_; }

    double value(const Eigen::VectorXd& coef, double x) const;
    double derivative(const Eigen::VectorXd& coef, double x) const;

private:
    std::optional<SplineBasis> basis_;
    std::optional<LogFunction> fixed_;
};

struct SplineConfig {
    std::size_t order = 4;
    KnotRule rule = KnotRule::Equal;
    double exponent = 0.2;  ///< interior knot count ceil(N^exponent)
};

/// User-facing model description, realized into a Model once data are seen.
struct ModelSpec {
    Variant variant = Variant::Cox;
    SplineConfig gamma_config;
    SplineConfig g_config;
    std::optional<LogFunction> known_g;  ///< log q for the LT variant
    bool fix_beta1 = false;
    /// Anchor for alpha(t0) = 1. Engaged with a value, or median when
    /// anchor_at_median is set.
    std::optional<double> t0;
    bool anchor_at_median = false;

    /// Defaults: constraints active only for Flex.
    static ModelSpec for_variant(Variant v);
};

/// Realized model: bases fixed, ready for evaluation.
struct Model {
    Variant variant = Variant::Cox;
    std::size_t num_covariates = 0;
    Component gamma;  ///< log alpha(t)
    Component g;      ///< log q(u)
    bool fix_beta1 = false;
    std::optional<double> t0;

    std::size_t dim_beta() const noexcept { return num_covariates; }
    std::size_t dim_a() const noexcept { return gamma.dim(); }
    std::size_t dim_b() const noexcept { return g.dim(); }
    std::size_t full_dim() const noexcept { return dim_beta() + dim_a() + dim_b(); }
};

/// theta = (beta, a, b) in full (unconstrained) coordinates.
struct ParamVector {
    Eigen::VectorXd beta;
    Eigen::VectorXd a;
    Eigen::VectorXd b;

    static ParamVector zeros(const Model& model);
    static ParamVector from_flat(const Model& model, const Eigen::VectorXd& flat);
    Eigen::VectorXd flat() const;
};

/// Affine elimination of the identifiability constraints:
///   full = offset + T * free.
///
/// beta_1 is pinned to 1 when fix_beta1 is set. With an anchor t0, the
/// a-coefficient with the largest |A_j(t0)| is written as an affine function of
/// the others so that sum_j a_j A_j(t0) = 0 holds identically. T is block
/// diagonal between beta and the spline coefficients; free coordinates are
/// ordered [beta | a | b].
class Parameterization {
public:
    explicit Parameterization(const Model& model);

    std::size_t full_dim() const noexcept { return static_cast<std::size_t>(offset_.size()); }
    std::size_t free_dim() const noexcept { return static_cast<std::size_t>(jacobian_.cols()); }
    std::size_t beta_free() const noexcept { return beta_free_; }
    std::size_t spline_free() const noexcept { return free_dim() - beta_free_; }

    Eigen::VectorXd to_full(const Eigen::VectorXd& free) const;
    ParamVector to_params(const Eigen::VectorXd& free) const;
    /// Drops eliminated coordinates; `full` is assumed to satisfy the constraints.
    Eigen::VectorXd to_free(const Eigen::VectorXd& full) const;
    Eigen::VectorXd to_free(const ParamVector& theta) const { return to_free(theta.flat()); }
    /// Chain rule: gradient in free coordinates from a full-coordinate gradient.
    Eigen::VectorXd pull_back(const Eigen::VectorXd& full_gradient) const;

    const Eigen::MatrixXd& jacobian() const noexcept { return jacobian_; }
    const Eigen::VectorXd& offset() const noexcept { return offset_; }
    /// Full index of each free coordinate.
    const std::vector<std::size_t>& free_to_full() const noexcept { return free_to_full_; }
    /// Per full coordinate: true when it is a free parameter.
    std::vector<bool> free_mask() const;
    std::vector<std::string> free_names() const;
    /// Free index of beta_k, or nullopt when beta_k is fixed.
    std::optional<std::size_t> beta_free_index(std::size_t k) const;

private:
    Eigen::VectorXd offset_;
    Eigen::MatrixXd jacobian_;
    std::vector<std::size_t> free_to_full_;
    std::vector<std::string> full_names_;
    std::size_t beta_free_ = 0;
    std::size_t dim_beta_ = 0;
    std::size_t dim_a_ = 0;
};

}  // namespace odereg
