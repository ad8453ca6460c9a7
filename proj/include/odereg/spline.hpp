#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace odereg {

enum class KnotRule { Equal, Quantile };

/// Number of interior knots for a sieve of growth rate `exponent`: ceil(N^exponent).
///
/// Powers that land within 1e-9 (relative) of an integer are snapped to it, so
/// 32^(1/5) yields 2 even though pow() returns 2.0000000000000004.
std::size_t knot_count(std::size_t total_events, double exponent);

/// Interior knots on (lower, upper).
///
/// Equal: `count` knots splitting [lower, upper] into count+1 equal pieces.
/// Quantile: type-7 empirical quantiles at j/(count+1) of the distinct entries of
/// `values` (which must be sorted). Coincident or boundary-touching knots are
/// nudged apart by (upper - lower) * 1e-9; throws DegenerateKnotsError when
/// that still cannot yield `count` knots strictly inside the boundary.
std::vector<double> make_knots(std::span<const double> values, KnotRule rule, std::size_t count,
                               double lower, double upper);

/// Polynomial B-spline basis on a clamped knot vector.
///
/// The boundary knots are repeated `order` times, so dim() = interior + order.
/// Inside [lower, upper] the basis is evaluated by the Cox-de Boor recursion;
/// outside, every basis function is continued linearly from the nearer boundary
/// using its one-sided value and slope there.
///
/// Instances are immutable and safe to share between threads.
class SplineBasis {
public:
    static constexpr std::size_t kMaxOrder = 8;

    /// Nonzero basis functions at a point: indices first .. first + count - 1.
    struct Local {
        std::size_t first = 0;
        std::size_t count = 0;
        std::array<double, kMaxOrder> value{};
        std::array<double, kMaxOrder> slope{};
    };

    SplineBasis(std::size_t order, std::vector<double> interior_knots, double lower, double upper);

    std::size_t order() const noexcept { return order_; }
    std::size_t dim() const noexcept { return interior_.size() + order_; }
    double lower() const noexcept { return lower_; }
    double upper() const noexcept { return upper_; }
    const std::vector<double>& interior_knots() const noexcept { return interior_; }

    /// Breakpoints lower, interior..., upper.
    std::vector<double> breakpoints() const;

    Local local(double t) const;

    std::vector<double> eval(double t) const;
    std::vector<double> eval_deriv(double t) const;

    /// sum_j coef_j * B_j(t) and its derivative.
    double combine(std::span<const double> coef, double t) const;
    double combine_deriv(std::span<const double> coef, double t) const;

private:
    // Cox-de Boor on the clamped knot vector for t in [lower, upper].
    void inside(double t, Local& out) const;

    std::size_t order_;
    std::vector<double> interior_;
    double lower_;
    double upper_;
    std::vector<double> knots_;  // full clamped vector
    Local at_lower_;
    Local at_upper_;
};

}  // namespace odereg
