#include "odereg/spline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "odereg/errors.hpp"

namespace odereg {

std::size_t knot_count(std::size_t total_events, double exponent) {
    if (total_events == 0) throw DomainError("knot_count: total event count must be positive");
    if (!(exponent > 0.0 && exponent < 0.5)) throw DomainError("knot_count: exponent must lie in (0, 0.5)");
    const double r = std::pow(static_cast<double>(total_events), exponent);
    const double nearest = std::round(r);
    if (std::abs(r - nearest) <= 1e-9 * nearest) return static_cast<std::size_t>(nearest);
    return static_cast<std::size_t>(std::ceil(r));
}

std::vector<double> make_knots(std::span<const double> values, KnotRule rule, std::size_t count,
                               double lower, double upper) {
    if (!(lower < upper)) throw DomainError("make_knots: lower boundary must be below upper");
    std::vector<double> knots;
    knots.reserve(count);
    if (rule == KnotRule::Equal) {
        const double width = (upper - lower) / static_cast<double>(count + 1);
        for (std::size_t j = 1; j <= count; ++j) knots.push_back(lower + width * static_cast<double>(j));
        return knots;
    }

    if (values.empty()) throw DegenerateKnotsError("make_knots: quantile rule needs at least one value");
    std::vector<double> distinct(values.begin(), values.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.front() < lower || distinct.back() > upper)
        throw DomainError("make_knots: quantile values must lie within the boundary");

    const double m = static_cast<double>(distinct.size());
    for (std::size_t j = 1; j <= count; ++j) {
        const double p = static_cast<double>(j) / static_cast<double>(count + 1);
        const double h = (m - 1.0) * p;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, distinct.size() - 1);
        knots.push_back(distinct[lo] + (h - static_cast<double>(lo)) * (distinct[hi] - distinct[lo]));
    }

    const double nudge = (upper - lower) * 1e-9;
    double prev = lower;
    for (double& k : knots) {
        if (k <= prev) k = prev + nudge;
        prev = k;
    }
    if (knots.back() >= upper)
        throw DegenerateKnotsError("make_knots: cannot place " + std::to_string(count) +
                                   " distinct interior knots inside the boundary");
    return knots;
}

SplineBasis::SplineBasis(std::size_t order, std::vector<double> interior_knots, double lower, double upper)
    : order_(order), interior_(std::move(interior_knots)), lower_(lower), upper_(upper) {
    if (order_ < 1 || order_ > kMaxOrder)
        throw DomainError("SplineBasis: order must lie in [1, " + std::to_string(kMaxOrder) + "]");
    if (!(std::isfinite(lower_) && std::isfinite(upper_) && lower_ < upper_))
        throw DomainError("SplineBasis: boundary must be finite with lower < upper");
    for (std::size_t i = 0; i < interior_.size(); ++i) {
        if (!(interior_[i] > lower_ && interior_[i] < upper_))
            throw DomainError("SplineBasis: interior knots must lie strictly inside the boundary");
        if (i > 0 && !(interior_[i] > interior_[i - 1]))
            throw DomainError("SplineBasis: interior knots must be strictly increasing");
    }
    knots_.assign(order_, lower_);
    knots_.insert(knots_.end(), interior_.begin(), interior_.end());
    knots_.insert(knots_.end(), order_, upper_);
    inside(lower_, at_lower_);
    inside(upper_, at_upper_);
}

std::vector<double> SplineBasis::breakpoints() const {
    std::vector<double> out;
    out.reserve(interior_.size() + 2);
    out.push_back(lower_);
    out.insert(out.end(), interior_.begin(), interior_.end());
    out.push_back(upper_);
    return out;
}

void SplineBasis::inside(double t, Local& out) const {
    const std::size_t p = order_ - 1;
    const std::size_t n = dim();
    // Span s with knots[s] <= t < knots[s + 1]; t == upper uses the last nonempty span.
    auto it = std::upper_bound(knots_.begin() + static_cast<std::ptrdiff_t>(p),
                               knots_.begin() + static_cast<std::ptrdiff_t>(n), t);
    std::size_t s = static_cast<std::size_t>(it - knots_.begin()) - 1;
    s = std::clamp(s, p, n - 1);

    out.first = s - p;
    out.count = order_;
    if (p == 0) {
        out.value[0] = 1.0;
        out.slope[0] = 0.0;
        return;
    }

    std::array<double, kMaxOrder> basis{};
    std::array<double, kMaxOrder> lower_degree{};
    std::array<double, kMaxOrder> left{};
    std::array<double, kMaxOrder> right{};
    basis[0] = 1.0;
    for (std::size_t j = 1; j <= p; ++j) {
        left[j] = t - knots_[s + 1 - j];
        right[j] = knots_[s + j] - t;
        double saved = 0.0;
        for (std::size_t r = 0; r < j; ++r) {
            const double temp = basis[r] / (right[r + 1] + left[j - r]);
            basis[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        basis[j] = saved;
        if (j == p - 1) lower_degree = basis;
    }
    if (p == 1) {
        lower_degree = {};
        lower_degree[0] = 1.0;
    }

    const double deg = static_cast<double>(p);
    for (std::size_t k = 0; k <= p; ++k) {
        const std::size_t i = s - p + k;
        double d = 0.0;
        if (k >= 1) d += deg / (knots_[i + p] - knots_[i]) * lower_degree[k - 1];
        if (k <= p - 1) d -= deg / (knots_[i + p + 1] - knots_[i + 1]) * lower_degree[k];
        out.value[k] = basis[k];
        out.slope[k] = d;
    }
}

SplineBasis::Local SplineBasis::local(double t) const {
    if (!std::isfinite(t)) throw DomainError("SplineBasis: evaluation point must be finite");
    if (t < lower_ || t > upper_) {
        Local out = t < lower_ ? at_lower_ : at_upper_;
        const double dt = t - (t < lower_ ? lower_ : upper_);
        for (std::size_t k = 0; k < out.count; ++k) out.value[k] += out.slope[k] * dt;
        return out;
    }
    Local out;
    inside(t, out);
    return out;
}

std::vector<double> SplineBasis::eval(double t) const {
    const Local loc = local(t);
    std::vector<double> out(dim(), 0.0);
    for (std::size_t k = 0; k < loc.count; ++k) out[loc.first + k] = loc.value[k];
    return out;
}

std::vector<double> SplineBasis::eval_deriv(double t) const {
    const Local loc = local(t);
    std::vector<double> out(dim(), 0.0);
    for (std::size_t k = 0; k < loc.count; ++k) out[loc.first + k] = loc.slope[k];
    return out;
}

double SplineBasis::combine(std::span<const double> coef, double t) const {
    const Local loc = local(t);
    double sum = 0.0;
    for (std::size_t k = 0; k < loc.count; ++k) sum += coef[loc.first + k] * loc.value[k];
    return sum;
}

double SplineBasis::combine_deriv(std::span<const double> coef, double t) const {
    const Local loc = local(t);
    double sum = 0.0;
    for (std::size_t k = 0; k < loc.count; ++k) sum += coef[loc.first + k] * loc.slope[k];
    return sum;
}

}  // namespace odereg
