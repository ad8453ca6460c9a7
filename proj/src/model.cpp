#include "odereg/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "odereg/data.hpp"
#include "odereg/errors.hpp"

namespace odereg {

// ---- Dataset ---------------------------------------------------------------

std::size_t Dataset::total_events() const {
    std::size_t n = 0;
    for (const auto& s : subjects) n += s.events.size();
    return n;
}

std::vector<double> Dataset::pooled_event_times() const {
    std::vector<double> out;
    out.reserve(total_events());
    for (const auto& s : subjects) out.insert(out.end(), s.events.begin(), s.events.end());
    std::sort(out.begin(), out.end());
    return out;
}

double Dataset::max_time() const {
    double m = 0.0;
    for (const auto& s : subjects) {
        m = std::max(m, s.censor);
        if (!s.events.empty()) m = std::max(m, s.events.back());
    }
    return m;
}

void Dataset::validate() const {
    for (const auto& s : subjects) {
        if (static_cast<std::size_t>(s.x.size()) != num_covariates)
            throw ValidationError("subject " + s.id + ": expected " + std::to_string(num_covariates) +
                                  " covariates, found " + std::to_string(s.x.size()));
        if (!s.x.allFinite()) throw ValidationError("subject " + s.id + ": non-finite covariate");
        if (!(std::isfinite(s.censor) && s.censor >= 0.0))
            throw ValidationError("subject " + s.id + ": censoring time must be finite and nonnegative");
        double prev = 0.0;
        for (double t : s.events) {
            if (!(t > 0.0)) throw ValidationError("subject " + s.id + ": event times must be positive");
            if (t < prev) throw ValidationError("subject " + s.id + ": event times must be sorted");
            if (t > s.censor) throw ValidationError("subject " + s.id + ": event after censoring time");
            prev = t;
        }
    }
}

// ---- Variant / known functions ---------------------------------------------

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Cox: return "cox";
        case Variant::AM: return "am";
        case Variant::LT: return "lt";
        case Variant::Flex: return "flex";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    if (name == "cox") return Variant::Cox;
    if (name == "am") return Variant::AM;
    if (name == "lt") return Variant::LT;
    if (name == "flex") return Variant::Flex;
    throw ValidationError("unknown variant '" + std::string(name) + "' (expected cox|am|lt|flex)");
}

namespace {

double parse_number(std::string_view text) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ValidationError("not a number: '" + std::string(text) + "'");
    return v;
}

}  // namespace

LogFunction parse_known_q(std::string_view text) {
    if (text == "const") {
        return {[](double) { return 0.0; }, [](double) { return 0.0; }, "const"};
    }
    constexpr std::string_view prefix = "rational:";
    if (text.substr(0, prefix.size()) == prefix) {
        const std::string_view args = text.substr(prefix.size());
        const auto comma = args.find(',');
        if (comma == std::string_view::npos) throw ValidationError("rational known-q needs 's,c'");
        const double s = parse_number(args.substr(0, comma));
        const double c = parse_number(args.substr(comma + 1));
        if (!(s > 0.0) || c < 0.0) throw ValidationError("rational known-q needs s > 0 and c >= 0");
        const double log_s = std::log(s);
        return {[log_s, c](double u) { return log_s - std::log1p(c * u); },
                [c](double u) { return -c / (1.0 + c * u); }, std::string(text)};
    }
    throw ValidationError("unknown known-q family '" + std::string(text) + "' (expected const | rational:s,c)");
}

// ---- Component -------------------------------------------------------------

Component Component::spline(SplineBasis basis) {
    Component c;
    c.basis_.emplace(std::move(basis));
    return c;
}

Component Component::fixed(LogFunction fn) {
    Component c;
    c.fixed_.emplace(std::move(fn));
    return c;
}

double Component::value(const Eigen::VectorXd& coef, double x) const {
    if (basis_) return basis_->combine({coef.data(), static_cast<std::size_t>(coef.size())}, x);
    if (fixed_) return fixed_->value(x);
    return 0.0;
}

double Component::derivative(const Eigen::VectorXd& coef, double x) const {
    if (basis_) return basis_->combine_deriv({coef.data(), static_cast<std::size_t>(coef.size())}, x);
    if (fixed_) return fixed_->derivative(x);
    return 0.0;
}

ModelSpec ModelSpec::for_variant(Variant v) {
    ModelSpec spec;
    spec.variant = v;
    if (v == Variant::Flex) {
        spec.fix_beta1 = true;
        spec.anchor_at_median = true;
    }
    return spec;
}

// ---- ParamVector -----------------------------------------------------------

ParamVector ParamVector::zeros(const Model& model) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dim_beta())),
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dim_a())),
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dim_b()))};
}

ParamVector ParamVector::from_flat(const Model& model, const Eigen::VectorXd& flat) {
    const auto nb = static_cast<Eigen::Index>(model.dim_beta());
    const auto na = static_cast<Eigen::Index>(model.dim_a());
    const auto ng = static_cast<Eigen::Index>(model.dim_b());
    if (flat.size() != nb + na + ng) throw DomainError("ParamVector: flat vector has the wrong length");
    return {flat.segment(0, nb), flat.segment(nb, na), flat.segment(nb + na, ng)};
}

Eigen::VectorXd ParamVector::flat() const {
    Eigen::VectorXd out(beta.size() + a.size() + b.size());
    out << beta, a, b;
    return out;
}

// ---- Parameterization ------------------------------------------------------

Parameterization::Parameterization(const Model& model) {
    const std::size_t nb = model.dim_beta();
    const std::size_t na = model.dim_a();
    const std::size_t ng = model.dim_b();
    const std::size_t full = nb + na + ng;
    dim_beta_ = nb;
    dim_a_ = na;
    offset_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(full));

    for (std::size_t k = 0; k < nb; ++k) full_names_.push_back("beta" + std::to_string(k + 1));
    for (std::size_t k = 0; k < na; ++k) full_names_.push_back("a" + std::to_string(k + 1));
    for (std::size_t k = 0; k < ng; ++k) full_names_.push_back("b" + std::to_string(k + 1));

    if (model.fix_beta1 && nb == 0) throw DomainError("Parameterization: beta_1 constraint without covariates");
    std::optional<std::size_t> eliminated;  // full index of the dependent a-coefficient
    std::vector<double> anchor;
    if (model.t0) {
        if (!model.gamma.is_spline()) throw DomainError("Parameterization: anchor t0 needs a spline for log alpha");
        anchor = model.gamma.basis().eval(*model.t0);
        std::size_t r = 0;
        for (std::size_t j = 1; j < na; ++j)
            if (std::abs(anchor[j]) > std::abs(anchor[r])) r = j;
        if (anchor[r] == 0.0) throw DomainError("Parameterization: no basis function is active at t0");
        eliminated = nb + r;
    }

    for (std::size_t i = 0; i < full; ++i) {
        if (model.fix_beta1 && i == 0) continue;
        if (eliminated && i == *eliminated) continue;
        free_to_full_.push_back(i);
        if (i < nb) ++beta_free_;
    }
    jacobian_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(full), static_cast<Eigen::Index>(free_to_full_.size()));
    for (std::size_t c = 0; c < free_to_full_.size(); ++c)
        jacobian_(static_cast<Eigen::Index>(free_to_full_[c]), static_cast<Eigen::Index>(c)) = 1.0;
    if (model.fix_beta1) offset_[0] = 1.0;
    if (eliminated) {
        const std::size_t r = *eliminated - nb;
        for (std::size_t c = 0; c < free_to_full_.size(); ++c) {
            const std::size_t i = free_to_full_[c];
            if (i < nb || i >= nb + na) continue;
            jacobian_(static_cast<Eigen::Index>(*eliminated), static_cast<Eigen::Index>(c)) =
                -anchor[i - nb] / anchor[r];
        }
    }
}

Eigen::VectorXd Parameterization::to_full(const Eigen::VectorXd& free) const {
    return offset_ + jacobian_ * free;
}

ParamVector Parameterization::to_params(const Eigen::VectorXd& free) const {
    const Eigen::VectorXd full = to_full(free);
    const auto nb = static_cast<Eigen::Index>(dim_beta_);
    const auto na = static_cast<Eigen::Index>(dim_a_);
    return {full.segment(0, nb), full.segment(nb, na), full.segment(nb + na, full.size() - nb - na)};
}

Eigen::VectorXd Parameterization::to_free(const Eigen::VectorXd& full) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(free_to_full_.size()));
    for (std::size_t c = 0; c < free_to_full_.size(); ++c)
        out[static_cast<Eigen::Index>(c)] = full[static_cast<Eigen::Index>(free_to_full_[c])];
    return out;
}

Eigen::VectorXd Parameterization::pull_back(const Eigen::VectorXd& full_gradient) const {
    return jacobian_.transpose() * full_gradient;
}

std::vector<bool> Parameterization::free_mask() const {
    std::vector<bool> mask(full_dim(), false);
    for (auto i : free_to_full_) mask[i] = true;
    return mask;
}

std::vector<std::string> Parameterization::free_names() const {
    std::vector<std::string> out;
    for (auto i : free_to_full_) out.push_back(full_names_[i]);
    return out;
}

std::optional<std::size_t> Parameterization::beta_free_index(std::size_t k) const {
    for (std::size_t c = 0; c < beta_free_; ++c)
        if (free_to_full_[c] == k) return c;
    return std::nullopt;
}

}  // namespace odereg
