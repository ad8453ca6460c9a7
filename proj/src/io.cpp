#include "odereg/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "odereg/errors.hpp"

namespace odereg {

using nlohmann::json;

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw DomainError("format_double: conversion failed");
    return std::string(buf, ptr);
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

bool parse_double(std::string_view text, double& v) {
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    return ec == std::errc{} && ptr == text.data() + text.size() && std::isfinite(v);
}

struct Pending {
    std::size_t first_line = 0;
    Eigen::VectorXd x;
    std::vector<std::pair<double, std::size_t>> events;  // time, line
    double censor = -1.0;
    std::size_t censor_line = 0;
};

}  // namespace

Dataset parse_events_csv(std::istream& in, const std::string& source) {
    auto fail = [&](std::size_t line, const std::string& msg) -> ValidationError {
        return ValidationError(source + ":" + std::to_string(line) + ": " + msg);
    };
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ValidationError(source + ": empty file");
    ++lineno;
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const std::vector<std::string_view> header = split(line);
    if (header.size() < 3 || header[0] != "subject_id" || header[1] != "time" || header[2] != "status")
        throw fail(1, "header must start with subject_id,time,status");
    const std::size_t d = header.size() - 3;
    for (std::size_t k = 0; k < d; ++k)
        if (header[3 + k].empty()) throw fail(1, "empty covariate name in column " + std::to_string(4 + k));

    std::vector<std::string> order;
    std::map<std::string, Pending> pending;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::vector<std::string_view> f = split(line);
        if (f.size() != header.size())
            throw fail(lineno, "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
        const std::string id(f[0]);
        if (id.empty()) throw fail(lineno, "empty subject_id");
        const std::string who = " (subject " + id + ")";
        double t = 0.0;
        if (!parse_double(f[1], t)) throw fail(lineno, "time is not a number: '" + std::string(f[1]) + "'" + who);
        if (t < 0.0) throw fail(lineno, "negative time" + who);
        int status = -1;
        if (f[2] == "0") status = 0;
        if (f[2] == "1") status = 1;
        if (status < 0) throw fail(lineno, "status must be 0 or 1, found '" + std::string(f[2]) + "'" + who);
        Eigen::VectorXd x(static_cast<Eigen::Index>(d));
        for (std::size_t k = 0; k < d; ++k)
            if (!parse_double(f[3 + k], x[static_cast<Eigen::Index>(k)]))
                throw fail(lineno, "covariate " + std::string(header[3 + k]) + " is not a number: '" +
                                       std::string(f[3 + k]) + "'" + who);

        auto [it, inserted] = pending.try_emplace(id);
        Pending& p = it->second;
        if (inserted) {
            order.push_back(id);
            p.first_line = lineno;
            p.x = x;
        } else if (p.x != x) {
            throw fail(lineno, "covariates differ from line " + std::to_string(p.first_line) + who);
        }
        if (status == 1) {
            if (t == 0.0) throw fail(lineno, "event at time 0" + who);
            p.events.emplace_back(t, lineno);
        } else {
            if (p.censor_line)
                throw fail(lineno, "second censoring row; the first is on line " + std::to_string(p.censor_line) + who);
            p.censor = t;
            p.censor_line = lineno;
        }
    }

    Dataset data;
    data.num_covariates = d;
    for (const auto& id : order) {
        Pending& p = pending.at(id);
        if (!p.censor_line)
            throw ValidationError(source + ": subject " + id + " has no censoring row (status 0); first seen on line " +
                                  std::to_string(p.first_line));
        for (const auto& [t, ln] : p.events)
            if (t > p.censor)
                throw fail(ln, "event time " + format_double(t) + " after censoring time " + format_double(p.censor) +
                                   " (line " + std::to_string(p.censor_line) + ") (subject " + id + ")");
        Subject s;
        s.id = id;
        s.x = p.x;
        s.censor = p.censor;
        for (const auto& e : p.events) s.events.push_back(e.first);
        std::sort(s.events.begin(), s.events.end());
        data.subjects.push_back(std::move(s));
    }
    if (data.empty()) throw ValidationError(source + ": no data rows");
    data.validate();
    return data;
}

Dataset read_events_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    return parse_events_csv(in, path);
}

void write_events_csv(const Dataset& data, std::ostream& out) {
    out << "subject_id,time,status";
    for (std::size_t k = 0; k < data.num_covariates; ++k) out << ",x" << (k + 1);
    out << '\n';
    for (const auto& s : data.subjects) {
        std::string cov;
        for (Eigen::Index k = 0; k < s.x.size(); ++k) cov += "," + format_double(s.x[k]);
        for (double t : s.events) out << s.id << ',' << format_double(t) << ",1" << cov << '\n';
        out << s.id << ',' << format_double(s.censor) << ",0" << cov << '\n';
    }
}

std::string events_csv(const Dataset& data) {
    std::ostringstream os;
    write_events_csv(data, os);
    return os.str();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << contents;
        out.flush();
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// ---- JSON ------------------------------------------------------------------

namespace {

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd to_vec(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json component_to_json(const Component& c) {
    if (c.is_spline()) {
        const SplineBasis& b = c.basis();
        return {{"type", "spline"}, {"order", b.order()}, {"lower", b.lower()}, {"upper", b.upper()},
                {"knots", b.interior_knots()}};
    }
    if (c.is_fixed()) return {{"type", "fixed"}, {"label", c.fixed_function().label}};
    return {{"type", "none"}};
}

Component component_from_json(const json& j) {
    const std::string type = j.at("type");
    if (type == "spline")
        return Component::spline(SplineBasis(j.at("order").get<std::size_t>(), j.at("knots").get<std::vector<double>>(),
                                             j.at("lower").get<double>(), j.at("upper").get<double>()));
    if (type == "fixed") return Component::fixed(parse_known_q(j.at("label").get<std::string>()));
    if (type == "none") return Component::none();
    throw ValidationError("report: unknown component type '" + type + "'");
}

json theta_to_json(const ParamVector& t) { return {{"beta", vec(t.beta)}, {"a", vec(t.a)}, {"b", vec(t.b)}}; }

std::string rule_name(KnotRule r) { return r == KnotRule::Equal ? "equal" : "quantile"; }

json config_to_json(const SplineConfig& c) {
    return {{"order", c.order}, {"knot_rule", rule_name(c.rule)}, {"knot_exponent", c.exponent}};
}

}  // namespace

json model_to_json(const Model& m) {
    json j;
    j["variant"] = to_string(m.variant);
    j["num_covariates"] = m.num_covariates;
    j["fix_beta1"] = m.fix_beta1;
    j["t0"] = m.t0 ? json(*m.t0) : json(nullptr);
    j["log_alpha"] = component_to_json(m.gamma);
    j["log_q"] = component_to_json(m.g);
    return j;
}

Model model_from_json(const json& j) {
    try {
        Model m;
        m.variant = parse_variant(j.at("variant").get<std::string>());
        m.num_covariates = j.at("num_covariates").get<std::size_t>();
        m.fix_beta1 = j.at("fix_beta1").get<bool>();
        if (!j.at("t0").is_null()) m.t0 = j.at("t0").get<double>();
        m.gamma = component_from_json(j.at("log_alpha"));
        m.g = component_from_json(j.at("log_q"));
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("report: malformed model: ") + e.what());
    }
}

json fit_to_json(const FitResult& fit) {
    json j;
    j["model"] = model_to_json(fit.model);
    json spec;
    spec["variant"] = to_string(fit.spec.variant);
    spec["gamma_config"] = config_to_json(fit.spec.gamma_config);
    spec["g_config"] = config_to_json(fit.spec.g_config);
    spec["known_q"] = fit.spec.known_g ? json(fit.spec.known_g->label) : json(nullptr);
    j["spec"] = spec;
    j["theta"] = theta_to_json(fit.theta_hat);
    j["theta_init"] = theta_to_json(fit.theta_init);
    j["free_names"] = Parameterization(fit.model).free_names();
    j["loglik"] = fit.loglik;
    j["converged"] = fit.converged;
    j["outer_iterations"] = fit.outer_iterations;
    j["gradient_norm"] = fit.gradient_norm;
    j["message"] = fit.message;
    j["knots"] = {{"log_alpha", fit.model.gamma.is_spline() ? json(fit.model.gamma.basis().interior_knots()) : json::array()},
                  {"log_q", fit.model.g.is_spline() ? json(fit.model.g.basis().interior_knots()) : json::array()}};
    return j;
}

void fit_from_json(const json& j, Model& model, ParamVector& theta) {
    model = model_from_json(j.at("model"));
    try {
        const json& t = j.at("theta");
        theta.beta = to_vec(t.at("beta"));
        theta.a = to_vec(t.at("a"));
        theta.b = to_vec(t.at("b"));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("report: malformed theta: ") + e.what());
    }
    if (static_cast<std::size_t>(theta.beta.size()) != model.dim_beta() ||
        static_cast<std::size_t>(theta.a.size()) != model.dim_a() ||
        static_cast<std::size_t>(theta.b.size()) != model.dim_b())
        throw ValidationError("report: theta does not match the model dimensions");
}

json covariance_to_json(const Model& model, const ParamVector& theta, const CovarianceEstimate& cov, double ci_level) {
    json j;
    j["method"] = to_string(cov.method);
    j["n"] = cov.n;
    j["ci_level"] = ci_level;
    if (cov.method == CovMethod::Resampling) {
        j["resamples"] = cov.resamples;
        j["failed_resamples"] = cov.failed_resamples;
    }
    j["free_names"] = Parameterization(model).free_names();
    auto matrix = [](const Eigen::MatrixXd& m) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec(m.row(r).transpose()));
        return rows;
    };
    j["sigma"] = matrix(cov.sigma);
    j["A_hat"] = matrix(cov.A_hat);
    j["B_hat"] = matrix(cov.B_hat);
    json table = json::array();
    for (const auto& r : coefficient_table(model, theta, cov, ci_level))
        table.push_back({{"name", r.name}, {"estimate", r.estimate}, {"se", r.se}, {"lower", r.lower},
                         {"upper", r.upper}, {"z", r.z}, {"p_value", r.p_value}});
    j["coefficients"] = table;
    return j;
}

std::string curve_csv(const CurveBand& band, const std::string& x_name, const std::string& value_name) {
    std::string out = x_name + "," + value_name + ",lo,hi\n";
    for (std::size_t k = 0; k < band.x.size(); ++k)
        out += format_double(band.x[k]) + "," + format_double(band.value[k]) + "," + format_double(band.lower[k]) +
               "," + format_double(band.upper[k]) + "\n";
    return out;
}

std::string mc_table_csv(const McSummary& s) {
    std::string out = "coefficient,truth,bias,se,ese,cp,used,failed,unconverged\n";
    for (const auto& r : s.rows)
        out += r.name + "," + format_double(r.truth) + "," + format_double(r.bias) + "," + format_double(r.se) + "," +
               format_double(r.ese) + "," + format_double(r.cp) + "," + std::to_string(r.used) + "," +
               std::to_string(s.failed) + "," + std::to_string(s.unconverged) + "\n";
    return out;
}

std::string mc_curves_csv(const McCurve& c) {
    const std::string x = c.kind == "alpha" ? "t" : "u";
    std::string out = x + ",truth,mean,lo,hi,coverage\n";
    for (std::size_t k = 0; k < c.x.size(); ++k)
        out += format_double(c.x[k]) + "," + format_double(c.truth[k]) + "," + format_double(c.mean[k]) + "," +
               format_double(c.lower[k]) + "," + format_double(c.upper[k]) + "," + format_double(c.coverage[k]) + "\n";
    return out;
}

}  // namespace odereg
